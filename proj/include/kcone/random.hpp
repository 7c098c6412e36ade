#pragma once

#include <cstdint>
#include <random>

#include "kcone/types.hpp"

namespace kcone {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seed for stream `stream` of a run seeded with `master`. Depends only on the
// two integers, never on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

Vec random_gaussian(Eigen::Index n, Rng& rng);
Vec random_unit(Eigen::Index n, Rng& rng);

// Orthonormal n x m frame from the QR factorization of a Gaussian matrix.
Mat random_frame(Eigen::Index n, Eigen::Index m, Rng& rng);

// Uniform point in a box.
Vec random_in_box(const Box& box, Rng& rng);

}  // namespace kcone
