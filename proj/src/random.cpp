#include "kcone/random.hpp"

#include "kcone/flow.hpp"

namespace kcone {

Vec random_gaussian(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

Vec random_unit(Eigen::Index n, Rng& rng) {
  Vec v = random_gaussian(n, rng);
  while (v.norm() == 0.0) v = random_gaussian(n, rng);
  return v.normalized();
}

Mat random_frame(Eigen::Index n, Eigen::Index m, Rng& rng) {
  Mat G(n, m);
  for (Eigen::Index j = 0; j < m; ++j) G.col(j) = random_gaussian(n, rng);
  return positive_qr(G).first;
}

Vec random_in_box(const Box& box, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(box.dim());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i) = box.lo(i) + unit(rng) * (box.hi(i) - box.lo(i));
  return x;
}

}  // namespace kcone
