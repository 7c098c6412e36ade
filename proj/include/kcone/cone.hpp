#pragma once

#include <variant>

#include <nlohmann/json_fwd.hpp>

#include "kcone/types.hpp"

namespace kcone {

// C^-(P) = {x : x^T P x <= 0}; rank_k counts the negative eigenvalues of P.
struct QuadraticCone {
  Mat P;
  Vec eigenvalues;   // ascending
  Mat eigenvectors;  // orthonormal columns, matching eigenvalues
  int rank_k = 0;
};

// K u (-K) for K the nonnegative orthant; always rank 1.
struct OrthantCone {
  int n = 0;
};

class ConeSpec {
 public:
  ConeSpec() = default;
  explicit ConeSpec(QuadraticCone q) : cone_(std::move(q)) {}
  explicit ConeSpec(OrthantCone o) : cone_(o) {}

  int dim() const;
  int rank() const;
  bool is_quadratic() const { return std::holds_alternative<QuadraticCone>(cone_); }
  const QuadraticCone& quadratic() const;

  const std::variant<QuadraticCone, OrthantCone>& variant() const { return cone_; }

 private:
  std::variant<QuadraticCone, OrthantCone> cone_{OrthantCone{1}};
};

ConeSpec make_quadratic_cone(const Mat& P);
ConeSpec make_orthant_cone(int n);

enum class Membership { Interior, Boundary, Outside };

struct MembershipVerdict {
  Membership kind = Membership::Boundary;
  // Quadratic: x^T P x / |x|^2. Orthant: -max_s min_i (s x_i) / |x|.
  // Negative inside, positive outside.
  double margin = 0.0;
};

inline constexpr double kDefaultConeTol = 1e-8;

MembershipVerdict membership(const ConeSpec& cone, const Vec& x,
                             double tol = kDefaultConeTol);

enum class Order { StronglyOrdered, Ordered, Unordered };

Order ordered(const ConeSpec& cone, const Vec& x, const Vec& y,
              double tol = kDefaultConeTol);

// Euclidean distance from v to the cone. Quadratic cones solve the projection
// KKT system in the eigenbasis of P; the orthant double cone is handled
// componentwise.
double distance_to_cone(const ConeSpec& cone, const Vec& v);

// Gap metric between span(L1) and span(L2) for orthonormal frames.
double gap_distance(const Mat& L1, const Mat& L2);

// Throws NonOrthonormalFrame unless |L^T L - I|_max <= tol.
void require_orthonormal(const Mat& L, double tol = 1e-10);

const char* to_string(Membership m);
const char* to_string(Order o);

void to_json(nlohmann::json& j, const ConeSpec& cone);
ConeSpec cone_from_json(const nlohmann::json& j);

}  // namespace kcone
