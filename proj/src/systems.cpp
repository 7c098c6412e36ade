#include "kcone/systems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kcone/json_io.hpp"

namespace kcone {

SystemDef linear_system(const Mat& A, std::string name, std::optional<ConeSpec> cone) {
  require(A.rows() == A.cols() && A.rows() > 0, ErrorCode::DimensionMismatch,
          "linear_system: A must be square");
  SystemDef sys;
  sys.name = std::move(name);
  sys.description = "linear field x' = A x";
  sys.n = static_cast<int>(A.rows());
  sys.field = [A](const Vec& x) -> Vec { return A * x; };
  sys.jacobian = [A](const Vec&) -> Mat { return A; };
  sys.domain_box = cube(A.rows(), -10.0, 10.0);
  if (cone) {
    require(cone->dim() == sys.n, ErrorCode::DimensionMismatch,
            "linear_system: cone dimension mismatch");
  }
  sys.cone = std::move(cone);
  return sys;
}

SystemDef linear_diag(const Vec& diagonal, std::optional<ConeSpec> cone) {
  std::ostringstream name;
  name << "linear_diag(";
  for (Eigen::Index i = 0; i < diagonal.size(); ++i)
    name << (i ? "," : "") << diagonal(i);
  name << ")";
  return linear_system(diagonal.asDiagonal().toDenseMatrix(), name.str(),
                       std::move(cone));
}

SystemDef cyclic_feedback(int n, double alpha, double hill) {
  require(n >= 2 && alpha > 0.0 && hill > 0.0, ErrorCode::InvalidArgument,
          "cyclic_feedback: need n >= 2, alpha > 0, hill > 0");
  SystemDef sys;
  std::ostringstream name;
  name << "cyclic_feedback(" << n << "," << alpha << "," << hill << ")";
  sys.name = name.str();
  sys.description = "negative cyclic feedback loop (no certified cone)";
  sys.n = n;
  sys.field = [n, alpha, hill](const Vec& x) -> Vec {
    Vec f(n);
    const double xn = std::max(x(n - 1), 0.0);
    f(0) = 1.0 / (1.0 + std::pow(xn, hill)) - alpha * x(0);
    for (int i = 1; i < n; ++i) f(i) = x(i - 1) - alpha * x(i);
    return f;
  };
  sys.jacobian = [n, alpha, hill](const Vec& x) -> Mat {
    Mat J = Mat::Zero(n, n);
    const double xn = std::max(x(n - 1), 0.0);
    const double p = std::pow(xn, hill);
    J(0, n - 1) = xn > 0.0 ? -hill * p / xn / ((1.0 + p) * (1.0 + p)) : 0.0;
    for (int i = 0; i < n; ++i) J(i, i) = -alpha;
    for (int i = 1; i < n; ++i) J(i, i - 1) = 1.0;
    return J;
  };
  Vec hi(n);
  double bound = 1.0;
  for (int i = 0; i < n; ++i) {
    bound /= alpha;
    hi(i) = 1.01 * bound;
  }
  sys.domain_box = make_box(Vec::Zero(n), hi);
  return sys;
}

namespace {

constexpr double kTailCoupling = 0.1;

// Damped tail x_j' = -c_j x_j + eps x_{j-1} shared by the oscillator fixtures.
void add_tail(const Vec& x, Vec& f, double c_base) {
  for (Eigen::Index j = 2; j < x.size(); ++j)
    f(j) = -(c_base + 2.0 * static_cast<double>(j - 2)) * x(j) +
           kTailCoupling * x(j - 1);
}

void add_tail_jacobian(Mat& J, double c_base) {
  for (Eigen::Index j = 2; j < J.rows(); ++j) {
    J(j, j) = -(c_base + 2.0 * static_cast<double>(j - 2));
    J(j, j - 1) = kTailCoupling;
  }
}

ConeSpec oscillator_cone(int n, double kappa) {
  Vec d = Vec::Constant(n, kappa);
  d(0) = -1.0;
  d(1) = -1.0;
  return make_quadratic_cone(d.asDiagonal().toDenseMatrix());
}

}  // namespace

SystemDef smith_oscillator(int n, double kappa) {
  require(n >= 3 && kappa > 0.0, ErrorCode::InvalidArgument,
          "smith_oscillator: need n >= 3 and kappa > 0");
  constexpr double mu = 1.0;
  constexpr double c_base = 20.0;
  SystemDef sys;
  sys.name = "smith_oscillator(" + std::to_string(n) + ")";
  sys.description = "van der Pol core with damped tail, rank-2 quadratic cone";
  sys.n = n;
  sys.field = [n](const Vec& x) -> Vec {
    Vec f(n);
    f(0) = x(1);
    f(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
    add_tail(x, f, c_base);
    return f;
  };
  sys.jacobian = [n](const Vec& x) -> Mat {
    Mat J = Mat::Zero(n, n);
    J(0, 1) = 1.0;
    J(1, 0) = -2.0 * mu * x(0) * x(1) - 1.0;
    J(1, 1) = mu * (1.0 - x(0) * x(0));
    add_tail_jacobian(J, c_base);
    return J;
  };
  Vec lo = Vec::Constant(n, -1.0);
  Vec hi = Vec::Constant(n, 1.0);
  lo.head(2) << -3.0, -4.0;
  hi.head(2) << 3.0, 4.0;
  sys.domain_box = make_box(lo, hi);
  sys.cone = oscillator_cone(n, kappa);
  return sys;
}

SystemDef smith_two_cycle(int n, double kappa) {
  require(n >= 3 && kappa > 0.0, ErrorCode::InvalidArgument,
          "smith_two_cycle: need n >= 3 and kappa > 0");
  // r' = r g(r), g(r) = -beta (r - 1)(r - 2)(r - 3); theta' = 1 + 0.1 r^2.
  constexpr double beta = 0.5;
  constexpr double c_base = 100.0;
  SystemDef sys;
  sys.name = "smith_two_cycle(" + std::to_string(n) + ")";
  sys.description = "planar oscillator with cycles at r = 1 and r = 3, damped tail";
  sys.n = n;
  sys.field = [n](const Vec& x) -> Vec {
    const double s = x(0) * x(0) + x(1) * x(1);
    const double r = std::sqrt(s);
    const double g = -beta * (r - 1.0) * (r - 2.0) * (r - 3.0);
    const double w = 1.0 + 0.1 * s;
    Vec f(n);
    f(0) = g * x(0) - w * x(1);
    f(1) = g * x(1) + w * x(0);
    add_tail(x, f, c_base);
    return f;
  };
  sys.jacobian = [n](const Vec& x) -> Mat {
    const double s = x(0) * x(0) + x(1) * x(1);
    const double r = std::sqrt(s);
    const double g = -beta * (r - 1.0) * (r - 2.0) * (r - 3.0);
    const double dg = -beta * ((r - 2.0) * (r - 3.0) + (r - 1.0) * (r - 3.0) +
                               (r - 1.0) * (r - 2.0));
    const double g_over_r = r > 1e-300 ? dg / r : 0.0;  // d g / d x_i = g_over_r x_i
    const double w = 1.0 + 0.1 * s;
    Mat J = Mat::Zero(n, n);
    J(0, 0) = g + g_over_r * x(0) * x(0) - 0.2 * x(0) * x(1);
    J(0, 1) = g_over_r * x(0) * x(1) - w - 0.2 * x(1) * x(1);
    J(1, 0) = g_over_r * x(0) * x(1) + w + 0.2 * x(0) * x(0);
    J(1, 1) = g + g_over_r * x(1) * x(1) + 0.2 * x(0) * x(1);
    add_tail_jacobian(J, c_base);
    return J;
  };
  Vec lo = Vec::Constant(n, -1.0);
  Vec hi = Vec::Constant(n, 1.0);
  lo.head(2).setConstant(-3.6);
  hi.head(2).setConstant(3.6);
  sys.domain_box = make_box(lo, hi);
  sys.cone = oscillator_cone(n, kappa);
  return sys;
}

SystemDef cooperative_hirsch(int n) {
  require(n >= 2, ErrorCode::InvalidArgument, "cooperative_hirsch: need n >= 2");
  SystemDef sys;
  sys.name = "cooperative_hirsch(" + std::to_string(n) + ")";
  sys.description = "irreducible cooperative loop, rank-1 orthant cone";
  sys.n = n;
  sys.field = [n](const Vec& x) -> Vec {
    Vec f(n);
    for (int i = 0; i < n; ++i) f(i) = -x(i) + 2.0 * std::tanh(x((i + n - 1) % n));
    return f;
  };
  sys.jacobian = [n](const Vec& x) -> Mat {
    Mat J = -Mat::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      const int j = (i + n - 1) % n;
      const double c = std::cosh(x(j));
      J(i, j) += 2.0 / (c * c);
    }
    return J;
  };
  sys.domain_box = cube(n, -3.0, 3.0);
  sys.cone = make_orthant_cone(n);
  return sys;
}

SystemDef lmi_linear(const Mat& P, double lambda) {
  ConeSpec cone = make_quadratic_cone(P);
  const Eigen::Index n = P.rows();
  const Mat B =
      0.5 * P.partialPivLu().solve(-Mat::Identity(n, n) - lambda * cone.quadratic().P);
  std::ostringstream name;
  name << "lmi_linear(" << n << "," << lambda << ")";
  SystemDef sys = linear_system(B, name.str(), std::move(cone));
  sys.description = "linear field with P B + B^T P + lambda P = -I";
  sys.domain_box = cube(n, -1.0, 1.0);
  sys.lambda_hint = [lambda](const Vec&) { return lambda; };
  return sys;
}

namespace {

Mat diag_mat(std::initializer_list<double> d) {
  Vec v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal().toDenseMatrix();
}

SystemDef renamed(SystemDef sys, std::string name) {
  sys.name = std::move(name);
  return sys;
}

std::vector<double> parse_args(const std::string& inside) {
  std::vector<double> out;
  std::stringstream ss(inside);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
    } catch (const std::exception&) {
      throw Error(ErrorCode::UnknownSystemName, "bad system parameter '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

std::vector<SystemDef> builtin_systems() {
  std::vector<SystemDef> out;
  {
    SystemDef decay = linear_system(-Mat::Identity(1, 1), "decay", make_orthant_cone(1));
    decay.description = "scalar decay x' = -x";
    out.push_back(std::move(decay));
  }
  {
    Mat A(2, 2);
    A << 0.0, 1.0, -1.0, 0.0;
    SystemDef h = linear_system(A, "harmonic");
    h.description = "harmonic oscillator x1' = x2, x2' = -x1";
    out.push_back(std::move(h));
  }
  out.push_back(linear_system(diag_mat({2, 1, -1}), "linear_diag",
                              make_quadratic_cone(diag_mat({-1, -1, 1}))));
  out.push_back(linear_system(diag_mat({2, 1, -1, -2}), "linear_diag4",
                              make_quadratic_cone(diag_mat({-1, -1, 1, 1}))));
  out.push_back(linear_system(diag_mat({0.3, 0.2, 0.1}), "linear_expanding",
                              make_quadratic_cone(diag_mat({-1, -1, 1}))));
  out.push_back(linear_system(diag_mat({-0.1, -0.2, -1.0}), "linear_slow",
                              make_quadratic_cone(diag_mat({-1, -1, 1}))));
  out.push_back(renamed(cyclic_feedback(3, 0.5, 10.0), "cyclic_feedback"));
  out.push_back(renamed(smith_oscillator(4), "smith_oscillator"));
  out.push_back(renamed(smith_two_cycle(4), "smith_two_cycle"));
  out.push_back(renamed(cooperative_hirsch(3), "cooperative_hirsch"));
  out.push_back(renamed(lmi_linear(diag_mat({-1, -1, 1, 1}), 0.5), "lmi_linear"));
  return out;
}

SystemDef find_system(const std::string& name) {
  const auto paren = name.find('(');
  if (paren != std::string::npos) {
    require(name.back() == ')', ErrorCode::UnknownSystemName,
            "malformed system name '" + name + "'");
    const std::string base = name.substr(0, paren);
    const auto args = parse_args(name.substr(paren + 1, name.size() - paren - 2));
    auto arg_int = [&](std::size_t i) { return static_cast<int>(std::lround(args.at(i))); };
    try {
      if (base == "smith_oscillator" && (args.size() == 1 || args.size() == 2))
        return smith_oscillator(arg_int(0), args.size() == 2 ? args[1] : 1.0);
      if (base == "smith_two_cycle" && (args.size() == 1 || args.size() == 2))
        return smith_two_cycle(arg_int(0), args.size() == 2 ? args[1] : 1.0);
      if (base == "cooperative_hirsch" && args.size() == 1)
        return cooperative_hirsch(arg_int(0));
      if (base == "cyclic_feedback" && args.size() == 3)
        return cyclic_feedback(arg_int(0), args[1], args[2]);
    } catch (const Error& e) {
      throw Error(ErrorCode::UnknownSystemName, e.what());
    }
    throw Error(ErrorCode::UnknownSystemName, "unknown system '" + name + "'");
  }
  for (auto& sys : builtin_systems())
    if (sys.name == name) return sys;
  throw Error(ErrorCode::UnknownSystemName, "unknown system '" + name + "'");
}

SystemDef system_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::ConfigError, "system: expected object");
  for (const auto& [key, _] : j.items())
    require(key == "name" || key == "type" || key == "F" || key == "A" ||
                key == "cone" || key == "domain_box" || key == "description",
            ErrorCode::ConfigError, "system: unknown key '" + key + "'");
  require(j.contains("type") && j["type"].is_string(), ErrorCode::ConfigError,
          "system: missing string 'type'");
  const std::string type = j["type"];
  const std::string name = j.value("name", std::string("user_system"));

  SystemDef sys;
  if (type == "linear") {
    require(j.contains("A"), ErrorCode::ConfigError, "system: linear requires 'A'");
    sys = linear_system(mat_from_json(j["A"], "system.A"), name);
  } else if (type == "expression") {
    require(j.contains("F") && j["F"].is_array() && !j["F"].empty(),
            ErrorCode::ConfigError, "system: expression requires array 'F'");
    const int n = static_cast<int>(j["F"].size());
    std::vector<ScalarField> comps;
    for (const auto& e : j["F"]) {
      require(e.is_string(), ErrorCode::ConfigError, "system: F entries must be strings");
      comps.push_back(compile_expression(e.get<std::string>(), n));
    }
    sys.name = name;
    sys.description = "user expression system (finite-difference Jacobian)";
    sys.n = n;
    sys.field = [comps, n](const Vec& x) -> Vec {
      Vec f(n);
      for (int i = 0; i < n; ++i) f(i) = comps[static_cast<std::size_t>(i)](x);
      return f;
    };
    sys.domain_box = cube(n, -10.0, 10.0);
  } else {
    throw Error(ErrorCode::ConfigError, "system: unknown type '" + type + "'");
  }
  if (j.contains("description")) sys.description = j["description"].get<std::string>();
  if (j.contains("domain_box")) {
    const auto& b = j["domain_box"];
    require(b.is_object() && b.contains("lo") && b.contains("hi"), ErrorCode::ConfigError,
            "system: domain_box needs 'lo' and 'hi'");
    sys.domain_box = make_box(vec_from_json(b["lo"], "domain_box.lo"),
                              vec_from_json(b["hi"], "domain_box.hi"));
    require(sys.domain_box.dim() == sys.n, ErrorCode::ConfigError,
            "system: domain_box dimension mismatch");
  }
  if (j.contains("cone")) {
    sys.cone = cone_from_json(j["cone"]);
    require(sys.cone->dim() == sys.n, ErrorCode::ConfigError,
            "system: cone dimension mismatch");
  }
  return sys;
}

std::vector<SystemDef> load_user_systems(const std::filesystem::path& dir) {
  std::vector<SystemDef> out;
  if (!std::filesystem::is_directory(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, file.string() + ": " + e.what());
    }
    if (!j.contains("name")) j["name"] = file.stem().string();
    out.push_back(system_from_json(j));
  }
  return out;
}

}  // namespace kcone
