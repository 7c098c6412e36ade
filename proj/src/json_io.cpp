#include "kcone/json_io.hpp"

namespace kcone {

nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec_to_json(m.row(r).transpose()));
  return out;
}

Vec vec_from_json(const nlohmann::json& j, const std::string& what) {
  require(j.is_array(), ErrorCode::ConfigError, what + ": expected array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), ErrorCode::ConfigError, what + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const nlohmann::json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), ErrorCode::ConfigError, what + ": expected matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Vec first = vec_from_json(j[0], what);
  Mat M(rows, first.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = vec_from_json(j[r], what);
    require(row.size() == M.cols(), ErrorCode::ConfigError, what + ": ragged matrix");
    M.row(r) = row.transpose();
  }
  return M;
}

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const std::string& what) {
  require(j.is_object(), ErrorCode::ConfigError, what + ": expected object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw Error(ErrorCode::ConfigError, what + ": unknown key '" + key + "'");
  }
}

nlohmann::json to_json(const IntegratorConfig& cfg) {
  return {{"method", cfg.method == Method::RK4 ? "rk4" : "dopri"},
          {"h", cfg.h},
          {"abs_tol", cfg.abs_tol},
          {"rel_tol", cfg.rel_tol},
          {"max_steps", cfg.max_steps},
          {"qr_interval", cfg.qr_interval},
          {"sample_interval", cfg.sample_interval}};
}

IntegratorConfig integrator_config_from_json(const nlohmann::json& j,
                                             const IntegratorConfig& base) {
  require_keys(j, {"method", "h", "abs_tol", "rel_tol", "max_steps", "qr_interval",
                   "sample_interval"},
               "integrator");
  IntegratorConfig cfg = base;
  auto number = [&j](const char* key, double& out) {
    if (!j.contains(key)) return;
    require(j[key].is_number(), ErrorCode::ConfigError,
            std::string("integrator.") + key + ": expected number");
    out = j[key].get<double>();
  };
  if (j.contains("method")) {
    const auto m = j["method"];
    require(m.is_string(), ErrorCode::ConfigError, "integrator.method: expected string");
    if (m == "rk4")
      cfg.method = Method::RK4;
    else if (m == "dopri")
      cfg.method = Method::DormandPrince;
    else
      throw Error(ErrorCode::ConfigError, "integrator.method: expected rk4 or dopri");
  }
  number("h", cfg.h);
  number("abs_tol", cfg.abs_tol);
  number("rel_tol", cfg.rel_tol);
  number("qr_interval", cfg.qr_interval);
  number("sample_interval", cfg.sample_interval);
  if (j.contains("max_steps")) {
    require(j["max_steps"].is_number_integer(), ErrorCode::ConfigError,
            "integrator.max_steps: expected integer");
    cfg.max_steps = j["max_steps"].get<long>();
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return cfg;
}

}  // namespace kcone
