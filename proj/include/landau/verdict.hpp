#pragma once

#include <string>

#include <json.hpp>

namespace landau {

/// One checked claim of an experiment, with the measured number and the
/// threshold it was held against.
struct Verdict {
  std::string claim;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

inline void to_json(nlohmann::json& j, const Verdict& v) {
  j = {{"claim", v.claim}, {"pass", v.pass}, {"measured", v.measured}, {"threshold", v.threshold}, {"detail", v.detail}};
}

inline void from_json(const nlohmann::json& j, Verdict& v) {
  v.claim = j.at("claim").get<std::string>();
  v.pass = j.at("pass").get<bool>();
  v.measured = j.at("measured").is_number() ? j.at("measured").get<double>() : 0.0;
  v.threshold = j.at("threshold").is_number() ? j.at("threshold").get<double>() : 0.0;
  v.detail = j.value("detail", "");
}

}  // namespace landau
