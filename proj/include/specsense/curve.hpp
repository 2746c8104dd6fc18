#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace specsense {

// Sampled correlation data. Abscissa units are named in `abscissa_name`.
struct CorrelationCurve {
  std::string abscissa_name;
  std::string value_name;
  std::vector<double> abscissa;
  std::vector<double> values;
  // Optional (I0, I1, I2) breakdown, already divided by the normalization.
  std::optional<std::vector<std::array<double, 3>>> components;
  nlohmann::json metadata = nlohmann::json::object();

  void validate() const;
  std::size_t size() const { return values.size(); }
};

}  // namespace specsense
