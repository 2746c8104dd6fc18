#include "specsense/curve.hpp"

#include <cmath>

#include "specsense/liouville.hpp"

namespace specsense {

void CorrelationCurve::validate() const {
  if (abscissa.size() != values.size()) throw error("invalid_curve", "abscissa and values differ in length");
  if (components && components->size() != values.size())
    throw error("invalid_curve", "component breakdown differs in length from values");
  for (std::size_t i = 1; i < abscissa.size(); ++i)
    if (!(abscissa[i] > abscissa[i - 1])) throw error("invalid_curve", "abscissa is not strictly increasing");
  for (double v : values)
    if (!std::isfinite(v)) throw error("invalid_curve", "curve contains non-finite values");
}

}  // namespace specsense
