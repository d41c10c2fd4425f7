#include "mlasr/common/random.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mlasr/common/error.h"

namespace mlasr {

double StandardNormal(Rng& rng) {
  double u1 = UniformUnit(rng);
  while (u1 <= 0.0) u1 = UniformUnit(rng);
  const double u2 = UniformUnit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string SerializeRng(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng DeserializeRng(const std::string& text) {
  std::istringstream in(text);
  Rng rng;
  in >> rng;
  if (in.fail()) throw IoError("corrupt random generator state");
  return rng;
}

}  // namespace mlasr
