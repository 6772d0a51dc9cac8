#include "ratelab/rng.hpp"

#include <sstream>

#include "ratelab/error.hpp"

namespace ratelab {

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng rng;
  std::istringstream in(text);
  in >> rng.engine_;
  if (in.fail()) throw InvalidArgument("corrupt generator state");
  return rng;
}

}  // namespace ratelab
