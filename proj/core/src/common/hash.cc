#include "mlasr/common/hash.h"

#include <fmt/format.h>

namespace mlasr {

std::string HexDigest(std::uint64_t value) { return fmt::format("{:016x}", value); }

}  // namespace mlasr
