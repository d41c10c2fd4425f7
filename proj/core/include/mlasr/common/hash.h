#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace mlasr {

// 64-bit FNV-1a. Stable across builds and platforms; used for vocab hashes,
// config hashes and checkpoint integrity.
class Fnv1a64 {
 public:
  void Update(std::span<const std::byte> bytes) noexcept {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= kPrime;
    }
  }
  void Update(std::string_view text) noexcept {
    Update(std::as_bytes(std::span<const char>(text.data(), text.size())));
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  static constexpr std::uint64_t kOffset = 14695981039346656037ull;
  static constexpr std::uint64_t kPrime = 1099511628211ull;
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t HashText(std::string_view text) noexcept {
  Fnv1a64 h;
  h.Update(text);
  return h.digest();
}

// Lower-case, zero-padded 16 digit hex.
std::string HexDigest(std::uint64_t value);

}  // namespace mlasr
