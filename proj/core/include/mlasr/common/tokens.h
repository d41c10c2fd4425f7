#pragma once

namespace mlasr {

// Reserved ids shared by the vocabulary and the decoders.
inline constexpr int kBeginId = 0;
inline constexpr int kEndId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kUnknownId = 3;
inline constexpr int kNumSpecialTokens = 4;

}  // namespace mlasr
