#pragma once

#include <array>
#include <cstdint>

#include "agdh/bytes.hpp"

namespace agdh::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(ByteView data);
Digest hmac_sha256(ByteView key, ByteView data);
/// Constant-time comparison of equal-length buffers; false on length mismatch.
bool equal(ByteView a, ByteView b) noexcept;

}  // namespace agdh::crypto
