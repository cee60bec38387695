#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace fwmodel {

// 64-bit FNV-1a. Used wherever a stable, host-independent digest is needed
// (firmware identity, call-stack signatures, configuration hashes).
class Fnv1a {
 public:
  static constexpr uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a& byte(uint8_t b) {
    h_ = (h_ ^ b) * kPrime;
    return *this;
  }
  Fnv1a& u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) byte(static_cast<uint8_t>(v >> (8 * i)));
    return *this;
  }
  Fnv1a& u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<uint8_t>(v >> (8 * i)));
    return *this;
  }
  Fnv1a& bytes(std::span<const uint8_t> data) {
    for (uint8_t b : data) byte(b);
    return *this;
  }
  Fnv1a& str(std::string_view s) {
    for (char c : s) byte(static_cast<uint8_t>(c));
    return *this;
  }
  uint64_t value() const { return h_; }

 private:
  uint64_t h_ = kOffset;
};

inline uint64_t fnv1a(std::span<const uint8_t> data) { return Fnv1a().bytes(data).value(); }

}  // namespace fwmodel
