#pragma once
// Compact SHA-256 (FIPS 180-4) for artifact and payload checksums.

#include <array>
#include <cstdint>
#include <cstring>
#include <string>

namespace treeflow {

class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
              0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    buffer_len_ = 0;
    total_bits_ = 0;
  }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_bits_ += static_cast<std::uint64_t>(len) * 8;
    while (len > 0) {
      const std::size_t take = std::min<std::size_t>(64 - buffer_len_, len);
      std::memcpy(buffer_.data() + buffer_len_, p, take);
      buffer_len_ += take;
      p += take;
      len -= take;
      if (buffer_len_ == 64) {
        process_block(buffer_.data());
        buffer_len_ = 0;
      }
    }
  }

  std::array<unsigned char, 32> digest() {
    // Pad a copy so the object could keep accepting data if reused.
    std::array<std::uint32_t, 8> state = state_;
    std::array<unsigned char, 64> block{};
    std::memcpy(block.data(), buffer_.data(), buffer_len_);
    block[buffer_len_] = 0x80;
    auto process = [&](const unsigned char* b) { process_block_into(b, state); };
    if (buffer_len_ >= 56) {
      process(block.data());
      block.fill(0);
    }
    for (int i = 0; i < 8; ++i) {
      block[static_cast<std::size_t>(56 + i)] =
          static_cast<unsigned char>(total_bits_ >> (56 - 8 * i));
    }
    process(block.data());

    std::array<unsigned char, 32> out{};
    for (int i = 0; i < 8; ++i) {
      out[static_cast<std::size_t>(4 * i + 0)] = static_cast<unsigned char>(state[static_cast<std::size_t>(i)] >> 24);
      out[static_cast<std::size_t>(4 * i + 1)] = static_cast<unsigned char>(state[static_cast<std::size_t>(i)] >> 16);
      out[static_cast<std::size_t>(4 * i + 2)] = static_cast<unsigned char>(state[static_cast<std::size_t>(i)] >> 8);
      out[static_cast<std::size_t>(4 * i + 3)] = static_cast<unsigned char>(state[static_cast<std::size_t>(i)]);
    }
    return out;
  }

  static std::string hex(const std::string& data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return to_hex(h.digest());
  }

  static std::string to_hex(const std::array<unsigned char, 32>& d) {
    static const char* digits = "0123456789abcdef";
    std::string s(64, '0');
    for (std::size_t i = 0; i < 32; ++i) {
      s[2 * i] = digits[d[i] >> 4];
      s[2 * i + 1] = digits[d[i] & 0xf];
    }
    return s;
  }

 private:
  static constexpr std::array<std::uint32_t, 64> k_ = {
      0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u,
      0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u,
      0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u, 0xc19bf174u, 0xe49b69c1u, 0xefbe4786u,
      0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau,
      0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
      0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu, 0x53380d13u,
      0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u, 0xa2bfe8a1u, 0xa81a664bu,
      0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u,
      0x19a4c116u, 0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au,
      0x5b9cca4fu, 0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
      0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};

  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  static void process_block_into(const unsigned char* block,
                                 std::array<std::uint32_t, 8>& state) {
    std::array<std::uint32_t, 64> w{};
    for (int i = 0; i < 16; ++i) {
      w[static_cast<std::size_t>(i)] =
          (static_cast<std::uint32_t>(block[4 * i]) << 24) |
          (static_cast<std::uint32_t>(block[4 * i + 1]) << 16) |
          (static_cast<std::uint32_t>(block[4 * i + 2]) << 8) |
          static_cast<std::uint32_t>(block[4 * i + 3]);
    }
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[static_cast<std::size_t>(i - 15)], 7) ^
                               rotr(w[static_cast<std::size_t>(i - 15)], 18) ^
                               (w[static_cast<std::size_t>(i - 15)] >> 3);
      const std::uint32_t s1 = rotr(w[static_cast<std::size_t>(i - 2)], 17) ^
                               rotr(w[static_cast<std::size_t>(i - 2)], 19) ^
                               (w[static_cast<std::size_t>(i - 2)] >> 10);
      w[static_cast<std::size_t>(i)] =
          w[static_cast<std::size_t>(i - 16)] + s0 + w[static_cast<std::size_t>(i - 7)] + s1;
    }
    auto [a, b, c, d, e, f, g, h] = state;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = h + s1 + ch + k_[static_cast<std::size_t>(i)] + w[static_cast<std::size_t>(i)];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    state[0] += a; state[1] += b; state[2] += c; state[3] += d;
    state[4] += e; state[5] += f; state[6] += g; state[7] += h;
  }

  void process_block(const unsigned char* block) { process_block_into(block, state_); }

  std::array<std::uint32_t, 8> state_{};
  std::array<unsigned char, 64> buffer_{};
  std::size_t buffer_len_ = 0;
  std::uint64_t total_bits_ = 0;
};

}  // namespace treeflow
