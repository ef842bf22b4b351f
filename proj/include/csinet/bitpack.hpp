#pragma once

#include <cstdint>
#include <vector>

#include "csinet/errors.hpp"

namespace csinet::io {

// Packs fixed-width unsigned integers MSB-first into a byte stream.
class BitWriter {
 public:
  void put(std::uint64_t value, int bits);
  std::vector<std::uint8_t> finish();

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint8_t cur_ = 0;
  int filled_ = 0;
};

class BitReader {
 public:
  explicit BitReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint64_t get(int bits);

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
  int consumed_ = 0;
};

}  // namespace csinet::io
