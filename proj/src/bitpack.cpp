#include "csinet/bitpack.hpp"

namespace csinet::io {

void BitWriter::put(std::uint64_t value, int bits) {
  if (bits < 1 || bits > 64) throw ConfigError("bitpack: width must be in [1,64]");
  if (bits < 64 && value >> bits) throw DataError("bitpack: value does not fit in width");
  for (int i = bits - 1; i >= 0; --i) {
    cur_ = static_cast<std::uint8_t>((cur_ << 1) | ((value >> i) & 1u));
    if (++filled_ == 8) {
      bytes_.push_back(cur_);
      cur_ = 0;
      filled_ = 0;
    }
  }
}

std::vector<std::uint8_t> BitWriter::finish() {
  if (filled_ > 0) {
    bytes_.push_back(static_cast<std::uint8_t>(cur_ << (8 - filled_)));
    cur_ = 0;
    filled_ = 0;
  }
  return std::move(bytes_);
}

std::uint64_t BitReader::get(int bits) {
  if (bits < 1 || bits > 64) throw ConfigError("bitpack: width must be in [1,64]");
  std::uint64_t out = 0;
  for (int i = 0; i < bits; ++i) {
    if (pos_ >= bytes_.size()) throw DataError("bitpack: read past end of stream");
    const int bit = (bytes_[pos_] >> (7 - consumed_)) & 1;
    out = (out << 1) | static_cast<std::uint64_t>(bit);
    if (++consumed_ == 8) {
      consumed_ = 0;
      ++pos_;
    }
  }
  return out;
}

}  // namespace csinet::io
