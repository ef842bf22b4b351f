#include "csinet/codeword_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "csinet/bitpack.hpp"

namespace csinet::io {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', 'W'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kFlagQuantized = 0x01;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint16_t get_u16(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 2 > in.size()) throw DataError("codeword: truncated header");
  const std::uint16_t v =
      static_cast<std::uint16_t>((static_cast<std::uint16_t>(in[pos]) << 8) | in[pos + 1]);
  pos += 2;
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<std::uint8_t>(u >> 24));
  out.push_back(static_cast<std::uint8_t>(u >> 16));
  out.push_back(static_cast<std::uint8_t>(u >> 8));
  out.push_back(static_cast<std::uint8_t>(u));
}

float get_f32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DataError("codeword: truncated values");
  const std::uint32_t u = (static_cast<std::uint32_t>(in[pos]) << 24) |
                          (static_cast<std::uint32_t>(in[pos + 1]) << 16) |
                          (static_cast<std::uint32_t>(in[pos + 2]) << 8) |
                          static_cast<std::uint32_t>(in[pos + 3]);
  pos += 4;
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

std::vector<std::uint8_t> serialize_codeword(const codec::Codeword& cw, const quant::Quantizer* q) {
  cw.validate();
  if (cw.index_bits < 32)
    for (int p : cw.positions)
      if ((static_cast<std::uint32_t>(p) >> cw.index_bits) != 0)
        throw DataError("codeword: position does not fit in q2 bits");

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(q ? kFlagQuantized : 0);
  out.push_back(q ? static_cast<std::uint8_t>(q->bits) : 0);
  out.push_back(0);
  put_u16(out, static_cast<std::uint16_t>(cw.m));
  put_u16(out, static_cast<std::uint16_t>(cw.value_bits));
  put_u16(out, static_cast<std::uint16_t>(cw.index_bits));
  put_u16(out, static_cast<std::uint16_t>(cw.n_c));
  put_u16(out, static_cast<std::uint16_t>(cw.n_t));

  if (q) {
    BitWriter bw;
    for (double v : cw.values) bw.put(static_cast<std::uint64_t>(q->quantize(v)), q->bits);
    const auto packed = bw.finish();
    out.insert(out.end(), packed.begin(), packed.end());
  } else {
    for (double v : cw.values) put_f32(out, static_cast<float>(v));
  }

  BitWriter bw;
  for (int p : cw.positions) bw.put(static_cast<std::uint64_t>(p), cw.index_bits);
  const auto packed = bw.finish();
  out.insert(out.end(), packed.begin(), packed.end());
  return out;
}

codec::Codeword deserialize_codeword(const std::vector<std::uint8_t>& bytes,
                                     const quant::Quantizer* q) {
  if (bytes.size() < 18 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DataError("codeword: bad magic bytes");
  std::size_t pos = 4;
  const std::uint8_t version = bytes[pos++];
  if (version != kVersion) throw DataError("codeword: unsupported version");
  const std::uint8_t flags = bytes[pos++];
  const std::uint8_t qbits = bytes[pos++];
  ++pos;  // reserved
  codec::Codeword cw;
  cw.m = get_u16(bytes, pos);
  cw.value_bits = get_u16(bytes, pos);
  cw.index_bits = get_u16(bytes, pos);
  cw.n_c = get_u16(bytes, pos);
  cw.n_t = get_u16(bytes, pos);

  const bool quantized = (flags & kFlagQuantized) != 0;
  if (quantized) {
    if (!q) throw DataError("codeword: quantized stream needs a quantizer");
    if (q->bits != qbits) throw DataError("codeword: quantizer bit width mismatch");
    const std::size_t n_bits = static_cast<std::size_t>(cw.m + 1) * qbits;
    const std::size_t n_bytes = (n_bits + 7) / 8;
    if (pos + n_bytes > bytes.size()) throw DataError("codeword: truncated values");
    std::vector<std::uint8_t> chunk(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n_bytes));
    BitReader br(chunk);
    cw.values.resize(static_cast<std::size_t>(cw.m) + 1);
    for (double& v : cw.values) v = q->dequantize(static_cast<int>(br.get(qbits)));
    pos += n_bytes;
  } else {
    cw.values.resize(static_cast<std::size_t>(cw.m) + 1);
    for (double& v : cw.values) v = get_f32(bytes, pos);
  }

  const std::size_t p_bits = static_cast<std::size_t>(cw.m) * static_cast<std::size_t>(cw.index_bits);
  const std::size_t p_bytes = (p_bits + 7) / 8;
  if (pos + p_bytes > bytes.size()) throw DataError("codeword: truncated positions");
  std::vector<std::uint8_t> chunk(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + p_bytes));
  BitReader br(chunk);
  cw.positions.resize(static_cast<std::size_t>(cw.m));
  for (int& p : cw.positions) p = static_cast<int>(br.get(cw.index_bits));
  cw.validate();
  return cw;
}

void write_codeword(const std::string& path, const codec::Codeword& cw, const quant::Quantizer* q) {
  const auto bytes = serialize_codeword(cw, q);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("codeword: cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("codeword: write failed: " + path);
}

codec::Codeword read_codeword(const std::string& path, const quant::Quantizer* q) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("codeword: cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return deserialize_codeword(bytes, q);
}

codec::Codeword quantize_roundtrip(const codec::Codeword& cw, const quant::Quantizer& q) {
  codec::Codeword out = cw;
  for (double& v : out.values) v = q.dequantize(q.quantize(v));
  return out;
}

}  // namespace csinet::io
