#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csinet/codec.hpp"
#include "csinet/quantizer.hpp"

namespace csinet::io {

// Wire format: header (magic, version, flags, quantizer bits, m, q1, q2,
// n_c, n_t), then values as 32-bit floats (or quantizer indices when a
// quantizer is supplied), then positions packed big-endian at q2 bits each.
std::vector<std::uint8_t> serialize_codeword(const codec::Codeword& cw,
                                             const quant::Quantizer* q = nullptr);
codec::Codeword deserialize_codeword(const std::vector<std::uint8_t>& bytes,
                                     const quant::Quantizer* q = nullptr);

void write_codeword(const std::string& path, const codec::Codeword& cw,
                    const quant::Quantizer* q = nullptr);
codec::Codeword read_codeword(const std::string& path, const quant::Quantizer* q = nullptr);

// Quantize-then-dequantize all values (including the mean), as seen by the
// receiver when quantized feedback is enabled.
codec::Codeword quantize_roundtrip(const codec::Codeword& cw, const quant::Quantizer& q);

}  // namespace csinet::io
