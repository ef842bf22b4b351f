#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "csinet/channel.hpp"

namespace csinet::io {

struct DatasetMeta {
  std::map<std::string, std::string> fields;
};

// Little-endian binary: magic "CSID", u32 version, u32 sample count,
// u32 shape (2, n_c, n_t), then float32 payload, row-major per sample.
// Metadata lives in a JSON sidecar at path + ".meta.json".
void write_dataset(const std::vector<channel::CsiTensor>& samples, const DatasetMeta& meta,
                   const std::string& path);

std::vector<channel::CsiTensor> read_dataset(const std::string& path, DatasetMeta* meta = nullptr);

}  // namespace csinet::io
