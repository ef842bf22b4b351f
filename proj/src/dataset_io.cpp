#include "csinet/dataset_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "csinet/errors.hpp"

namespace csinet::io {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', 'D'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("dataset: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_dataset(const std::vector<channel::CsiTensor>& samples, const DatasetMeta& meta,
                   const std::string& path) {
  if (samples.empty()) throw DataError("dataset: refusing to write an empty sample list");
  const int n_c = samples.front().n_c;
  const int n_t = samples.front().n_t;
  for (const auto& s : samples)
    if (s.n_c != n_c || s.n_t != n_t) throw DataError("dataset: inconsistent sample shapes");

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("dataset: cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(samples.size()));
  write_u32(os, 2);
  write_u32(os, static_cast<std::uint32_t>(n_c));
  write_u32(os, static_cast<std::uint32_t>(n_t));
  std::vector<float> buf(samples.front().size());
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(s.data[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw DataError("dataset: write failed: " + path);

  nlohmann::json j;
  for (const auto& [k, v] : meta.fields) j[k] = v;
  j["samples"] = samples.size();
  j["n_c"] = n_c;
  j["n_t"] = n_t;
  std::ofstream ms(path + ".meta.json");
  ms << j.dump(2) << "\n";
}

std::vector<channel::CsiTensor> read_dataset(const std::string& path, DatasetMeta* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("dataset: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DataError("dataset: bad magic bytes: " + path);
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) throw DataError("dataset: unsupported version");
  const std::uint32_t count = read_u32(is);
  const std::uint32_t planes = read_u32(is);
  const std::uint32_t n_c = read_u32(is);
  const std::uint32_t n_t = read_u32(is);
  if (planes != 2 || n_c == 0 || n_t == 0) throw DataError("dataset: bad shape header");

  std::vector<channel::CsiTensor> samples;
  samples.reserve(count);
  std::vector<float> buf(2u * n_c * n_t);
  for (std::uint32_t i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw DataError("dataset: truncated payload (sample " + std::to_string(i) + ")");
    channel::CsiTensor t(static_cast<int>(n_c), static_cast<int>(n_t));
    for (std::size_t k = 0; k < buf.size(); ++k) t.data[k] = buf[k];
    samples.push_back(std::move(t));
  }

  if (meta) {
    std::ifstream ms(path + ".meta.json");
    if (ms) {
      nlohmann::json j;
      ms >> j;
      for (auto it = j.begin(); it != j.end(); ++it)
        meta->fields[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
    }
  }
  return samples;
}

}  // namespace csinet::io
