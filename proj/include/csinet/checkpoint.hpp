#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csinet/codec.hpp"

namespace csinet::io {

// Checkpoint layout: magic, version, JSON architecture config, then named
// float32 tensors (parameters, batch-norm running stats, aggregator weights).

namespace ckpt_detail {

constexpr char kMagic[4] = {'C', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <class S>
void write_tensor(std::ostream& os, const std::string& name, const ad::Tensor<S>& t) {
  write_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
  std::vector<float> buf(t.numel());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

template <class S>
std::pair<std::string, ad::Tensor<S>> read_tensor(std::istream& is) {
  const std::uint32_t name_len = read_u32(is);
  std::string name(name_len, '\0');
  is.read(name.data(), static_cast<std::streamsize>(name_len));
  const std::uint32_t ndims = read_u32(is);
  std::vector<int> shape(ndims);
  for (auto& d : shape) d = static_cast<int>(read_u32(is));
  ad::Tensor<S> t(shape);
  std::vector<float> buf(t.numel());
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw DataError("checkpoint: truncated tensor payload");
  for (std::size_t i = 0; i < buf.size(); ++i) t.data[i] = static_cast<S>(buf[i]);
  return {std::move(name), std::move(t)};
}

}  // namespace ckpt_detail

template <class S>
nlohmann::json model_config_json(const codec::PipelineModel<S>& model) {
  nlohmann::json j;
  j["n_c"] = model.n_c;
  j["n_t"] = model.n_t;
  j["layers"] = {{"d_m", model.layers.d_m},     {"d_ff", model.layers.d_ff},
                 {"n_heads", model.layers.n_heads}, {"n_trans", model.layers.n_trans},
                 {"s_p", model.layers.s_p}};
  j["selfinfo"] = {{"radius_r", model.si_cfg.radius_r},
                   {"bandwidth_h", model.si_cfg.bandwidth_h},
                   {"quantile_rho", model.si_cfg.quantile_rho},
                   {"epsilon", model.si_cfg.epsilon},
                   {"include_center", model.si_cfg.include_center}};
  j["norm_mean"] = static_cast<double>(model.norm_mean);
  j["norm_std"] = static_cast<double>(model.norm_std);
  j["norm_frozen"] = model.norm_frozen;
  return j;
}

template <class S>
void save_checkpoint(const std::string& path, const codec::PipelineModel<S>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path);
  os.write(ckpt_detail::kMagic, 4);
  ckpt_detail::write_u32(os, ckpt_detail::kVersion);
  const std::string cfg = model_config_json(model).dump();
  ckpt_detail::write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  std::vector<std::pair<std::string, const ad::Tensor<S>*>> tensors;
  for (const auto& name : model.params.names())
    tensors.emplace_back(name, &model.params.get(name)->value);
  tensors.emplace_back("state.bn_en1.mean", &model.bn_en1.running_mean);
  tensors.emplace_back("state.bn_en1.var", &model.bn_en1.running_var);
  tensors.emplace_back("state.bn_en2.mean", &model.bn_en2.running_mean);
  tensors.emplace_back("state.bn_en2.var", &model.bn_en2.running_var);
  for (std::size_t i = 0; i < model.bn_pd.size(); ++i) {
    tensors.emplace_back("state.bn_pd" + std::to_string(i) + ".mean", &model.bn_pd[i].running_mean);
    tensors.emplace_back("state.bn_pd" + std::to_string(i) + ".var", &model.bn_pd[i].running_var);
  }
  ad::Tensor<S> agg({selfinfo::FrozenAggregator::kChannels, 9});
  for (std::size_t i = 0; i < model.aggregator.weights.size(); ++i)
    agg.data[i] = static_cast<S>(model.aggregator.weights[i]);
  tensors.emplace_back("state.aggregator", &agg);

  ckpt_detail::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) ckpt_detail::write_tensor(os, name, *t);
  if (!os) throw DataError("checkpoint: write failed: " + path);
}

template <class S>
codec::PipelineModel<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, ckpt_detail::kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic bytes: " + path);
  if (ckpt_detail::read_u32(is) != ckpt_detail::kVersion)
    throw DataError("checkpoint: unsupported version");
  const std::uint32_t cfg_len = ckpt_detail::read_u32(is);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw DataError("checkpoint: truncated config");
  nlohmann::json j = nlohmann::json::parse(cfg);

  codec::LayerConfig layers;
  layers.d_m = j["layers"]["d_m"];
  layers.d_ff = j["layers"]["d_ff"];
  layers.n_heads = j["layers"]["n_heads"];
  layers.n_trans = j["layers"]["n_trans"];
  layers.s_p = j["layers"]["s_p"];
  selfinfo::SelfInfoConfig si;
  si.radius_r = j["selfinfo"]["radius_r"];
  si.bandwidth_h = j["selfinfo"]["bandwidth_h"];
  si.quantile_rho = j["selfinfo"]["quantile_rho"];
  si.epsilon = j["selfinfo"]["epsilon"];
  si.include_center = j["selfinfo"]["include_center"];

  codec::PipelineModel<S> model = codec::build_model<S>(j["n_c"], j["n_t"], layers, si, 0);
  model.norm_mean = static_cast<S>(j["norm_mean"].get<double>());
  model.norm_std = static_cast<S>(j["norm_std"].get<double>());
  model.norm_frozen = j["norm_frozen"];

  const std::uint32_t count = ckpt_detail::read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = ckpt_detail::read_tensor<S>(is);
    if (name == "state.aggregator") {
      for (std::size_t k = 0; k < model.aggregator.weights.size(); ++k)
        model.aggregator.weights[k] = static_cast<double>(t.data[k]);
    } else if (name.rfind("state.", 0) == 0) {
      auto assign = [&](ad::BatchNormState<S>& st, bool mean) {
        (mean ? st.running_mean : st.running_var) = t;
      };
      const bool mean = name.size() > 5 && name.compare(name.size() - 5, 5, ".mean") == 0;
      if (name.rfind("state.bn_en1.", 0) == 0)
        assign(model.bn_en1, mean);
      else if (name.rfind("state.bn_en2.", 0) == 0)
        assign(model.bn_en2, mean);
      else if (name.rfind("state.bn_pd", 0) == 0) {
        const std::size_t dot = name.find('.', 11);
        const int idx = std::stoi(name.substr(11, dot - 11));
        if (idx < 0 || idx >= static_cast<int>(model.bn_pd.size()))
          throw DataError("checkpoint: unknown batch-norm state: " + name);
        assign(model.bn_pd[static_cast<std::size_t>(idx)], mean);
      } else {
        throw DataError("checkpoint: unknown state tensor: " + name);
      }
    } else {
      if (!model.params.has(name)) throw DataError("checkpoint: unknown parameter: " + name);
      auto v = model.params.get(name);
      if (v->value.shape != t.shape) throw DataError("checkpoint: shape mismatch for " + name);
      v->value = std::move(t);
    }
  }
  return model;
}

}  // namespace csinet::io
