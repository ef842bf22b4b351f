// csinet: command-line front end. Every command reads a JSON config, applies
// command-line overrides, validates fully before any side effect, and writes
// plot-ready CSV / binary artifacts into --out.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>

#include "csinet/checkpoint.hpp"
#include "csinet/dataset_io.hpp"
#include "csinet/eval.hpp"
#include "csinet/training.hpp"

using namespace csinet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- shared option plumbing ----

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> m;
  std::optional<double> sigma;
  std::optional<std::string> variant;  // S / M / L -> n_trans 1 / 3 / 6
  bool stage1_only = false;
  bool freeze_stage2 = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_config = true) {
  auto* cfg = cmd->add_option("--config", o.config_path, "JSON configuration file");
  if (needs_config) cfg->required();
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "override the config seed");
  auto* m_opt = cmd->add_option("--m", o.m, "feedback payload size M");
  cmd->add_option("--sigma", o.sigma, "target compression ratio")->excludes(m_opt);
  cmd->add_option("--variant", o.variant, "model size: S, M or L")
      ->check(CLI::IsMember({"S", "M", "L"}));
  cmd->add_flag("--stage1-only", o.stage1_only, "skip stage 2 of training");
  cmd->add_flag("--freeze-stage2", o.freeze_stage2, "freeze encoder/decoder in stage 2");
}

json load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

void require_file(const json& cfg, const std::string& key) {
  if (!cfg.contains(key)) throw ConfigError("config: missing required key '" + key + "'");
  const std::string p = cfg.at(key).get<std::string>();
  if (!fs::exists(p)) throw DataError("config: " + key + " not found: " + p);
}

fs::path prepare_out(const CommonOpts& o) {
  fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory: " + o.out_dir);
  return dir;
}

channel::ChannelScenario scenario_from_json(const json& j) {
  channel::ChannelScenario s;
  s.n_f = j.value("n_f", s.n_f);
  s.n_t = j.value("n_t", s.n_t);
  s.n_c = j.value("n_c", s.n_c);
  s.n_paths = j.value("n_paths", s.n_paths);
  s.carrier_hz = j.value("carrier_hz", s.carrier_hz);
  s.bandwidth_hz = j.value("bandwidth_hz", s.bandwidth_hz);
  s.max_delay_s = j.value("max_delay_s", s.max_delay_s);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

codec::LayerConfig layers_from_json(const json& j, const CommonOpts& o) {
  codec::LayerConfig l;
  l.d_m = j.value("d_m", l.d_m);
  l.d_ff = j.value("d_ff", l.d_ff);
  l.n_heads = j.value("n_heads", l.n_heads);
  l.n_trans = j.value("n_trans", l.n_trans);
  l.s_p = j.value("s_p", l.s_p);
  if (o.variant) l.n_trans = (*o.variant == "S") ? 1 : (*o.variant == "M") ? 3 : 6;
  return l;
}

selfinfo::SelfInfoConfig selfinfo_from_json(const json& j) {
  selfinfo::SelfInfoConfig c;
  c.radius_r = j.value("radius_r", c.radius_r);
  c.bandwidth_h = j.value("bandwidth_h", c.bandwidth_h);
  c.quantile_rho = j.value("quantile_rho", c.quantile_rho);
  if (j.value("threshold_mode", "quantile") == std::string("absolute")) {
    c.threshold_mode = selfinfo::ThresholdMode::kAbsolute;
    c.threshold_t = j.value("threshold_t", c.threshold_t);
  }
  c.validate();
  return c;
}

train::TrainConfig traincfg_from_json(const json& j, const CommonOpts& o, std::uint64_t seed) {
  train::TrainConfig c;
  c.epochs_total = j.value("epochs_total", c.epochs_total);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.lr_max = j.value("lr_max", c.lr_max);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  c.freeze_stage2 = o.freeze_stage2 || j.value("freeze_stage2", false);
  c.seed = seed;
  c.validate();
  return c;
}

std::uint64_t resolve_seed(const json& cfg, const CommonOpts& o) {
  return o.seed ? *o.seed : cfg.value("seed", std::uint64_t{1});
}

int resolve_m(const json& cfg, const CommonOpts& o, int n_c, int n_t) {
  if (o.m) return *o.m;
  if (o.sigma) return codec::m_preset(*o.sigma, 64, 10, n_c, n_t);
  if (cfg.contains("m")) return cfg.at("m").get<int>();
  if (cfg.contains("sigma"))
    return codec::m_preset(cfg.at("sigma").get<double>(), 64, 10, n_c, n_t);
  throw ConfigError("config: need m or sigma (config key or --m/--sigma)");
}

eval::Variant variant_from_name(const std::string& name) {
  for (auto v : {eval::Variant::kFull, eval::Variant::kNoEncoder, eval::Variant::kNoPrelim,
                 eval::Variant::kNoTransformer, eval::Variant::kMeanFill})
    if (eval::variant_name(v) == name) return v;
  throw ConfigError("unknown ablation variant: " + name);
}

// ---- gen ----

int cmd_gen(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  if (!cfg.contains("scenario")) throw ConfigError("gen: missing 'scenario'");
  const auto scenario = scenario_from_json(cfg.at("scenario"));
  const json counts = cfg.value("counts", json{{"train", 2000}, {"val", 500}, {"test", 500}});
  const json doppler = cfg.value("doppler", json::object());
  const double doppler_fraction = doppler.value("fraction", 0.0);
  const double speed = doppler.value("speed_mps", 0.0);
  const double elapsed = doppler.value("elapsed_s", 1e-3);
  if (doppler_fraction < 0 || doppler_fraction > 1)
    throw ConfigError("gen: doppler fraction must be in [0,1]");
  const auto out = prepare_out(o);

  json manifest;
  manifest["scenario"] = cfg.at("scenario");
  std::uint64_t offset = 0;
  for (const std::string& split : {"train", "val", "test"}) {
    const int count = counts.value(split, 0);
    if (count <= 0) throw ConfigError("gen: counts." + split + " must be positive");
    const int n_doppler = static_cast<int>(doppler_fraction * count);
    std::vector<channel::CsiTensor> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const std::uint64_t idx = offset + static_cast<std::uint64_t>(i);
      samples.push_back(i < count - n_doppler
                            ? channel::generate_sample(scenario, idx)
                            : channel::generate_doppler_sample(scenario, idx, speed, elapsed));
    }
    io::DatasetMeta meta;
    meta.fields["split"] = split;
    meta.fields["seed"] = std::to_string(scenario.seed);
    meta.fields["index_offset"] = std::to_string(offset);
    io::write_dataset(samples, meta, (out / (split + ".csid")).string());
    manifest[split] = {{"count", count}, {"index_offset", offset}, {"doppler_count", n_doppler}};
    offset += 1000000;  // disjoint per-sample streams across splits
  }
  std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";
  std::printf("wrote train/val/test datasets to %s\n", out.string().c_str());
  return 0;
}

// ---- train ----

int cmd_train(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  require_file(cfg, "train_dataset");
  require_file(cfg, "val_dataset");
  const std::uint64_t seed = resolve_seed(cfg, o);
  const std::string mode = cfg.value("mode", "two-stage");
  if (mode != "two-stage" && mode != "multi-ratio" && mode != "fine-tune")
    throw ConfigError("train: mode must be two-stage, multi-ratio or fine-tune");
  const auto out = prepare_out(o);

  auto train_set = io::read_dataset(cfg.at("train_dataset").get<std::string>());
  auto val_set = io::read_dataset(cfg.at("val_dataset").get<std::string>());
  if (train_set.empty() || val_set.empty()) throw DataError("train: empty dataset");
  const int n_c = train_set.front().n_c, n_t = train_set.front().n_t;
  const int m = resolve_m(cfg, o, n_c, n_t);

  codec::PipelineModel<float> model = [&] {
    if (cfg.contains("init_checkpoint")) {
      require_file(cfg, "init_checkpoint");
      return io::load_checkpoint<float>(cfg.at("init_checkpoint").get<std::string>());
    }
    const json mj = cfg.value("model", json::object());
    return codec::build_model<float>(n_c, n_t, layers_from_json(mj.value("layers", json::object()), o),
                                     selfinfo_from_json(mj.value("selfinfo", json::object())), seed);
  }();
  if (model.n_c != n_c || model.n_t != n_t)
    throw DimensionError("train: checkpoint shape does not match dataset");

  const auto cfg1 = traincfg_from_json(cfg.value("stage1", json::object()), o, seed);
  const auto cfg2 = traincfg_from_json(cfg.value("stage2", json::object()), o, seed + 1);

  train::TrainLog log;
  if (mode == "fine-tune") {
    const int budget = cfg.value("fine_tune_budget", static_cast<int>(train_set.size()));
    log = train::fine_tune(model, train_set, val_set, budget, m, cfg2);
  } else {
    log = train::train_stage1(model, train_set, val_set, m, cfg1);
    if (!o.stage1_only) {
      if (mode == "multi-ratio") {
        train::RatioSchedule schedule;
        for (const auto& v : cfg.value("schedule", json::array({m})))
          schedule.m_values.push_back(v.get<int>());
        schedule.validate(model.flat_size());
        log.append(train::train_multi_ratio(model, train_set, val_set, schedule, cfg2));
      } else {
        log.append(train::train_stage2(model, train_set, val_set, m, cfg2));
      }
    }
  }

  io::save_checkpoint((out / "model.ckpt").string(), model);
  log.write_csv((out / "trainlog.csv").string());
  std::printf("best validation loss %.6g (epoch %d); checkpoint at %s\n", log.best_val,
              log.best_epoch, (out / "model.ckpt").string().c_str());
  return 0;
}

// ---- eval / ablate / quantize-eval ----

eval::EvalReport run_eval(codec::PipelineModel<float>& model,
                          const std::vector<channel::CsiTensor>& test, int m,
                          const json& cfg, const CommonOpts& o, eval::Variant variant,
                          const quant::Quantizer* q = nullptr) {
  eval::EvalOptions opts;
  opts.snr_db = cfg.value("snr_db", std::numeric_limits<double>::infinity());
  opts.variant = variant;
  opts.seed = resolve_seed(cfg, o);
  opts.quantizer = q;
  auto report = eval::evaluate(model, test, m, opts);
  report.scenario = cfg.value("scenario_name", "default");
  return report;
}

int cmd_eval(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  require_file(cfg, "checkpoint");
  require_file(cfg, "dataset");
  const auto out = prepare_out(o);
  auto model = io::load_checkpoint<float>(cfg.at("checkpoint").get<std::string>());
  auto test = io::read_dataset(cfg.at("dataset").get<std::string>());
  const int m = resolve_m(cfg, o, model.n_c, model.n_t);

  const auto report = run_eval(model, test, m, cfg, o, eval::Variant::kFull);
  std::ofstream os(out / "eval.csv");
  os << eval::EvalReport::csv_header() << "\n" << report.csv_row() << "\n";
  const auto params = eval::count_params(model);
  const auto flops = eval::count_flops(model.n_c, model.n_t, model.layers);
  std::printf("%s\n%s\n", eval::EvalReport::csv_header().c_str(), report.csv_row().c_str());
  std::printf("params: EN %zu, PD %zu, TP %zu, total %zu; flops: ue %.3g, bs %.3g\n",
              params.at("EN"), params.at("PD"), params.at("TP"), params.at("total"), flops.ue,
              flops.bs);
  return 0;
}

int cmd_ablate(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  require_file(cfg, "checkpoint");
  require_file(cfg, "dataset");
  const auto out = prepare_out(o);
  auto model = io::load_checkpoint<float>(cfg.at("checkpoint").get<std::string>());
  auto test = io::read_dataset(cfg.at("dataset").get<std::string>());
  const int m = resolve_m(cfg, o, model.n_c, model.n_t);

  std::ofstream os(out / "ablation.csv");
  os << eval::EvalReport::csv_header() << "\n";
  std::printf("%s\n", eval::EvalReport::csv_header().c_str());
  for (auto variant : {eval::Variant::kFull, eval::Variant::kNoEncoder, eval::Variant::kNoPrelim,
                       eval::Variant::kNoTransformer}) {
    const auto report = run_eval(model, test, m, cfg, o, variant);
    os << report.csv_row() << "\n";
    std::printf("%s\n", report.csv_row().c_str());
  }
  return 0;
}

int cmd_quantize_eval(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  require_file(cfg, "checkpoint");
  require_file(cfg, "dataset");
  require_file(cfg, "train_dataset");
  const auto out = prepare_out(o);
  auto model = io::load_checkpoint<float>(cfg.at("checkpoint").get<std::string>());
  auto test = io::read_dataset(cfg.at("dataset").get<std::string>());
  auto train_set = io::read_dataset(cfg.at("train_dataset").get<std::string>());
  const int m = resolve_m(cfg, o, model.n_c, model.n_t);

  std::vector<double> values;
  const std::size_t stride = std::max<std::size_t>(1, train_set.size() / 256);
  for (std::size_t i = 0; i < train_set.size(); i += stride) {
    auto cw = codec::encode(model, train_set[i], m);
    values.insert(values.end(), cw.values.begin(), cw.values.end());
  }

  std::ofstream os(out / "quantize_eval.csv");
  os << eval::EvalReport::csv_header() << "\n";
  std::printf("%s\n", eval::EvalReport::csv_header().c_str());
  auto emit = [&](const eval::EvalReport& r) {
    os << r.csv_row() << "\n";
    std::printf("%s\n", r.csv_row().c_str());
  };
  emit(run_eval(model, test, m, cfg, o, eval::Variant::kFull));
  for (const auto& b : cfg.value("bits_list", json::array({3, 4, 6}))) {
    auto q = quant::lloyd_max_train(values, b.get<int>());
    emit(run_eval(model, test, m, cfg, o, eval::Variant::kFull, &q));
  }
  return 0;
}

// ---- rate ----

// Users' spatial channels: zero-pad the truncated angle-delay CSI back to the
// full delay axis, invert the unitary transform, and read per-subcarrier rows.
Eigen::MatrixXcd spatial_rows(const channel::CsiTensor& h, int n_f) {
  Eigen::MatrixXcd padded = Eigen::MatrixXcd::Zero(n_f, h.n_t);
  padded.topRows(h.n_c) = channel::to_complex(h);
  return channel::from_angle_delay(padded);
}

int cmd_rate(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  require_file(cfg, "checkpoint");
  require_file(cfg, "dataset");
  const auto out = prepare_out(o);
  auto model = io::load_checkpoint<float>(cfg.at("checkpoint").get<std::string>());
  auto test = io::read_dataset(cfg.at("dataset").get<std::string>());
  const int m = resolve_m(cfg, o, model.n_c, model.n_t);
  const int k_users = cfg.value("k_users", 4);
  const int n_f = cfg.value("n_f", 4 * model.n_c);
  const int stride = cfg.value("subcarrier_stride", std::max(1, n_f / 8));
  const double tx_power = cfg.value("tx_power", 1.0);
  if (k_users < 1 || static_cast<std::size_t>(k_users) > test.size())
    throw ConfigError("rate: k_users out of range for the dataset");
  if (n_f < model.n_c) throw ConfigError("rate: n_f must be >= the retained delay rows");

  std::vector<std::string> variants;
  for (const auto& v : cfg.value("variants", json::array({"full", "mean_fill"})))
    variants.push_back(v.get<std::string>());
  std::vector<double> snrs;
  for (const auto& v : cfg.value("snr_db_list", json::array({0, 5, 10, 15, 20})))
    snrs.push_back(v.get<double>());

  std::ofstream os(out / "rate.csv");
  os << "snr_db,users,mean_rate,variant\n";
  std::printf("snr_db,users,mean_rate,variant\n");
  for (const auto& vname : variants) {
    eval::EvalOptions opts;
    opts.variant = variant_from_name(vname);
    opts.seed = resolve_seed(cfg, o);
    const auto rec = eval::reconstruct(model, test, m, opts);

    for (double snr : snrs) {
      double acc = 0.0;
      int draws = 0;
      const std::size_t groups = rec.h_ref.size() / static_cast<std::size_t>(k_users);
      for (std::size_t g = 0; g < groups; ++g) {
        std::vector<Eigen::MatrixXcd> true_sf, rec_sf;
        for (int u = 0; u < k_users; ++u) {
          true_sf.push_back(spatial_rows(rec.h_ref[g * k_users + u], n_f));
          rec_sf.push_back(spatial_rows(rec.h_hat[g * k_users + u], n_f));
        }
        for (int f = 0; f < n_f; f += stride) {
          eval::MultiUserSetup setup;
          setup.k_users = k_users;
          setup.tx_power = tx_power;
          setup.noise_power = tx_power / std::pow(10.0, snr / 10.0);
          setup.true_h.resize(k_users, model.n_t);
          setup.recon_h.resize(k_users, model.n_t);
          for (int u = 0; u < k_users; ++u) {
            setup.true_h.row(u) = true_sf[static_cast<std::size_t>(u)].row(f);
            setup.recon_h.row(u) = rec_sf[static_cast<std::size_t>(u)].row(f);
          }
          const auto rates = eval::sum_rate(setup, eval::zf_precode(setup.recon_h));
          double total = 0.0;
          for (double r : rates) total += r;
          acc += total;
          ++draws;
        }
      }
      const double mean_rate = acc / std::max(1, draws);
      os << snr << "," << k_users << "," << mean_rate << "," << vname << "\n";
      std::printf("%g,%d,%g,%s\n", snr, k_users, mean_rate, vname.c_str());
    }
  }
  return 0;
}

// ---- inspect-selfinfo ----

int cmd_inspect_selfinfo(const CommonOpts& o) {
  const json cfg = load_config(o.config_path);
  const auto out = prepare_out(o);
  channel::CsiTensor sample;
  if (cfg.contains("dataset")) {
    require_file(cfg, "dataset");
    auto data = io::read_dataset(cfg.at("dataset").get<std::string>());
    const int idx = cfg.value("sample_index", 0);
    if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
      throw ConfigError("inspect-selfinfo: sample_index out of range");
    sample = data[static_cast<std::size_t>(idx)];
  } else if (cfg.contains("scenario")) {
    auto sc = scenario_from_json(cfg.at("scenario"));
    sample = channel::generate_sample(sc, cfg.value("sample_index", 0));
  } else {
    throw ConfigError("inspect-selfinfo: need 'dataset' or 'scenario'");
  }

  const auto si_cfg = selfinfo_from_json(cfg.value("selfinfo", json::object()));
  const auto map = selfinfo::self_information_analytic(sample, si_cfg);
  std::ofstream os(out / "selfinfo.csv");
  os << "plane,row,col,value,self_info,mask\n";
  for (int p = 0; p < 2; ++p)
    for (int r = 0; r < sample.n_c; ++r)
      for (int c = 0; c < sample.n_t; ++c) {
        const std::size_t i =
            (static_cast<std::size_t>(p) * sample.n_c + r) * sample.n_t + c;
        os << p << "," << r << "," << c << "," << sample.data[i] << "," << map.values[i] << ","
           << static_cast<int>(map.mask[i]) << "\n";
      }
  std::printf("wrote %s\n", (out / "selfinfo.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("CSINET_THREADS")) Eigen::setNbThreads(std::atoi(threads));

  CLI::App app{"CSI feedback compression toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::map<std::string, std::function<int(const CommonOpts&)>> dispatch = {
      {"gen", cmd_gen},
      {"train", cmd_train},
      {"eval", cmd_eval},
      {"rate", cmd_rate},
      {"quantize-eval", cmd_quantize_eval},
      {"inspect-selfinfo", cmd_inspect_selfinfo},
      {"ablate", cmd_ablate},
  };
  add_common(app.add_subcommand("gen", "generate synthetic CSI datasets"), opts);
  add_common(app.add_subcommand("train", "run two-stage / multi-ratio / fine-tune training"), opts);
  add_common(app.add_subcommand("eval", "evaluate a checkpoint on a dataset"), opts);
  add_common(app.add_subcommand("rate", "multi-user sum-rate sweep"), opts);
  add_common(app.add_subcommand("quantize-eval", "evaluate with Lloyd-Max quantized feedback"),
             opts);
  add_common(app.add_subcommand("inspect-selfinfo", "dump self-information map and mask as CSV"),
             opts);
  add_common(app.add_subcommand("ablate", "run the full model and its three ablations"), opts);

  try {
    app.parse(argc, argv);
    return dispatch.at(app.get_subcommands().front()->get_name())(opts);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {  // DimensionError derives from ConfigError
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  }
}
