#include "csinet/eval.hpp"

#include <cmath>
#include <complex>
#include <sstream>

namespace csinet::eval {

namespace {

std::complex<double> hermitian_trace(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return (a.adjoint() * b).trace();
}

}  // namespace

double nmse(const std::vector<channel::CsiTensor>& h, const std::vector<channel::CsiTensor>& h_hat) {
  if (h.empty() || h.size() != h_hat.size()) throw DimensionError("nmse: sample count mismatch");
  double acc = 0.0;
  for (std::size_t s = 0; s < h.size(); ++s) {
    if (h[s].size() != h_hat[s].size()) throw DimensionError("nmse: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < h[s].size(); ++i) {
      const double d = h[s].data[i] - h_hat[s].data[i];
      num += d * d;
      den += h[s].data[i] * h[s].data[i];
    }
    if (!(den > 0)) throw NumericalError("nmse: zero-norm reference");
    acc += num / den;
  }
  return acc / static_cast<double>(h.size());
}

double nmse_db(double linear) {
  if (linear < 0) throw NumericalError("nmse_db: negative ratio");
  if (linear == 0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(linear);
}

double sgcs(const std::vector<channel::CsiTensor>& h, const std::vector<channel::CsiTensor>& h_hat) {
  if (h.empty() || h.size() != h_hat.size()) throw DimensionError("sgcs: sample count mismatch");
  double acc = 0.0;
  for (std::size_t s = 0; s < h.size(); ++s) {
    const Eigen::MatrixXcd a = channel::to_complex(h[s]);
    const Eigen::MatrixXcd b = channel::to_complex(h_hat[s]);
    const double na = a.squaredNorm(), nb = b.squaredNorm();
    if (!(na > 0) || !(nb > 0)) throw NumericalError("sgcs: zero-norm input");
    acc += std::norm(hermitian_trace(a, b)) / (na * nb);
  }
  return acc / static_cast<double>(h.size());
}

void MultiUserSetup::validate() const {
  if (k_users < 1 || true_h.rows() != k_users || recon_h.rows() != k_users)
    throw DimensionError("multiuser: user count mismatch");
  if (true_h.cols() != recon_h.cols()) throw DimensionError("multiuser: antenna count mismatch");
  if (k_users > true_h.cols()) throw ConfigError("multiuser: need k_users <= n_t");
  if (!(tx_power > 0) || !(noise_power > 0)) throw ConfigError("multiuser: powers must be positive");
}

Eigen::MatrixXcd zf_precode(const Eigen::MatrixXcd& recon_h) {
  const Eigen::Index k = recon_h.rows();
  Eigen::MatrixXcd gram = recon_h * recon_h.adjoint();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(gram);
  if (lu.rank() < k) {
    // rank-deficient reconstruction; regularize rather than fail
    const double delta = 1e-10 * std::max(1.0, gram.real().trace() / static_cast<double>(k));
    gram += delta * Eigen::MatrixXcd::Identity(k, k);
    lu.compute(gram);
  }
  Eigen::MatrixXcd w = recon_h.adjoint() * lu.inverse();
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    const double n = w.col(c).norm();
    if (!(n > 0)) throw NumericalError("zf: zero precoder column");
    w.col(c) /= n;
  }
  return w;
}

std::vector<double> sum_rate(const MultiUserSetup& setup, const Eigen::MatrixXcd& precoders) {
  setup.validate();
  if (precoders.rows() != setup.true_h.cols() || precoders.cols() != setup.k_users)
    throw DimensionError("sum_rate: precoder shape mismatch");
  const double p = setup.tx_power / static_cast<double>(setup.k_users);
  std::vector<double> rates(static_cast<std::size_t>(setup.k_users));
  for (int k = 0; k < setup.k_users; ++k) {
    double signal = 0.0, interference = 0.0;
    for (int j = 0; j < setup.k_users; ++j) {
      const double g = std::norm((setup.true_h.row(k) * precoders.col(j)).value());
      if (j == k)
        signal = p * g;
      else
        interference += p * g;
    }
    rates[static_cast<std::size_t>(k)] = std::log2(1.0 + signal / (interference + setup.noise_power));
  }
  return rates;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoEncoder: return "no_encoder";
    case Variant::kNoPrelim: return "no_prelim";
    case Variant::kNoTransformer: return "no_transformer";
    case Variant::kMeanFill: return "mean_fill";
  }
  throw ConfigError("variant: unknown");
}

namespace {

void quantize_values(ad::Var<float>& values, const quant::Quantizer& q) {
  for (float& v : values->value.data)
    v = static_cast<float>(q.dequantize(q.quantize(static_cast<double>(v))));
}

// Mean-fill baseline: top-m raw entries by magnitude placed into a tensor of
// the sample mean; no learned components.
channel::CsiTensor mean_fill_baseline(const channel::CsiTensor& h, int m) {
  codec::Codeword cw;
  cw.m = m;
  cw.n_c = h.n_c;
  cw.n_t = h.n_t;
  cw.positions = codec::detail::select_top_m(h.data.data(), static_cast<int>(h.size()), m);
  double mean = 0.0;
  for (double v : h.data) mean += v;
  cw.values.push_back(mean / static_cast<double>(h.size()));
  for (int p : cw.positions) cw.values.push_back(h.data[static_cast<std::size_t>(p)]);
  return codec::fill(cw, h.n_c, h.n_t);
}

}  // namespace

Reconstruction reconstruct(codec::PipelineModel<float>& model,
                           const std::vector<channel::CsiTensor>& dataset, int m,
                           const EvalOptions& options) {
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  for (const auto& s : dataset)
    if (s.n_c != model.n_c || s.n_t != model.n_t)
      throw DimensionError("evaluate: dataset/model shape mismatch");

  Reconstruction out;
  out.h_ref = dataset;
  out.h_hat.reserve(dataset.size());

  std::vector<channel::CsiTensor> inputs;
  inputs.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    inputs.push_back(std::isinf(options.snr_db)
                         ? dataset[i]
                         : channel::add_awgn(dataset[i], options.snr_db, options.seed + i));

  if (options.variant == Variant::kMeanFill) {
    for (const auto& h : inputs) out.h_hat.push_back(mean_fill_baseline(h, m));
    return out;
  }

  Rng rng(options.seed);
  for (std::size_t start = 0; start < inputs.size();
       start += static_cast<std::size_t>(options.batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), inputs.size() - start);
    ad::Tensor<float> batch({static_cast<int>(count), 2, model.n_c, model.n_t});
    for (std::size_t b = 0; b < count; ++b)
      for (std::size_t i = 0; i < inputs[start + b].size(); ++i)
        batch.data[b * inputs[start + b].size() + i] =
            static_cast<float>(inputs[start + b].data[i]);

    codec::EncodeResult<float> enc =
        options.variant == Variant::kNoEncoder
            ? codec::encode_random_batch(model, batch, m, rng)
            : codec::encode_batch(model, batch, m, codec::RunMode::kInference);
    if (options.quantizer) quantize_values(enc.values, *options.quantizer);

    ad::Var<float> rec;
    switch (options.variant) {
      case Variant::kNoPrelim: {
        ad::Var<float> filled =
            ad::reshape(ad::mean_fill_scatter(enc.values, enc.positions, model.flat_size()),
                        {static_cast<int>(count), 2, model.n_c, model.n_t});
        rec = codec::token_predict_batch(model, filled);
        break;
      }
      case Variant::kNoTransformer:
        rec = codec::preliminary_decode_batch(model, enc, codec::RunMode::kInference);
        break;
      default:
        rec = codec::decode_batch(model, enc, codec::RunMode::kInference);
        break;
    }
    for (std::size_t b = 0; b < count; ++b)
      out.h_hat.push_back(
          codec::detail::sample_to_csi(rec->value, static_cast<int>(b), model.n_c, model.n_t));
  }
  return out;
}

EvalReport evaluate(codec::PipelineModel<float>& model,
                    const std::vector<channel::CsiTensor>& dataset, int m,
                    const EvalOptions& options) {
  const Reconstruction rec = reconstruct(model, dataset, m, options);
  EvalReport r;
  r.variant = variant_name(options.variant);
  r.m = m;
  r.sigma = codec::compression_ratio(m, 64, 10, model.n_c, model.n_t);
  r.nmse_linear = nmse(rec.h_ref, rec.h_hat);
  r.nmse_db = nmse_db(r.nmse_linear);
  r.sgcs = sgcs(rec.h_ref, rec.h_hat);
  r.samples = static_cast<int>(dataset.size());
  r.quantizer_bits = options.quantizer ? options.quantizer->bits : 0;
  r.snr_db = options.snr_db;
  return r;
}

std::string EvalReport::csv_header() {
  return "scenario,variant,m,sigma,nmse_linear,nmse_db,sgcs,mean_rate,samples,quantizer_bits,snr_db";
}

namespace {

std::string field_or_sentinel(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_field(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os << scenario << "," << variant << "," << m << "," << field_or_sentinel(sigma) << ","
     << field_or_sentinel(nmse_linear) << "," << field_or_sentinel(nmse_db) << ","
     << field_or_sentinel(sgcs) << "," << field_or_sentinel(mean_rate) << "," << samples << ","
     << quantizer_bits << "," << field_or_sentinel(snr_db);
  return os.str();
}

EvalReport EvalReport::from_csv_row(const std::string& row) {
  std::vector<std::string> fields;
  std::stringstream ss(row);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (fields.size() != 11) throw DataError("eval report: malformed CSV row");
  EvalReport r;
  r.scenario = fields[0];
  r.variant = fields[1];
  r.m = std::stoi(fields[2]);
  r.sigma = parse_field(fields[3]);
  r.nmse_linear = parse_field(fields[4]);
  r.nmse_db = parse_field(fields[5]);
  r.sgcs = parse_field(fields[6]);
  r.mean_rate = parse_field(fields[7]);
  r.samples = std::stoi(fields[8]);
  r.quantizer_bits = std::stoi(fields[9]);
  r.snr_db = parse_field(fields[10]);
  return r;
}

std::map<std::string, std::size_t> count_params(const codec::PipelineModel<float>& model) {
  std::map<std::string, std::size_t> out;
  out["EN"] = model.params.count_in_group("EN");
  out["PD"] = model.params.count_in_group("PD");
  out["TP"] = model.params.count_in_group("TP");
  std::size_t total = 0;
  for (const auto& [g, n] : out) total += n;
  out["total"] = total;
  return out;
}

FlopEstimate count_flops(int n_c, int n_t, const codec::LayerConfig& layers) {
  const double nn = static_cast<double>(n_c) * n_t;
  const double L = nn / (static_cast<double>(layers.s_p) * layers.s_p) + 1.0;
  const double dm = layers.d_m, dff = layers.d_ff, nt = layers.n_trans;
  FlopEstimate f;
  f.ue = 2313.0 * nn + std::log2(2.0 * nn) + 64.0 * nn * std::log2(nn);
  f.bs = 3204.0 * nn + 2.0 * dm * nn + nt * (4.0 * L * dm * dm + 2.0 * L * L * dm + 2.0 * dm * dff);
  return f;
}

}  // namespace csinet::eval
