#include "sparsedet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"
#include "sparsedet/kernels.hpp"

namespace sparsedet {

namespace {

constexpr std::string_view kCheckpointMagic = "SPM1";

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void LatentModel::validate() const {
  const std::size_t d = dim_d();
  if (d == 0 || dim_e() == 0) throw ShapeError("model dimensions must be positive");
  if (b_in.size() != d) throw ShapeError("b_in must have D entries");
  if (w_out.rows() != d || w_out.cols() != kNumClasses) throw ShapeError("w_out must be D x 2");
  if (b_out.size() != kNumClasses) throw ShapeError("b_out must have 2 entries");
  if (sparsity_k < 1 || sparsity_k > d) {
    throw ConfigError("sparsity k=" + std::to_string(sparsity_k) + " outside [1, " + std::to_string(d) + "]");
  }
  if (!all_finite(w_in.values()) || !all_finite(b_in) || !all_finite(w_out.values()) || !all_finite(b_out)) {
    throw NumericError("model has non-finite parameters");
  }
}

LatentModel zero_model(std::size_t dim_e, std::size_t dim_d, std::size_t k) {
  LatentModel m;
  m.w_in = MatrixD(dim_e, dim_d, 0.0);
  m.b_in.assign(dim_d, 0.0);
  m.w_out = MatrixD(dim_d, kNumClasses, 0.0);
  m.b_out.assign(kNumClasses, 0.0);
  m.sparsity_k = k;
  m.validate();
  return m;
}

LatentModel init_model(std::size_t dim_e, std::size_t dim_d, std::size_t k, std::uint64_t seed) {
  LatentModel m = zero_model(dim_e, dim_d, k);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](MatrixD& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w.values()) v = dist(rng);
  };
  fill(m.w_in);
  fill(m.w_out);
  return m;
}

void topk_inplace(std::span<double> v, std::size_t k, std::span<std::uint8_t> mask) {
  const std::size_t d = v.size();
  if (k < 1 || k > d) throw ConfigError("topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
  if (mask.size() != d) throw ShapeError("topk: mask size differs from vector size");
  if (k == d) {
    std::fill(mask.begin(), mask.end(), std::uint8_t{1});
    return;
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Strict total order: larger value first, then lower index.
  auto before = [&v](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), before);
  std::fill(mask.begin(), mask.end(), std::uint8_t{0});
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (!mask[i]) v[i] = 0.0;
  }
}

TopkResult topk_forward(std::span<const double> v, std::size_t k) {
  if (!all_finite(v)) throw NumericError("topk: input has non-finite entries");
  TopkResult out{std::vector<double>(v.begin(), v.end()), std::vector<std::uint8_t>(v.size())};
  topk_inplace(out.values, k, out.mask);
  return out;
}

std::vector<double> topk_backward(std::span<const double> grad_out, std::span<const std::uint8_t> mask) {
  if (grad_out.size() != mask.size()) throw ShapeError("topk_backward: gradient and mask sizes differ");
  std::vector<double> grad_in(grad_out.size());
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = mask[i] ? grad_out[i] : 0.0;
  return grad_in;
}

ForwardTrace forward(const LatentModel& model, const MatrixD& x, LatentActivation activation) {
  if (x.cols() != model.dim_e()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, model expects E=" +
                     std::to_string(model.dim_e()));
  }
  model.validate();
  const std::size_t n = x.rows();
  const std::size_t d = model.dim_d();
  ForwardTrace t;
  t.pre_latent = MatrixD(n, d);
  kernels::affine(x, model.w_in, model.b_in, t.pre_latent);
  for (auto& v : t.pre_latent.values()) v = v > 0.0 ? v : 0.0;

  t.latent = t.pre_latent;
  t.kept_mask = Matrix<std::uint8_t>(n, d, 1);
  if (activation == LatentActivation::topk) {
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const auto i = static_cast<std::size_t>(r);
      topk_inplace(t.latent.row(i), model.sparsity_k, t.kept_mask.row(i));
    }
  }
  t.logits = MatrixD(n, kNumClasses);
  kernels::affine(t.latent, model.w_out, model.b_out, t.logits);
  return t;
}

Gradients backward(const LatentModel& model, const ForwardTrace& trace, const MatrixD& x,
                   const MatrixD& grad_logits) {
  const std::size_t n = x.rows();
  const std::size_t d = model.dim_d();
  if (x.cols() != model.dim_e() || trace.latent.rows() != n || trace.latent.cols() != d ||
      grad_logits.rows() != n || grad_logits.cols() != kNumClasses) {
    throw ShapeError("backward: trace, input and gradient shapes disagree");
  }
  Gradients g;
  g.w_out = MatrixD(d, kNumClasses);
  kernels::gemm_tn(trace.latent, grad_logits, g.w_out);
  g.b_out.assign(kNumClasses, 0.0);
  kernels::column_sums(grad_logits, g.b_out);

  MatrixD grad_pre(n, d);
  kernels::gemm_nt(grad_logits, model.w_out, grad_pre);
  // Through TopK (mask) and relu (subgradient 0 at 0).
  auto& gp = grad_pre.values();
  const auto& mask = trace.kept_mask.values();
  const auto& pre = trace.pre_latent.values();
  for (std::size_t i = 0; i < gp.size(); ++i) {
    if (!mask[i] || !(pre[i] > 0.0)) gp[i] = 0.0;
  }

  g.w_in = MatrixD(model.dim_e(), d);
  kernels::gemm_tn(x, grad_pre, g.w_in);
  g.b_in.assign(d, 0.0);
  kernels::column_sums(grad_pre, g.b_in);
  g.input = MatrixD(n, model.dim_e());
  kernels::gemm_nt(grad_pre, model.w_in, g.input);
  return g;
}

double sparsity_ratio(const ForwardTrace& trace) {
  const auto& v = trace.latent.values();
  if (v.empty()) return 0.0;
  const auto zeros = std::count(v.begin(), v.end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(v.size());
}

MatrixD log_softmax(const MatrixD& logits) {
  MatrixD out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < row.size(); ++c) out(r, c) = row[c] - lse;
  }
  return out;
}

LossResult cross_entropy(const MatrixD& logits, std::span<const std::uint8_t> targets,
                         std::span<const double> weights) {
  const std::size_t n = logits.rows();
  if (targets.size() != n) throw ShapeError("cross_entropy: one target per row required");
  if (!weights.empty() && weights.size() != n) throw ShapeError("cross_entropy: one weight per row required");
  if (n == 0) throw ShapeError("cross_entropy: empty batch");
  const MatrixD logp = log_softmax(logits);
  LossResult res;
  res.grad_logits = MatrixD(n, logits.cols());
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weights.empty() ? 1.0 : weights[r];
    const std::size_t t = targets[r];
    if (t >= logits.cols()) throw ShapeError("cross_entropy: target out of range");
    total += -w * logp(r, t);
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      const double p = std::exp(logp(r, c));
      res.grad_logits(r, c) = w * inv_n * (p - (c == t ? 1.0 : 0.0));
    }
  }
  res.loss = total * inv_n;
  return res;
}

std::vector<double> bonafide_scores(const LatentModel& model, const MatrixD& x) {
  const MatrixD logp = log_softmax(forward(model, x).logits);
  std::vector<double> scores(logp.rows());
  for (std::size_t r = 0; r < logp.rows(); ++r) scores[r] = logp(r, kBonafideLogit);
  return scores;
}

LatentModel round_to_float(const LatentModel& model) {
  LatentModel out = model;
  auto round = [](auto& values) {
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
  };
  round(out.w_in.values());
  round(out.b_in);
  round(out.w_out.values());
  round(out.b_out);
  return out;
}

void save_checkpoint(const LatentModel& model, const CheckpointInfo& info, const std::filesystem::path& path) {
  model.validate();
  nlohmann::ordered_json header;
  header["dim_e"] = model.dim_e();
  header["dim_d"] = model.dim_d();
  header["k"] = model.sparsity_k;
  header["seed"] = info.seed;
  header["epoch"] = info.epoch;
  header["parameter_order"] = {"w_in", "b_in", "w_out", "b_out"};
  if (!info.manifest.empty()) header["manifest"] = info.manifest;
  const std::string text = header.dump();

  std::string bytes(kCheckpointMagic);
  io::put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  auto put_all = [&bytes](const auto& values) {
    for (double v : values) io::put_f32(bytes, static_cast<float>(v));
  };
  put_all(model.w_in.values());
  put_all(model.b_in);
  put_all(model.w_out.values());
  put_all(model.b_out);
  io::write_file(path, bytes);
}

LatentModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  const std::string bytes = io::read_file(path);
  const std::string where = path.string();
  if (bytes.size() < 8 || std::string_view(bytes).substr(0, 4) != kCheckpointMagic) {
    throw FormatError(where + ": not a checkpoint (magic mismatch)");
  }
  const std::size_t len = io::get_u32(bytes, 4);
  if (bytes.size() < 8 + len) throw FormatError(where + ": truncated header");
  std::size_t e = 0, d = 0, k = 0;
  CheckpointInfo parsed;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(8, len));
    e = header.at("dim_e").get<std::size_t>();
    d = header.at("dim_d").get<std::size_t>();
    k = header.at("k").get<std::size_t>();
    parsed.seed = header.at("seed").get<std::uint64_t>();
    parsed.epoch = header.at("epoch").get<std::size_t>();
    if (header.contains("manifest")) parsed.manifest = header.at("manifest").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(where + ": malformed header: " + ex.what());
  }
  const std::size_t count = e * d + d + d * kNumClasses + kNumClasses;
  if (bytes.size() != 8 + len + 4 * count) {
    throw FormatError(where + ": payload size does not match dims E=" + std::to_string(e) +
                      ", D=" + std::to_string(d));
  }
  std::size_t offset = 8 + len;
  auto take = [&](auto& values) {
    for (auto& v : values) {
      v = io::get_f32(bytes, offset);
      offset += 4;
    }
  };
  LatentModel m;
  m.w_in = MatrixD(e, d);
  m.b_in.resize(d);
  m.w_out = MatrixD(d, kNumClasses);
  m.b_out.resize(kNumClasses);
  m.sparsity_k = k;
  take(m.w_in.values());
  take(m.b_in);
  take(m.w_out.values());
  take(m.b_out);
  m.validate();
  if (info) *info = parsed;
  return m;
}

}  // namespace sparsedet
