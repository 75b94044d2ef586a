#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sparsedet/matrix.hpp"

namespace sparsedet {

// Logit column order used everywhere: 0 = bonafide, 1 = spoof.
inline constexpr std::size_t kBonafideLogit = 0;
inline constexpr std::size_t kSpoofLogit = 1;
inline constexpr std::size_t kNumClasses = 2;

// E -> D affine + relu, TopK over the D latents, D -> 2 affine.
struct LatentModel {
  MatrixD w_in;                 // E x D
  std::vector<double> b_in;     // D
  MatrixD w_out;                // D x 2
  std::vector<double> b_out;    // 2
  std::size_t sparsity_k = 0;   // 1 <= k <= D; k == D is the dense baseline

  std::size_t dim_e() const { return w_in.rows(); }
  std::size_t dim_d() const { return w_in.cols(); }
  bool dense() const { return sparsity_k == dim_d(); }

  // Throws ShapeError / ConfigError / NumericError on a broken invariant.
  void validate() const;
  bool operator==(const LatentModel&) const = default;
};

// All-zero model with the given shape.
LatentModel zero_model(std::size_t dim_e, std::size_t dim_d, std::size_t k);

// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
LatentModel init_model(std::size_t dim_e, std::size_t dim_d, std::size_t k, std::uint64_t seed);

struct TopkResult {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
};

// Keeps the k largest entries by signed value (lowest index wins ties).
TopkResult topk_forward(std::span<const double> v, std::size_t k);

// In-place variant used by the batched forward pass; writes mask and zeroes
// the dropped entries of `v`.
void topk_inplace(std::span<double> v, std::size_t k, std::span<std::uint8_t> mask);

std::vector<double> topk_backward(std::span<const double> grad_out, std::span<const std::uint8_t> mask);

// Which latent nonlinearity a forward pass applies after relu. `none` is the
// plain MLP path; with k == D it must produce the same numbers as `topk`.
enum class LatentActivation { topk, none };

struct ForwardTrace {
  MatrixD pre_latent;             // N x D, after relu, before TopK
  MatrixD latent;                 // N x D, after TopK
  Matrix<std::uint8_t> kept_mask; // N x D
  MatrixD logits;                 // N x 2
};

ForwardTrace forward(const LatentModel& model, const MatrixD& x,
                     LatentActivation activation = LatentActivation::topk);

struct Gradients {
  MatrixD w_in;
  std::vector<double> b_in;
  MatrixD w_out;
  std::vector<double> b_out;
  MatrixD input;  // N x E
};

// Reverse-mode gradients of sum_n <grad_logits[n], logits[n]>.
Gradients backward(const LatentModel& model, const ForwardTrace& trace, const MatrixD& x,
                   const MatrixD& grad_logits);

// Fraction of exactly-zero entries of trace.latent.
double sparsity_ratio(const ForwardTrace& trace);

// Row-wise log-softmax of the logits.
MatrixD log_softmax(const MatrixD& logits);

struct LossResult {
  double loss = 0.0;     // weighted mean cross-entropy over the batch
  MatrixD grad_logits;   // d loss / d logits
};

// Softmax cross-entropy against class targets (kBonafideLogit / kSpoofLogit).
// `weights` is empty (all ones) or one weight per row; the loss is
// sum_n w_n * ce_n / N.
LossResult cross_entropy(const MatrixD& logits, std::span<const std::uint8_t> targets,
                         std::span<const double> weights = {});

// Bonafide log-probability per row: higher means more bonafide.
std::vector<double> bonafide_scores(const LatentModel& model, const MatrixD& x);

struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string manifest;  // path of the run manifest that produced the file
};

// JSON header + little-endian f32 payload (w_in, b_in, w_out, b_out).
// Parameters are rounded to f32 on write.
void save_checkpoint(const LatentModel& model, const CheckpointInfo& info,
                     const std::filesystem::path& path);
LatentModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

// Rounds every parameter to float precision (the checkpoint round-trip).
LatentModel round_to_float(const LatentModel& model);

}  // namespace sparsedet
