#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sparsedet/data.hpp"
#include "sparsedet/matrix.hpp"

namespace sparsedet {

enum class BinStrategy { quantile, equal_width };

std::string_view to_string(BinStrategy s);
BinStrategy parse_bin_strategy(std::string_view s);

struct BinningSpec {
  BinStrategy strategy = BinStrategy::quantile;
  std::size_t n_bins = 20;
  bool zero_bin = true;  // exact zeros get their own bin 0

  void validate() const;
};

// Bin index per value. With zero_bin, exact zeros map to 0 and the nonzero
// values to 1..n_bins; bins are left-closed [edge_i, edge_{i+1}).
std::vector<std::uint32_t> discretize(std::span<const double> values, const BinningSpec& spec);

// Plug-in entropy in nats over the occupied bins.
double entropy(std::span<const std::uint32_t> indices);

// Plug-in mutual information in nats from the joint histogram.
double mutual_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

// 2 MI / (H(a) + H(b)), 0 when both entropies vanish. Clamped to [0, 1] to
// absorb rounding only.
double normalized_mutual_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

struct ImportanceMatrix {
  MatrixD values;  // D x F
  std::vector<std::string> dim_names;
  std::vector<std::string> factor_names;
  BinningSpec binning;

  std::size_t n_dims() const { return values.rows(); }
  std::size_t n_factors() const { return values.cols(); }
};

// Entry (d, f) = nMI between discretized latent column d and factor column f.
// Latent row i must correspond to factor-table row i.
ImportanceMatrix nmi_matrix(const MatrixD& latents, const FactorTable& factors, const BinningSpec& spec);

namespace serial {
ImportanceMatrix nmi_matrix(const MatrixD& latents, const FactorTable& factors, const BinningSpec& spec);
}

// CSV: header `dimension,<factor names>`, one row per dimension.
void write_importance_csv(const ImportanceMatrix& m, const std::filesystem::path& path);
ImportanceMatrix read_importance_csv(const std::filesystem::path& path);
void write_importance_json(const ImportanceMatrix& m, const std::filesystem::path& path,
                           const std::string& manifest = {});

}  // namespace sparsedet
