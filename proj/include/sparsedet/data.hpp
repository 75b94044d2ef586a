#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparsedet/matrix.hpp"

namespace sparsedet {

enum class SampleClass { bonafide, spoof };

std::string_view to_string(SampleClass c);
SampleClass parse_sample_class(std::string_view s);

inline constexpr std::string_view kBonafideFactor = "bonafide";

struct SampleLabel {
  std::string sample_id;
  SampleClass cls = SampleClass::bonafide;
  std::optional<std::string> attack_id;  // present iff cls == spoof

  // Factor this sample realizes: its attack tag, or "bonafide".
  std::string factor() const;
  bool operator==(const SampleLabel&) const = default;
};

// Row i of `matrix` is the embedding of `ids[i]`. `labels` is either empty
// (unlabeled file) or parallel to `ids`.
struct EmbeddingSet {
  std::vector<std::string> ids;
  std::vector<SampleLabel> labels;
  MatrixF matrix;

  std::size_t size() const { return matrix.rows(); }
  std::size_t dim_e() const { return matrix.cols(); }
  bool labeled() const { return !labels.empty(); }
  bool operator==(const EmbeddingSet&) const = default;
};

// Throws DataError/FormatError when an EmbeddingSet invariant is broken.
void validate(const EmbeddingSet& set);

// One-hot factor indicators for a subset of samples. `sample_index[i]` is the
// row in the source label list that table row i came from.
struct FactorTable {
  std::vector<std::string> factors;
  std::vector<std::size_t> sample_index;
  Matrix<std::uint8_t> indicator;

  std::size_t n_factors() const { return factors.size(); }
  std::size_t n_samples() const { return indicator.rows(); }
  // Column f as a 0/1 vector.
  std::vector<std::uint32_t> column(std::size_t f) const;
  std::vector<std::size_t> column_counts() const;
};

enum class PlantedBasis { random_orthonormal, standard };

struct SynthConfig {
  std::size_t n_samples = 4000;
  std::size_t dim_e = 32;
  std::size_t n_attacks = 7;
  double bonafide_fraction = 0.2;
  double factor_strength = 2.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;
  PlantedBasis basis = PlantedBasis::random_orthonormal;

  void validate() const;
};

struct SynthData {
  EmbeddingSet embeddings;
  FactorTable factors;
};

// Attack names used by the generator: A01, A02, ...
std::string synthetic_attack_name(std::size_t j);

// (n_attacks + 1) x dim_e matrix; row j is the direction planted for attack j,
// the last row is the bonafide direction.
MatrixD planted_directions(const SynthConfig& config);

SynthData generate_synthetic(const SynthConfig& config);

// Binary "SPE1" embedding file with JSON label trailer.
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

// CSV with header `sample_id,e0,...,e{E-1}`. Labels are not stored.
void write_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embeddings_csv(const std::filesystem::path& path);

// Dispatches on extension: ".csv" is CSV, everything else binary.
EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

// CSV with header `sample_id,class,attack_id`.
void write_labels(const std::vector<SampleLabel>& labels, const std::filesystem::path& path);
std::vector<SampleLabel> read_labels(const std::filesystem::path& path);

// Replaces set.labels with the entries of `labels` matching set.ids by sample id.
void attach_labels(EmbeddingSet& set, const std::vector<SampleLabel>& labels);

// Restricts to samples whose factor is listed in `included_factors`, keeping
// input order; columns follow the order of `included_factors`.
FactorTable build_factor_table(const std::vector<SampleLabel>& labels,
                               const std::vector<std::string>& included_factors);

// Sorted attack names observed in `labels`, followed by "bonafide" if present.
std::vector<std::string> observed_factors(const std::vector<SampleLabel>& labels);

// Rows [begin, end) of `set`.
EmbeddingSet slice(const EmbeddingSet& set, std::size_t begin, std::size_t end);

}  // namespace sparsedet
