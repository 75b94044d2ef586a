#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparsedet/infotheory.hpp"

namespace sparsedet {

// A metric value, or nullopt for "no information": the row/column of the
// importance matrix is all zero and the normalized distribution is undefined.
using MaybeMetric = std::optional<double>;

// 1 + sum_d q_d log_D q_d with q = column f normalized over dimensions.
MaybeMetric completeness(const ImportanceMatrix& m, std::size_t factor);

// 1 + sum_f r_f log_F r_f with r = row d normalized over factors.
MaybeMetric modularity(const ImportanceMatrix& m, std::size_t dimension);

struct SurvivalPoint {
  double threshold;
  double fraction;  // share of matrix entries strictly above threshold
};

std::vector<SurvivalPoint> survival_curve(const ImportanceMatrix& m, const std::vector<double>& thresholds);

// 0, 0.01, ..., 1.0
std::vector<double> default_survival_thresholds();

struct DisentanglementReport {
  std::vector<std::string> factor_names;
  std::vector<MaybeMetric> completeness;  // per factor
  std::vector<MaybeMetric> modularity;    // per dimension
  std::vector<SurvivalPoint> survival;
  // Number of reports whose entry was "no information"; all zero for a
  // single-matrix report, filled in by aggregate_over_seeds.
  std::vector<std::size_t> completeness_excluded;
  std::vector<std::size_t> modularity_excluded;
  std::size_t n_reports = 1;

  // Mean over the defined entries; nullopt if none are defined.
  MaybeMetric mean_completeness() const;
  MaybeMetric mean_modularity() const;
  // Survival fraction at `threshold` (must be one of the curve's thresholds).
  double survival_at(double threshold) const;
};

DisentanglementReport analyze(const ImportanceMatrix& m,
                              const std::vector<double>& thresholds = default_survival_thresholds());

// Pointwise arithmetic mean. Undefined entries are left out of the mean and
// counted in *_excluded.
DisentanglementReport aggregate_over_seeds(const std::vector<DisentanglementReport>& reports);

// `dimension,modularity` rows; undefined entries written as "nan".
void write_modularity_csv(const DisentanglementReport& r, const std::filesystem::path& path);
void write_report_json(const DisentanglementReport& r, const std::filesystem::path& path,
                       const std::string& manifest = {});

struct SurvivalSeries {
  std::string label;
  std::vector<SurvivalPoint> points;
};

// Line chart: x = nMI value, y = % of entries above it.
std::string survival_svg(const std::vector<SurvivalSeries>& series);

}  // namespace sparsedet
