#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsedet/data.hpp"

namespace sparsedet {

struct ScoreEntry {
  std::string sample_id;
  double score = 0.0;  // higher means more bonafide
  SampleClass cls = SampleClass::bonafide;
  std::optional<std::string> attack_id;
  bool operator==(const ScoreEntry&) const = default;
};

using ScoreSet = std::vector<ScoreEntry>;

struct DcfParams {
  double c_miss = 1.0;
  double c_fa = 10.0;
  double p_target = 0.05;

  void validate() const;
};

// One operating point of the threshold sweep: accept as bonafide iff
// score >= threshold.
struct OperatingPoint {
  double threshold;
  double frr;  // fraction of bonafide with score < threshold
  double far;  // fraction of spoof with score >= threshold
};

// Operating points at -inf, every distinct observed score and +inf, in
// ascending threshold order.
std::vector<OperatingPoint> threshold_sweep(const ScoreSet& scores);

// Equal error rate in [0, 1]. Exact FRR == FAR crossings are returned as is;
// otherwise (FRR + FAR) / 2 at the operating point(s) adjacent to the
// crossing with the smallest |FRR - FAR| (averaged if both tie).
double eer(const ScoreSet& scores);

// Minimum over thresholds of c_miss*p*FRR + c_fa*(1-p)*FAR, normalized by
// min(c_miss*p, c_fa*(1-p)).
double min_dcf(const ScoreSet& scores, const DcfParams& params = {});

// EER of all bonafide against the spoofs of each attack.
std::map<std::string, double> per_attack_eer(const ScoreSet& scores);

// Attacks with EER <= threshold, sorted by name.
std::vector<std::string> retained_attacks(const std::map<std::string, double>& per_attack,
                                          double threshold = 0.2);

// Score CSV: a '#' polarity comment, then `sample_id,score,class,attack_id`.
void write_scores(const ScoreSet& scores, const std::filesystem::path& path);
ScoreSet read_scores(const std::filesystem::path& path);

}  // namespace sparsedet
