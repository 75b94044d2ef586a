#include "sparsedet/detmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"

namespace sparsedet {

namespace {

struct SplitScores {
  std::vector<double> bonafide;
  std::vector<double> spoof;
};

SplitScores split_by_class(const ScoreSet& scores) {
  SplitScores s;
  for (const auto& e : scores) {
    if (!std::isfinite(e.score)) throw DataError("score for '" + e.sample_id + "' is not finite");
    (e.cls == SampleClass::bonafide ? s.bonafide : s.spoof).push_back(e.score);
  }
  if (s.bonafide.empty()) throw DataError("score set has no bonafide entries");
  if (s.spoof.empty()) throw DataError("score set has no spoof entries");
  std::sort(s.bonafide.begin(), s.bonafide.end());
  std::sort(s.spoof.begin(), s.spoof.end());
  return s;
}

std::vector<OperatingPoint> sweep(const SplitScores& s) {
  std::vector<double> thresholds;
  thresholds.reserve(s.bonafide.size() + s.spoof.size() + 2);
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::merge(s.bonafide.begin(), s.bonafide.end(), s.spoof.begin(), s.spoof.end(),
             std::back_inserter(thresholds));
  thresholds.push_back(std::numeric_limits<double>::infinity());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nb = static_cast<double>(s.bonafide.size());
  const double ns = static_cast<double>(s.spoof.size());
  std::vector<OperatingPoint> points;
  points.reserve(thresholds.size());
  std::size_t below_bona = 0;  // bonafide with score < t
  std::size_t below_spoof = 0; // spoof with score < t
  for (double t : thresholds) {
    while (below_bona < s.bonafide.size() && s.bonafide[below_bona] < t) ++below_bona;
    while (below_spoof < s.spoof.size() && s.spoof[below_spoof] < t) ++below_spoof;
    points.push_back({t, static_cast<double>(below_bona) / nb,
                      static_cast<double>(s.spoof.size() - below_spoof) / ns});
  }
  return points;
}

}  // namespace

void DcfParams::validate() const {
  if (!(c_miss > 0.0)) throw ConfigError("c_miss must be positive");
  if (!(c_fa > 0.0)) throw ConfigError("c_fa must be positive");
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("p_target must lie in (0, 1)");
}

std::vector<OperatingPoint> threshold_sweep(const ScoreSet& scores) { return sweep(split_by_class(scores)); }

double eer(const ScoreSet& scores) {
  const auto points = threshold_sweep(scores);
  // FRR is nondecreasing and FAR nonincreasing along the sweep, so
  // |FRR - FAR| is minimized at the crossing.
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& p : points) best_gap = std::min(best_gap, std::abs(p.frr - p.far));
  if (best_gap == 0.0) {
    for (const auto& p : points) {
      if (p.frr == p.far) return p.frr;
    }
  }
  // At most two distinct (FRR, FAR) pairs reach the minimal gap, one on each
  // side of the crossing.
  std::optional<double> below, above;
  for (const auto& p : points) {
    if (std::abs(p.frr - p.far) != best_gap) continue;
    const double mid = (p.frr + p.far) / 2.0;
    (p.frr < p.far ? below : above) = mid;
  }
  if (below && above) return (*below + *above) / 2.0;
  return below ? *below : *above;
}

double min_dcf(const ScoreSet& scores, const DcfParams& params) {
  params.validate();
  const auto points = threshold_sweep(scores);
  const double miss_weight = params.c_miss * params.p_target;
  const double fa_weight = params.c_fa * (1.0 - params.p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : points) best = std::min(best, miss_weight * p.frr + fa_weight * p.far);
  return best / std::min(miss_weight, fa_weight);
}

std::map<std::string, double> per_attack_eer(const ScoreSet& scores) {
  ScoreSet bonafide;
  std::map<std::string, ScoreSet> by_attack;
  for (const auto& e : scores) {
    if (e.cls == SampleClass::bonafide) {
      bonafide.push_back(e);
    } else {
      if (!e.attack_id) throw DataError("spoof score '" + e.sample_id + "' has no attack_id");
      by_attack[*e.attack_id].push_back(e);
    }
  }
  if (bonafide.empty()) throw DataError("per-attack EER needs at least one bonafide score");
  std::map<std::string, double> out;
  for (auto& [attack, spoofs] : by_attack) {
    ScoreSet pooled = bonafide;
    pooled.insert(pooled.end(), spoofs.begin(), spoofs.end());
    out.emplace(attack, eer(pooled));
  }
  return out;
}

std::vector<std::string> retained_attacks(const std::map<std::string, double>& per_attack, double threshold) {
  std::vector<std::string> kept;
  for (const auto& [attack, value] : per_attack) {
    if (!(value > threshold)) kept.push_back(attack);
  }
  return kept;  // std::map iteration is already name-sorted
}

void write_scores(const ScoreSet& scores, const std::filesystem::path& path) {
  std::string text =
      "# score = log P(bonafide | x) from the classifier head; higher means more bonafide\n"
      "sample_id,score,class,attack_id\n";
  for (const auto& e : scores) {
    text += e.sample_id;
    text += ',';
    text += io::format_number(e.score);
    text += ',';
    text += to_string(e.cls);
    text += ',';
    if (e.attack_id) text += *e.attack_id;
    text += '\n';
  }
  io::write_file(path, text);
}

ScoreSet read_scores(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  const auto lines = io::content_lines(text);
  const std::string where = path.string();
  if (lines.empty() || lines[0].text != "sample_id,score,class,attack_id") {
    throw FormatError(where + ": header must be sample_id,score,class,attack_id");
  }
  ScoreSet out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = io::split(lines[li].text, ',');
    const std::string at = where + ":" + std::to_string(lines[li].number);
    if (fields.size() != 4) throw FormatError(at + ": expected 4 fields");
    ScoreEntry e;
    e.sample_id = std::string(fields[0]);
    if (!io::parse_number(fields[1], e.score) || !std::isfinite(e.score)) {
      throw FormatError(at + ": invalid score '" + std::string(fields[1]) + "'");
    }
    e.cls = parse_sample_class(fields[2]);
    if (!fields[3].empty()) e.attack_id = std::string(fields[3]);
    if ((e.cls == SampleClass::spoof) != e.attack_id.has_value()) {
      throw DataError(at + ": attack_id must be present iff class is spoof");
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sparsedet
