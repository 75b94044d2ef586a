#include "sparsedet/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"

namespace sparsedet {

namespace {

// 1 + sum_i p_i log_n p_i over the normalized weights; n = weights.size().
MaybeMetric concentration(const std::vector<double>& weights) {
  double total = 0.0;
  std::size_t positive = 0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw DataError("importance entries must be finite and nonnegative");
    total += w;
    positive += w > 0.0 ? 1 : 0;
  }
  if (positive == 0) return std::nullopt;
  // A single carrier (this also covers n == 1 where log base 1 is undefined).
  if (positive == 1) return 1.0;
  const double log_base = std::log(static_cast<double>(weights.size()));
  double sum = 0.0;
  for (double w : weights) {
    if (w == 0.0) continue;
    const double p = w / total;
    sum += p * std::log(p);
  }
  return 1.0 + sum / log_base;
}

}  // namespace

MaybeMetric completeness(const ImportanceMatrix& m, std::size_t factor) {
  if (factor >= m.n_factors()) throw ShapeError("completeness: factor index out of range");
  std::vector<double> column(m.n_dims());
  for (std::size_t d = 0; d < m.n_dims(); ++d) column[d] = m.values(d, factor);
  return concentration(column);
}

MaybeMetric modularity(const ImportanceMatrix& m, std::size_t dimension) {
  if (dimension >= m.n_dims()) throw ShapeError("modularity: dimension index out of range");
  const auto row = m.values.row(dimension);
  return concentration(std::vector<double>(row.begin(), row.end()));
}

std::vector<SurvivalPoint> survival_curve(const ImportanceMatrix& m, const std::vector<double>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ConfigError("survival thresholds must be sorted ascending");
  }
  std::vector<double> sorted = m.values.values();
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<SurvivalPoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t);
    out.push_back({t, sorted.empty() ? 0.0 : static_cast<double>(above) / n});
  }
  return out;
}

std::vector<double> default_survival_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 100; ++i) t.push_back(i / 100.0);
  return t;
}

namespace {

MaybeMetric mean_of(const std::vector<MaybeMetric>& values) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

}  // namespace

MaybeMetric DisentanglementReport::mean_completeness() const { return mean_of(completeness); }
MaybeMetric DisentanglementReport::mean_modularity() const { return mean_of(modularity); }

double DisentanglementReport::survival_at(double threshold) const {
  for (const auto& p : survival) {
    if (p.threshold == threshold) return p.fraction;
  }
  throw ConfigError("survival curve has no point at threshold " + io::format_number(threshold));
}

DisentanglementReport analyze(const ImportanceMatrix& m, const std::vector<double>& thresholds) {
  DisentanglementReport r;
  r.factor_names = m.factor_names;
  for (std::size_t f = 0; f < m.n_factors(); ++f) r.completeness.push_back(completeness(m, f));
  for (std::size_t d = 0; d < m.n_dims(); ++d) r.modularity.push_back(modularity(m, d));
  r.survival = survival_curve(m, thresholds);
  r.completeness_excluded.assign(m.n_factors(), 0);
  r.modularity_excluded.assign(m.n_dims(), 0);
  return r;
}

namespace {

void average_into(const std::vector<DisentanglementReport>& reports,
                  std::vector<MaybeMetric> DisentanglementReport::*field,
                  std::vector<std::size_t> DisentanglementReport::*excluded_field,
                  DisentanglementReport& out) {
  const std::size_t n = (reports.front().*field).size();
  auto& values = out.*field;
  auto& excluded = out.*excluded_field;
  values.assign(n, std::nullopt);
  excluded.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : reports) {
      const auto& v = (r.*field)[i];
      // Entries already aggregated carry their own exclusion counts.
      const auto& ex = r.*excluded_field;
      excluded[i] += ex.empty() ? 0 : ex[i];
      if (v) {
        sum += *v;
        ++count;
      } else {
        ++excluded[i];
      }
    }
    if (count > 0) values[i] = sum / static_cast<double>(count);
  }
}

}  // namespace

DisentanglementReport aggregate_over_seeds(const std::vector<DisentanglementReport>& reports) {
  if (reports.empty()) throw DataError("aggregate_over_seeds: no reports");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (r.factor_names != first.factor_names) throw DataError("aggregate_over_seeds: mismatched factor sets");
    if (r.modularity.size() != first.modularity.size()) {
      throw DataError("aggregate_over_seeds: reports have different latent widths");
    }
    if (r.survival.size() != first.survival.size()) {
      throw DataError("aggregate_over_seeds: survival curves use different thresholds");
    }
    for (std::size_t i = 0; i < r.survival.size(); ++i) {
      if (r.survival[i].threshold != first.survival[i].threshold) {
        throw DataError("aggregate_over_seeds: survival curves use different thresholds");
      }
    }
  }
  if (reports.size() == 1) return first;

  DisentanglementReport out;
  out.factor_names = first.factor_names;
  out.n_reports = 0;
  for (const auto& r : reports) out.n_reports += r.n_reports;
  average_into(reports, &DisentanglementReport::completeness, &DisentanglementReport::completeness_excluded, out);
  average_into(reports, &DisentanglementReport::modularity, &DisentanglementReport::modularity_excluded, out);
  for (std::size_t i = 0; i < first.survival.size(); ++i) {
    double sum = 0.0;
    for (const auto& r : reports) sum += r.survival[i].fraction;
    out.survival.push_back({first.survival[i].threshold, sum / static_cast<double>(reports.size())});
  }
  return out;
}

void write_modularity_csv(const DisentanglementReport& r, const std::filesystem::path& path) {
  std::string text = "dimension,modularity\n";
  for (std::size_t d = 0; d < r.modularity.size(); ++d) {
    text += std::to_string(d) + "," + (r.modularity[d] ? io::format_number(*r.modularity[d]) : "nan") + "\n";
  }
  io::write_file(path, text);
}

namespace {

nlohmann::ordered_json metric_json(const MaybeMetric& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

}  // namespace

void write_report_json(const DisentanglementReport& r, const std::filesystem::path& path,
                       const std::string& manifest) {
  nlohmann::ordered_json j;
  if (!manifest.empty()) j["manifest"] = manifest;
  j["n_reports"] = r.n_reports;
  auto& comp = j["completeness"] = nlohmann::ordered_json::object();
  for (std::size_t f = 0; f < r.factor_names.size(); ++f) comp[r.factor_names[f]] = metric_json(r.completeness[f]);
  j["completeness_excluded"] = r.completeness_excluded;
  j["mean_completeness"] = metric_json(r.mean_completeness());
  auto& mod = j["modularity"] = nlohmann::ordered_json::array();
  for (const auto& v : r.modularity) mod.push_back(metric_json(v));
  j["modularity_excluded"] = r.modularity_excluded;
  j["mean_modularity"] = metric_json(r.mean_modularity());
  auto& surv = j["survival"] = nlohmann::ordered_json::array();
  for (const auto& p : r.survival) surv.push_back({{"threshold", p.threshold}, {"fraction", p.fraction}});
  io::write_file(path, j.dump(2) + "\n");
}

std::string survival_svg(const std::vector<SurvivalSeries>& series) {
  constexpr double kWidth = 640, kHeight = 420;
  constexpr double kLeft = 70, kRight = 160, kTop = 20, kBottom = 60;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  double x_max = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.points) x_max = std::max(x_max, p.threshold);
  }
  if (x_max <= 0.0) x_max = 1.0;
  auto px = [&](double x) { return kLeft + plot_w * x / x_max; };
  auto py = [&](double frac) { return kTop + plot_h * (1.0 - frac); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                    num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" + num(kLeft + plot_w) +
         "\" y2=\"" + num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
         num(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double frac = i / 5.0;
    const double xv = x_max * i / 5.0;
    svg += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(frac) + 4) + "\" text-anchor=\"end\">" +
           num(100.0 * frac) + "</text>\n";
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(kTop + plot_h + 18) + "\" text-anchor=\"middle\">" +
           num(xv) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 15) +
         "\" text-anchor=\"middle\">nMI value</text>\n";
  svg += "<text transform=\"translate(18," + num(kTop + plot_h / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">% of values above nMI value</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    std::string points;
    for (const auto& p : series[s].points) {
      if (!points.empty()) points += ' ';
      points += num(px(p.threshold)) + "," + num(py(p.fraction));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + points +
           "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(s + 1);
    svg += "<line x1=\"" + num(kLeft + plot_w + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(kLeft + plot_w + 30) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kLeft + plot_w + 35) + "\" y=\"" + num(ly) + "\">" + series[s].label + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace sparsedet
