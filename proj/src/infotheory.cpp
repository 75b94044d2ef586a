#include "sparsedet/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"

namespace sparsedet {

std::string_view to_string(BinStrategy s) { return s == BinStrategy::quantile ? "quantile" : "equal_width"; }

BinStrategy parse_bin_strategy(std::string_view s) {
  if (s == "quantile") return BinStrategy::quantile;
  if (s == "equal_width") return BinStrategy::equal_width;
  throw ConfigError("unknown binning strategy '" + std::string(s) + "'");
}

void BinningSpec::validate() const {
  if (n_bins < 2) throw ConfigError("n_bins must be at least 2");
}

namespace {

// Interior edges e_1 < ... < e_m (m <= n_bins - 1) over the sorted support.
std::vector<double> bin_edges(std::vector<double> support, const BinningSpec& spec) {
  std::vector<double> edges;
  if (support.empty()) return edges;
  std::sort(support.begin(), support.end());
  const double lo = support.front();
  const double hi = support.back();
  if (lo == hi) return edges;
  const std::size_t m = support.size();
  for (std::size_t i = 1; i < spec.n_bins; ++i) {
    double e = 0.0;
    if (spec.strategy == BinStrategy::quantile) {
      e = support[i * m / spec.n_bins];
    } else {
      e = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spec.n_bins);
    }
    edges.push_back(e);
  }
  // Ties collapse; an edge at the minimum would only create an empty bin.
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges.erase(std::remove_if(edges.begin(), edges.end(), [lo](double e) { return e <= lo; }), edges.end());
  return edges;
}

std::uint32_t bin_of(double v, const std::vector<double>& edges) {
  // Number of edges <= v, i.e. left-closed bins.
  return static_cast<std::uint32_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

double plogp_sum(const std::vector<std::size_t>& counts, double n) {
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace

std::vector<std::uint32_t> discretize(std::span<const double> values, const BinningSpec& spec) {
  spec.validate();
  std::vector<double> support;
  support.reserve(values.size());
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("discretize: non-finite value");
    if (!(spec.zero_bin && v == 0.0)) support.push_back(v);
  }
  const auto edges = bin_edges(std::move(support), spec);
  const std::uint32_t offset = spec.zero_bin ? 1u : 0u;
  std::vector<std::uint32_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = (spec.zero_bin && values[i] == 0.0) ? 0u : offset + bin_of(values[i], edges);
  }
  return out;
}

double entropy(std::span<const std::uint32_t> indices) {
  if (indices.empty()) return 0.0;
  const std::uint32_t max_bin = *std::max_element(indices.begin(), indices.end());
  std::vector<std::size_t> counts(static_cast<std::size_t>(max_bin) + 1, 0);
  for (auto b : indices) ++counts[b];
  return plogp_sum(counts, static_cast<double>(indices.size()));
}

double mutual_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  if (a.size() != b.size()) {
    throw ShapeError("mutual_information: lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.empty()) return 0.0;
  const std::size_t na = static_cast<std::size_t>(*std::max_element(a.begin(), a.end())) + 1;
  const std::size_t nb = static_cast<std::size_t>(*std::max_element(b.begin(), b.end())) + 1;
  std::vector<std::size_t> joint(na * nb, 0), ca(na, 0), cb(nb, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++joint[a[i] * nb + b[i]];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const std::size_t c = joint[i * nb + j];
      if (c == 0) continue;
      const double pxy = static_cast<double>(c) / n;
      // p(x,y) / (p(x) p(y)) = c n / (c_x c_y)
      mi += pxy * std::log(static_cast<double>(c) * n / (static_cast<double>(ca[i]) * static_cast<double>(cb[j])));
    }
  }
  return std::max(mi, 0.0);
}

double normalized_mutual_information(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  const double denom = entropy(a) + entropy(b);
  if (denom == 0.0) return 0.0;
  return std::clamp(2.0 * mutual_information(a, b) / denom, 0.0, 1.0);
}

namespace {

void check_nmi_inputs(const MatrixD& latents, const FactorTable& factors, const BinningSpec& spec) {
  spec.validate();
  if (latents.rows() != factors.n_samples()) {
    throw ShapeError("nmi_matrix: " + std::to_string(latents.rows()) + " latent rows but " +
                     std::to_string(factors.n_samples()) + " factor rows");
  }
  for (double v : latents.values()) {
    if (!std::isfinite(v)) throw DataError("nmi_matrix: latents contain non-finite values");
  }
}

ImportanceMatrix empty_matrix(const MatrixD& latents, const FactorTable& factors, const BinningSpec& spec) {
  ImportanceMatrix m;
  m.values = MatrixD(latents.cols(), factors.n_factors(), 0.0);
  for (std::size_t d = 0; d < latents.cols(); ++d) m.dim_names.push_back("d" + std::to_string(d));
  m.factor_names = factors.factors;
  m.binning = spec;
  return m;
}

std::vector<double> column_of(const MatrixD& x, std::size_t c) {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = x(r, c);
  return out;
}

}  // namespace

ImportanceMatrix nmi_matrix(const MatrixD& latents, const FactorTable& factors, const BinningSpec& spec) {
  check_nmi_inputs(latents, factors, spec);
  ImportanceMatrix m = empty_matrix(latents, factors, spec);
  const std::size_t n_dims = latents.cols();
  const std::size_t n_factors = factors.n_factors();

  std::vector<std::vector<std::uint32_t>> factor_cols(n_factors);
  for (std::size_t f = 0; f < n_factors; ++f) factor_cols[f] = factors.column(f);

  std::vector<std::vector<std::uint32_t>> dim_bins(n_dims);
  const auto dims = static_cast<std::ptrdiff_t>(n_dims);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t d = 0; d < dims; ++d) {
    dim_bins[static_cast<std::size_t>(d)] = discretize(column_of(latents, static_cast<std::size_t>(d)), spec);
  }

  const auto pairs = static_cast<std::ptrdiff_t>(n_dims * n_factors);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    const auto d = static_cast<std::size_t>(p) / n_factors;
    const auto f = static_cast<std::size_t>(p) % n_factors;
    m.values(d, f) = normalized_mutual_information(dim_bins[d], factor_cols[f]);
  }
  return m;
}

namespace serial {

ImportanceMatrix nmi_matrix(const MatrixD& latents, const FactorTable& factors, const BinningSpec& spec) {
  check_nmi_inputs(latents, factors, spec);
  ImportanceMatrix m = empty_matrix(latents, factors, spec);
  for (std::size_t d = 0; d < latents.cols(); ++d) {
    const auto bins = discretize(column_of(latents, d), spec);
    for (std::size_t f = 0; f < factors.n_factors(); ++f) {
      m.values(d, f) = normalized_mutual_information(bins, factors.column(f));
    }
  }
  return m;
}

}  // namespace serial

void write_importance_csv(const ImportanceMatrix& m, const std::filesystem::path& path) {
  std::string text = "dimension";
  for (const auto& f : m.factor_names) text += "," + f;
  text += '\n';
  for (std::size_t d = 0; d < m.n_dims(); ++d) {
    text += m.dim_names[d];
    for (std::size_t f = 0; f < m.n_factors(); ++f) text += "," + io::format_number(m.values(d, f));
    text += '\n';
  }
  io::write_file(path, text);
}

ImportanceMatrix read_importance_csv(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  const auto lines = io::content_lines(text);
  const std::string where = path.string();
  if (lines.empty()) throw FormatError(where + ": empty file");
  const auto header = io::split(lines[0].text, ',');
  if (header.size() < 2 || header[0] != "dimension") throw FormatError(where + ": header must be dimension,<factors>");
  ImportanceMatrix m;
  for (std::size_t i = 1; i < header.size(); ++i) m.factor_names.emplace_back(header[i]);
  std::vector<double> values;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = io::split(lines[li].text, ',');
    if (fields.size() != header.size()) throw FormatError(where + ":" + std::to_string(lines[li].number) + ": wrong field count");
    m.dim_names.emplace_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      if (!io::parse_number(fields[i], v) || !(v >= 0.0 && v <= 1.0)) {
        throw FormatError(where + ":" + std::to_string(lines[li].number) + ": entry must be a number in [0, 1]");
      }
      values.push_back(v);
    }
  }
  m.values = MatrixD(m.dim_names.size(), m.factor_names.size(), std::move(values));
  return m;
}

void write_importance_json(const ImportanceMatrix& m, const std::filesystem::path& path, const std::string& manifest) {
  nlohmann::ordered_json j;
  if (!manifest.empty()) j["manifest"] = manifest;
  j["binning"] = {{"strategy", to_string(m.binning.strategy)},
                  {"n_bins", m.binning.n_bins},
                  {"zero_bin", m.binning.zero_bin}};
  j["factor_names"] = m.factor_names;
  j["dim_names"] = m.dim_names;
  auto& rows = j["values"] = nlohmann::ordered_json::array();
  for (std::size_t d = 0; d < m.n_dims(); ++d) {
    const auto r = m.values.row(d);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  io::write_file(path, j.dump(2) + "\n");
}

}  // namespace sparsedet
