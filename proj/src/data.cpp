#include "sparsedet/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "io_util.hpp"
#include "sparsedet/errors.hpp"

namespace sparsedet {

namespace {

constexpr std::string_view kEmbeddingMagic = "SPE1";

}  // namespace

std::string_view to_string(SampleClass c) {
  return c == SampleClass::bonafide ? "bonafide" : "spoof";
}

SampleClass parse_sample_class(std::string_view s) {
  if (s == "bonafide") return SampleClass::bonafide;
  if (s == "spoof") return SampleClass::spoof;
  throw FormatError("unknown class '" + std::string(s) + "' (expected bonafide or spoof)");
}

std::string SampleLabel::factor() const {
  return attack_id ? *attack_id : std::string(kBonafideFactor);
}

void validate(const EmbeddingSet& set) {
  if (set.ids.size() != set.matrix.rows()) {
    throw FormatError("embedding set has " + std::to_string(set.ids.size()) + " ids but " +
                      std::to_string(set.matrix.rows()) + " rows");
  }
  if (set.labeled() && set.labels.size() != set.ids.size()) {
    throw FormatError("embedding set has " + std::to_string(set.labels.size()) +
                      " labels for " + std::to_string(set.ids.size()) + " samples");
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < set.ids.size(); ++i) {
    if (!seen.insert(set.ids[i]).second) throw DataError("duplicate sample_id '" + set.ids[i] + "'");
    if (set.labeled()) {
      const auto& l = set.labels[i];
      if (l.sample_id != set.ids[i]) {
        throw DataError("label " + std::to_string(i) + " is for '" + l.sample_id + "', expected '" +
                        set.ids[i] + "'");
      }
      if ((l.cls == SampleClass::bonafide) == l.attack_id.has_value()) {
        throw DataError("sample '" + l.sample_id + "': attack_id must be present iff class is spoof");
      }
    }
  }
  for (std::size_t r = 0; r < set.matrix.rows(); ++r) {
    for (std::size_t c = 0; c < set.matrix.cols(); ++c) {
      if (!std::isfinite(set.matrix(r, c))) {
        throw DataError("non-finite embedding value at row " + std::to_string(r) + ", column " +
                        std::to_string(c));
      }
    }
  }
}

std::vector<std::uint32_t> FactorTable::column(std::size_t f) const {
  std::vector<std::uint32_t> out(n_samples());
  for (std::size_t i = 0; i < n_samples(); ++i) out[i] = indicator(i, f);
  return out;
}

std::vector<std::size_t> FactorTable::column_counts() const {
  std::vector<std::size_t> counts(n_factors(), 0);
  for (std::size_t i = 0; i < n_samples(); ++i) {
    for (std::size_t f = 0; f < n_factors(); ++f) counts[f] += indicator(i, f);
  }
  return counts;
}

void SynthConfig::validate() const {
  if (n_samples == 0) throw ConfigError("n_samples must be positive");
  if (dim_e == 0) throw ConfigError("dim_e must be positive");
  if (n_attacks == 0) throw ConfigError("n_attacks must be positive");
  if (n_attacks + 1 > dim_e) {
    throw ConfigError("n_attacks + 1 (" + std::to_string(n_attacks + 1) + ") must not exceed dim_e (" +
                      std::to_string(dim_e) + ")");
  }
  if (!(bonafide_fraction > 0.0 && bonafide_fraction < 1.0)) {
    throw ConfigError("bonafide_fraction must lie in (0, 1)");
  }
  if (!(factor_strength > 0.0) || !std::isfinite(factor_strength)) {
    throw ConfigError("factor_strength must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be non-negative");
  }
}

std::string synthetic_attack_name(std::size_t j) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "A%02zu", j + 1);
  return buf;
}

MatrixD planted_directions(const SynthConfig& config) {
  config.validate();
  const std::size_t n_dirs = config.n_attacks + 1;
  const std::size_t dim = config.dim_e;
  MatrixD dirs(n_dirs, dim, 0.0);
  if (config.basis == PlantedBasis::standard) {
    for (std::size_t j = 0; j < n_dirs; ++j) dirs(j, j) = 1.0;
    return dirs;
  }
  // Gram-Schmidt (two passes) over Gaussian vectors from a stream that is
  // separate from the sample stream.
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < n_dirs; ++j) {
    auto v = dirs.row(j);
    for (auto& x : v) x = gauss(rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        auto u = dirs.row(i);
        double dot = 0.0;
        for (std::size_t c = 0; c < dim; ++c) dot += u[c] * v[c];
        for (std::size_t c = 0; c < dim; ++c) v[c] -= dot * u[c];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
  }
  return dirs;
}

SynthData generate_synthetic(const SynthConfig& config) {
  const MatrixD dirs = planted_directions(config);
  const std::size_t n = config.n_samples;
  const std::size_t bonafide_row = config.n_attacks;

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_attack(0, config.n_attacks - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthData out;
  auto& emb = out.embeddings;
  emb.matrix = MatrixF(n, config.dim_e);
  emb.ids.reserve(n);
  emb.labels.reserve(n);

  auto& table = out.factors;
  for (std::size_t j = 0; j < config.n_attacks; ++j) table.factors.push_back(synthetic_attack_name(j));
  table.factors.emplace_back(kBonafideFactor);
  table.indicator = Matrix<std::uint8_t>(n, config.n_attacks + 1, 0);
  table.sample_index.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "syn%06zu", i);
    const bool bonafide = unit(rng) < config.bonafide_fraction;
    const std::size_t factor = bonafide ? bonafide_row : pick_attack(rng);

    SampleLabel label{id, bonafide ? SampleClass::bonafide : SampleClass::spoof, std::nullopt};
    if (!bonafide) label.attack_id = synthetic_attack_name(factor);

    auto row = emb.matrix.row(i);
    const auto dir = dirs.row(factor);
    for (std::size_t c = 0; c < config.dim_e; ++c) {
      double value = config.factor_strength * dir[c];
      // Always draw so the stream layout does not depend on sigma.
      const double noise = gauss(rng);
      if (config.noise_sigma > 0.0) value += config.noise_sigma * noise;
      row[c] = static_cast<float>(value);
    }
    emb.ids.emplace_back(id);
    emb.labels.push_back(std::move(label));
    table.indicator(i, factor) = 1;
    table.sample_index[i] = i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary embedding format

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  validate(set);
  std::string bytes;
  bytes.reserve(12 + 4 * set.matrix.size());
  bytes.append(kEmbeddingMagic);
  io::put_u32(bytes, static_cast<std::uint32_t>(set.size()));
  io::put_u32(bytes, static_cast<std::uint32_t>(set.dim_e()));
  for (float v : set.matrix.values()) io::put_f32(bytes, v);

  nlohmann::ordered_json trailer;
  trailer["sample_ids"] = set.ids;
  if (set.labeled()) {
    auto& labels = trailer["labels"] = nlohmann::ordered_json::array();
    for (const auto& l : set.labels) {
      nlohmann::ordered_json entry;
      entry["class"] = to_string(l.cls);
      entry["attack_id"] = l.attack_id ? nlohmann::ordered_json(*l.attack_id) : nlohmann::ordered_json();
      labels.push_back(std::move(entry));
    }
  }
  const std::string text = trailer.dump();
  io::put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes.append(text);
  io::write_file(path, bytes);
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string where = path.string();
  if (bytes.size() < 12 || std::string_view(bytes).substr(0, 4) != kEmbeddingMagic) {
    throw FormatError(where + ": magic-number mismatch (expected SPE1)");
  }
  const std::size_t n = io::get_u32(bytes, 4);
  const std::size_t e = io::get_u32(bytes, 8);
  const std::size_t payload_end = 12 + 4 * n * e;
  if (bytes.size() < payload_end) {
    throw FormatError(where + ": dimension mismatch, header N=" + std::to_string(n) + ", E=" +
                      std::to_string(e) + " needs " + std::to_string(n * e) + " floats but payload holds " +
                      std::to_string((bytes.size() - 12) / 4));
  }

  EmbeddingSet set;
  set.matrix = MatrixF(n, e);
  auto& values = set.matrix.values();
  for (std::size_t i = 0; i < n * e; ++i) {
    values[i] = io::get_f32(bytes, 12 + 4 * i);
    if (!std::isfinite(values[i])) {
      throw DataError(where + ": non-finite value at row " + std::to_string(i / e) + ", column " +
                      std::to_string(i % e));
    }
  }

  const std::size_t rest = bytes.size() - payload_end;
  if (rest == 0) {
    for (std::size_t i = 0; i < n; ++i) set.ids.push_back(std::to_string(i));
    return set;
  }
  if (rest < 4) {
    throw FormatError(where + ": dimension mismatch, " + std::to_string(rest) +
                      " trailing bytes after payload");
  }
  const std::size_t len = io::get_u32(bytes, payload_end);
  if (rest != 4 + len) {
    throw FormatError(where + ": dimension mismatch, trailer length " + std::to_string(len) +
                      " does not match the " + std::to_string(rest - 4) + " bytes after the payload");
  }
  nlohmann::json trailer;
  try {
    trailer = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(payload_end + 4), bytes.end());
    set.ids = trailer.at("sample_ids").get<std::vector<std::string>>();
    if (trailer.contains("labels")) {
      const auto& labels = trailer.at("labels");
      if (labels.size() != set.ids.size()) throw FormatError(where + ": label count differs from sample count");
      for (std::size_t i = 0; i < labels.size(); ++i) {
        SampleLabel l;
        l.sample_id = set.ids[i];
        l.cls = parse_sample_class(labels[i].at("class").get<std::string>());
        if (!labels[i].at("attack_id").is_null()) l.attack_id = labels[i].at("attack_id").get<std::string>();
        set.labels.push_back(std::move(l));
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(where + ": malformed trailer: " + ex.what());
  }
  if (set.ids.size() != n) {
    throw FormatError(where + ": dimension mismatch, trailer lists " + std::to_string(set.ids.size()) +
                      " sample ids for N=" + std::to_string(n));
  }
  validate(set);
  return set;
}

// ---------------------------------------------------------------------------
// CSV embedding format

void write_embeddings_csv(const EmbeddingSet& set, const std::filesystem::path& path) {
  validate(set);
  std::string text = "sample_id";
  for (std::size_t c = 0; c < set.dim_e(); ++c) text += ",e" + std::to_string(c);
  text += '\n';
  for (std::size_t r = 0; r < set.size(); ++r) {
    text += set.ids[r];
    for (float v : set.matrix.row(r)) {
      text += ',';
      text += io::format_number(v);
    }
    text += '\n';
  }
  io::write_file(path, text);
}

EmbeddingSet read_embeddings_csv(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  const auto lines = io::content_lines(text);
  const std::string where = path.string();
  if (lines.empty()) throw FormatError(where + ": missing header row");
  const auto header = io::split(lines[0].text, ',');
  if (header.empty() || header[0] != "sample_id") {
    throw FormatError(where + ": header must start with sample_id");
  }
  const std::size_t e = header.size() - 1;
  for (std::size_t c = 0; c < e; ++c) {
    if (header[c + 1] != "e" + std::to_string(c)) {
      throw FormatError(where + ": header column " + std::to_string(c + 1) + " must be e" + std::to_string(c));
    }
  }
  EmbeddingSet set;
  std::vector<float> values;
  values.reserve((lines.size() - 1) * e);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = io::split(lines[li].text, ',');
    if (fields.size() != e + 1) {
      throw FormatError(where + ": dimension mismatch on line " + std::to_string(lines[li].number) + ", " +
                        std::to_string(fields.size() - 1) + " values for E=" + std::to_string(e));
    }
    const std::size_t row = li - 1;
    set.ids.emplace_back(fields[0]);
    for (std::size_t c = 0; c < e; ++c) {
      float v = 0.0f;
      if (!io::parse_number(fields[c + 1], v)) {
        throw FormatError(where + ": unparsable value '" + std::string(fields[c + 1]) + "' at row " +
                          std::to_string(row) + ", column " + std::to_string(c));
      }
      if (!std::isfinite(v)) {
        throw DataError(where + ": non-finite value at row " + std::to_string(row) + ", column " +
                        std::to_string(c));
      }
      values.push_back(v);
    }
  }
  set.matrix = MatrixF(set.ids.size(), e, std::move(values));
  validate(set);
  return set;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_embeddings_csv(path) : read_embeddings(path);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    write_embeddings_csv(set, path);
  } else {
    write_embeddings(set, path);
  }
}

// ---------------------------------------------------------------------------
// Labels

void write_labels(const std::vector<SampleLabel>& labels, const std::filesystem::path& path) {
  std::string text = "sample_id,class,attack_id\n";
  for (const auto& l : labels) {
    text += l.sample_id;
    text += ',';
    text += to_string(l.cls);
    text += ',';
    if (l.attack_id) text += *l.attack_id;
    text += '\n';
  }
  io::write_file(path, text);
}

std::vector<SampleLabel> read_labels(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  const auto lines = io::content_lines(text);
  const std::string where = path.string();
  if (lines.empty() || lines[0].text != "sample_id,class,attack_id") {
    throw FormatError(where + ": header must be sample_id,class,attack_id");
  }
  std::vector<SampleLabel> labels;
  std::unordered_set<std::string> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = io::split(lines[li].text, ',');
    const std::string at = where + ":" + std::to_string(lines[li].number);
    if (fields.size() != 3) throw FormatError(at + ": expected 3 fields");
    SampleLabel l;
    l.sample_id = std::string(fields[0]);
    l.cls = parse_sample_class(fields[1]);
    if (!fields[2].empty()) l.attack_id = std::string(fields[2]);
    if (l.cls == SampleClass::spoof && !l.attack_id) {
      throw DataError(at + ": spoof sample '" + l.sample_id + "' has no attack_id");
    }
    if (l.cls == SampleClass::bonafide && l.attack_id) {
      throw DataError(at + ": bonafide sample '" + l.sample_id + "' must not carry an attack_id");
    }
    if (!seen.insert(l.sample_id).second) throw DataError(at + ": duplicate sample_id '" + l.sample_id + "'");
    labels.push_back(std::move(l));
  }
  if (labels.empty()) throw DataError(where + ": no labels");
  return labels;
}

void attach_labels(EmbeddingSet& set, const std::vector<SampleLabel>& labels) {
  std::unordered_map<std::string_view, const SampleLabel*> by_id;
  for (const auto& l : labels) by_id.emplace(l.sample_id, &l);
  std::vector<SampleLabel> out;
  out.reserve(set.ids.size());
  for (const auto& id : set.ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("no label for sample '" + id + "'");
    out.push_back(*it->second);
  }
  set.labels = std::move(out);
}

std::vector<std::string> observed_factors(const std::vector<SampleLabel>& labels) {
  std::set<std::string> attacks;
  bool has_bonafide = false;
  for (const auto& l : labels) {
    if (l.attack_id) {
      attacks.insert(*l.attack_id);
    } else {
      has_bonafide = true;
    }
  }
  std::vector<std::string> out(attacks.begin(), attacks.end());
  if (has_bonafide) out.emplace_back(kBonafideFactor);
  return out;
}

FactorTable build_factor_table(const std::vector<SampleLabel>& labels,
                               const std::vector<std::string>& included_factors) {
  if (labels.empty()) throw DataError("build_factor_table: no labels");
  std::set<std::string> known;
  for (const auto& l : labels) {
    if (l.cls == SampleClass::spoof && !l.attack_id) {
      throw DataError("spoof sample '" + l.sample_id + "' has no attack_id");
    }
    known.insert(l.factor());
  }
  known.emplace(kBonafideFactor);
  if (included_factors.size() < 2) throw DataError("a factor table needs at least 2 factors");
  std::map<std::string, std::size_t> column;
  for (const auto& f : included_factors) {
    if (!known.contains(f)) throw DataError("unknown factor requested: '" + f + "'");
    if (!column.emplace(f, column.size()).second) throw DataError("factor listed twice: '" + f + "'");
  }

  FactorTable table;
  table.factors = included_factors;
  std::vector<std::pair<std::size_t, std::size_t>> hits;  // (label row, column)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = column.find(labels[i].factor());
    if (it != column.end()) hits.emplace_back(i, it->second);
  }
  table.indicator = Matrix<std::uint8_t>(hits.size(), included_factors.size(), 0);
  table.sample_index.reserve(hits.size());
  for (std::size_t r = 0; r < hits.size(); ++r) {
    table.sample_index.push_back(hits[r].first);
    table.indicator(r, hits[r].second) = 1;
  }
  return table;
}

EmbeddingSet slice(const EmbeddingSet& set, std::size_t begin, std::size_t end) {
  if (begin > end || end > set.size()) throw ShapeError("slice: range out of bounds");
  EmbeddingSet out;
  out.ids.assign(set.ids.begin() + static_cast<std::ptrdiff_t>(begin),
                 set.ids.begin() + static_cast<std::ptrdiff_t>(end));
  if (set.labeled()) {
    out.labels.assign(set.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      set.labels.begin() + static_cast<std::ptrdiff_t>(end));
  }
  const auto& v = set.matrix.values();
  out.matrix = MatrixF(end - begin, set.dim_e(),
                       std::vector<float>(v.begin() + static_cast<std::ptrdiff_t>(begin * set.dim_e()),
                                          v.begin() + static_cast<std::ptrdiff_t>(end * set.dim_e())));
  return out;
}

}  // namespace sparsedet
