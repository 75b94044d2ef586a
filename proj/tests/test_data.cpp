#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "sparsedet/data.hpp"
#include "sparsedet/errors.hpp"

using namespace sparsedet;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sparsedet_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::vector<SampleLabel> labels_of(std::initializer_list<std::pair<const char*, const char*>> items) {
  std::vector<SampleLabel> out;
  for (auto [id, attack] : items) {
    SampleLabel l{id, SampleClass::bonafide, std::nullopt};
    if (attack) {
      l.cls = SampleClass::spoof;
      l.attack_id = attack;
    }
    out.push_back(l);
  }
  return out;
}

}  // namespace

TEST_CASE("zero-noise synthetic data sits exactly on the standard basis") {
  SynthConfig c;
  c.n_samples = 200;
  c.dim_e = 10;
  c.n_attacks = 4;
  c.noise_sigma = 0.0;
  c.factor_strength = 1.0;
  c.basis = PlantedBasis::standard;
  const auto data = generate_synthetic(c);
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    std::size_t factor = 0;
    for (std::size_t f = 0; f < data.factors.n_factors(); ++f) {
      if (data.factors.indicator(i, f)) factor = f;
    }
    for (std::size_t e = 0; e < c.dim_e; ++e) {
      CHECK(data.embeddings.matrix(i, e) == (e == factor ? 1.0f : 0.0f));
    }
  }
}

TEST_CASE("synthetic generation is deterministic and seed-dependent") {
  SynthConfig c;
  c.n_samples = 300;
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.factors.indicator == b.factors.indicator);
  c.seed = 2;
  CHECK_FALSE(generate_synthetic(c).embeddings.matrix == a.embeddings.matrix);
}

TEST_CASE("synthetic factor table has one-hot rows consistent with labels") {
  SynthConfig c;
  c.n_samples = 1000;
  c.n_attacks = 7;
  c.bonafide_fraction = 0.2;
  const auto data = generate_synthetic(c);
  const auto& t = data.factors;
  REQUIRE(t.n_factors() == 8);
  CHECK(t.factors.back() == "bonafide");
  std::size_t bonafide_labels = 0;
  for (std::size_t i = 0; i < t.n_samples(); ++i) {
    int sum = 0;
    for (std::size_t f = 0; f < 8; ++f) sum += t.indicator(i, f);
    CHECK(sum == 1);
    const auto& l = data.embeddings.labels[i];
    CHECK(t.indicator(i, 7) == (l.cls == SampleClass::bonafide ? 1 : 0));
    if (l.attack_id) CHECK(t.factors[std::stoul(l.attack_id->substr(1)) - 1] == *l.attack_id);
    bonafide_labels += l.cls == SampleClass::bonafide;
  }
  const auto counts = t.column_counts();
  CHECK(counts[7] == bonafide_labels);
  // Binomial(1000, 0.2): sd ~ 12.6, so 4 sd either side.
  CHECK(counts[7] > 150);
  CHECK(counts[7] < 250);
}

TEST_CASE("planted directions are orthonormal") {
  SynthConfig c;
  c.dim_e = 32;
  c.n_attacks = 20;
  for (std::uint64_t seed : {1ull, 7ull, 12345ull}) {
    c.seed = seed;
    const MatrixD dirs = planted_directions(c);
    for (std::size_t i = 0; i < dirs.rows(); ++i) {
      for (std::size_t j = 0; j < dirs.rows(); ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < c.dim_e; ++e) dot += dirs(i, e) * dirs(j, e);
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
      }
    }
  }
}

TEST_CASE("synth config rejects violated bounds") {
  SynthConfig c;
  c.dim_e = 7;
  c.n_attacks = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.bonafide_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.n_samples = 0;
  CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
}

TEST_CASE("binary and CSV embedding round trips") {
  SynthConfig c;
  c.n_samples = 57;
  c.dim_e = 9;
  c.n_attacks = 3;
  const auto set = generate_synthetic(c).embeddings;

  const auto bin = temp_path("rt.spe");
  write_embeddings(set, bin);
  CHECK(read_embeddings(bin) == set);

  const auto csv = temp_path("rt.csv");
  write_embeddings_csv(set, csv);
  const auto back = read_embeddings_csv(csv);
  CHECK(back.ids == set.ids);
  CHECK(back.matrix == set.matrix);  // shortest round-trip text is exact
  CHECK_FALSE(back.labeled());
}

TEST_CASE("binary header/payload mismatch is a dimension error") {
  std::string bytes = "SPE1";
  auto u32 = [&bytes](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  u32(2);
  u32(3);
  for (int i = 0; i < 5; ++i) u32(0x3f800000u);  // five 1.0f
  const auto p = temp_path("short.spe");
  write_text(p, bytes);
  CHECK_THROWS_WITH_AS(read_embeddings(p), doctest::Contains("dimension mismatch"), FormatError);

  write_text(p, "XXXX" + bytes.substr(4));
  CHECK_THROWS_WITH_AS(read_embeddings(p), doctest::Contains("magic"), FormatError);
}

TEST_CASE("binary file without trailer reads as unlabeled") {
  std::string bytes = "SPE1";
  auto u32 = [&bytes](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  u32(1);
  u32(2);
  u32(0x3f800000u);
  u32(0x40000000u);
  const auto p = temp_path("notrailer.spe");
  write_text(p, bytes);
  const auto set = read_embeddings(p);
  CHECK(set.size() == 1);
  CHECK(set.matrix(0, 1) == 2.0f);
  CHECK_FALSE(set.labeled());
}

TEST_CASE("CSV with NaN names row and column") {
  const auto p = temp_path("nan.csv");
  write_text(p, "sample_id,e0,e1\na,1.0,2.0\nb,0.5,nan\n");
  CHECK_THROWS_WITH_AS(read_embeddings_csv(p), doctest::Contains("row 1, column 1"), DataError);
}

TEST_CASE("label CSV round trip and validation") {
  const auto labels = labels_of({{"x1", nullptr}, {"x2", "A09"}, {"x3", "A12"}});
  const auto p = temp_path("labels.csv");
  write_labels(labels, p);
  CHECK(read_labels(p) == labels);

  write_text(p, "sample_id,class,attack_id\nq,spoof,\n");
  CHECK_THROWS_WITH_AS(read_labels(p), doctest::Contains("no attack_id"), DataError);
  write_text(p, "sample_id,class,attack_id\nq,bonafide,\nq,bonafide,\n");
  CHECK_THROWS_AS(read_labels(p), DataError);
}

TEST_CASE("factor table filters by included factors") {
  const auto labels =
      labels_of({{"b1", nullptr}, {"s1", "A09"}, {"s2", "A12"}, {"b2", nullptr}, {"s3", "A09"}, {"s4", "A12"}});

  SUBCASE("dropping A12") {
    const auto t = build_factor_table(labels, {"A09", "bonafide"});
    CHECK(t.n_samples() == 4);
    CHECK(t.sample_index == std::vector<std::size_t>{0, 1, 3, 4});
    CHECK(t.column(0) == std::vector<std::uint32_t>{0, 1, 0, 1});
    CHECK(t.column(1) == std::vector<std::uint32_t>{1, 0, 1, 0});
  }
  SUBCASE("all observed factors") {
    const auto factors = observed_factors(labels);
    CHECK(factors == std::vector<std::string>{"A09", "A12", "bonafide"});
    const auto t = build_factor_table(labels, factors);
    CHECK(t.n_samples() == labels.size());
    CHECK(t.column_counts() == std::vector<std::size_t>{2, 2, 2});
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(build_factor_table(labels, {"A09", "A99"}), doctest::Contains("unknown factor"), DataError);
    auto broken = labels;
    broken[1].attack_id.reset();
    CHECK_THROWS_AS(build_factor_table(broken, {"A09", "bonafide"}), DataError);
  }
}

TEST_CASE("seven attacks plus bonafide give eight factor columns") {
  const char* attacks[] = {"A09", "A10", "A11", "A12", "A13", "A14", "A15", "A16"};
  std::vector<SampleLabel> labels;
  for (int r = 0; r < 3; ++r) {
    for (const char* a : attacks) {
      labels.push_back({std::string(a) + "_" + std::to_string(r), SampleClass::spoof, std::string(a)});
    }
    labels.push_back({"bona_" + std::to_string(r), SampleClass::bonafide, std::nullopt});
  }
  const auto t =
      build_factor_table(labels, {"A09", "A10", "A11", "A13", "A14", "A15", "A16", "bonafide"});
  CHECK(t.n_factors() == 8);
  CHECK(t.n_samples() == 24);
}

TEST_CASE("attach_labels joins by sample id") {
  SynthConfig c;
  c.n_samples = 20;
  c.dim_e = 8;
  c.n_attacks = 2;
  auto full = generate_synthetic(c).embeddings;
  auto labels = full.labels;
  std::reverse(labels.begin(), labels.end());
  EmbeddingSet bare{full.ids, {}, full.matrix};
  attach_labels(bare, labels);
  CHECK(bare.labels == full.labels);
  labels.pop_back();
  EmbeddingSet missing{full.ids, {}, full.matrix};
  CHECK_THROWS_AS(attach_labels(missing, labels), DataError);
}
