#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// being checked: the EER/DCF oracle enumerates thresholds by brute force, the
// gradient oracle differentiates an independent scalar forward pass, and the
// MI oracle evaluates the closed form over a joint count table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "sparsedet/detmetrics.hpp"
#include "sparsedet/nn.hpp"

namespace oracle {

using sparsedet::SampleClass;
using sparsedet::ScoreSet;

struct Rates {
  double frr, far;
};

// FRR/FAR at threshold t by direct counting.
inline Rates rates_at(const ScoreSet& s, double t) {
  std::size_t nb = 0, ns = 0, miss = 0, fa = 0;
  for (const auto& e : s) {
    if (e.cls == SampleClass::bonafide) {
      ++nb;
      if (e.score < t) ++miss;
    } else {
      ++ns;
      if (e.score >= t) ++fa;
    }
  }
  return {static_cast<double>(miss) / static_cast<double>(nb), static_cast<double>(fa) / static_cast<double>(ns)};
}

inline std::vector<Rates> all_rates(const ScoreSet& s) {
  std::vector<Rates> out;
  out.push_back(rates_at(s, -std::numeric_limits<double>::infinity()));
  out.push_back(rates_at(s, std::numeric_limits<double>::infinity()));
  for (const auto& e : s) out.push_back(rates_at(s, e.score));
  return out;
}

inline double eer(const ScoreSet& s) {
  const auto rates = all_rates(s);
  double gap = std::numeric_limits<double>::infinity();
  for (const auto& r : rates) gap = std::min(gap, std::abs(r.frr - r.far));
  std::optional<double> equal, below, above;
  for (const auto& r : rates) {
    if (std::abs(r.frr - r.far) != gap) continue;
    if (r.frr == r.far) equal = r.frr;
    else if (r.frr < r.far) below = (r.frr + r.far) / 2.0;
    else above = (r.frr + r.far) / 2.0;
  }
  if (equal) return *equal;
  if (below && above) return (*below + *above) / 2.0;
  return below ? *below : *above;
}

inline double min_dcf(const ScoreSet& s, double c_miss, double c_fa, double p_target) {
  const double a = c_miss * p_target;
  const double b = c_fa * (1.0 - p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : all_rates(s)) best = std::min(best, a * r.frr + b * r.far);
  return best / std::min(a, b);
}

// Cross-entropy of the classifier head, evaluated scalar by scalar without
// the library's kernels or TopK routine.
struct NaiveHead {
  std::size_t e, d, k;
  std::vector<double> w_in, b_in, w_out, b_out;  // row-major like LatentModel

  static NaiveHead from(const sparsedet::LatentModel& m) {
    return {m.dim_e(), m.dim_d(), m.sparsity_k, m.w_in.values(), m.b_in, m.w_out.values(), m.b_out};
  }

  std::vector<double> logits(const std::vector<double>& x) const {
    std::vector<double> h(d);
    for (std::size_t j = 0; j < d; ++j) {
      double z = b_in[j];
      for (std::size_t i = 0; i < e; ++i) z += x[i] * w_in[i * d + j];
      h[j] = z > 0.0 ? z : 0.0;
    }
    // keep j iff fewer than k entries beat it (value, then lower index)
    std::vector<double> kept(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t beaten_by = 0;
      for (std::size_t i = 0; i < d; ++i) {
        if (h[i] > h[j] || (h[i] == h[j] && i < j)) ++beaten_by;
      }
      if (beaten_by < k) kept[j] = h[j];
    }
    std::vector<double> out(2);
    for (std::size_t c = 0; c < 2; ++c) {
      out[c] = b_out[c];
      for (std::size_t j = 0; j < d; ++j) out[c] += kept[j] * w_out[j * 2 + c];
    }
    return out;
  }

  // mean over rows of -log softmax(logits)[target]
  double loss(const std::vector<std::vector<double>>& xs, const std::vector<std::uint8_t>& targets) const {
    double total = 0.0;
    for (std::size_t n = 0; n < xs.size(); ++n) {
      const auto l = logits(xs[n]);
      const double m = std::max(l[0], l[1]);
      const double lse = m + std::log(std::exp(l[0] - m) + std::exp(l[1] - m));
      total += lse - l[targets[n]];
    }
    return total / static_cast<double>(xs.size());
  }
};

// Central difference of f with respect to *slot.
template <typename F>
double central_difference(double* slot, double eps, F&& f) {
  const double saved = *slot;
  *slot = saved + eps;
  const double up = f();
  *slot = saved - eps;
  const double down = f();
  *slot = saved;
  return (up - down) / (2.0 * eps);
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Closed-form MI (nats) of a joint count table.
inline double mi_from_table(const std::vector<std::vector<double>>& counts) {
  double n = 0.0;
  std::vector<double> row(counts.size(), 0.0), col(counts[0].size(), 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      n += counts[i][j];
      row[i] += counts[i][j];
      col[j] += counts[i][j];
    }
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      if (counts[i][j] == 0.0) continue;
      const double p = counts[i][j] / n;
      mi += p * std::log(p / ((row[i] / n) * (col[j] / n)));
    }
  }
  return mi;
}

inline double entropy_from_counts(const std::vector<double>& counts) {
  double n = 0.0;
  for (double c : counts) n += c;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

// Expands a joint count table into paired index vectors.
inline void expand_table(const std::vector<std::vector<double>>& counts, std::vector<std::uint32_t>& a,
                         std::vector<std::uint32_t>& b) {
  a.clear();
  b.clear();
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      for (int c = 0; c < static_cast<int>(counts[i][j]); ++c) {
        a.push_back(static_cast<std::uint32_t>(i));
        b.push_back(static_cast<std::uint32_t>(j));
      }
    }
  }
}

// Random score set with both classes present; scores drawn from a small
// integer grid when `ties` so that equal scores are common.
inline ScoreSet random_scores(std::mt19937_64& rng, std::size_t max_n, bool ties) {
  std::uniform_int_distribution<std::size_t> size(2, max_n);
  const std::size_t n = size(rng);
  std::uniform_real_distribution<double> real(-3.0, 3.0);
  std::uniform_int_distribution<int> grid(0, 9);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> attack(0, 2);
  ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    sparsedet::ScoreEntry e;
    e.sample_id = "s" + std::to_string(i);
    e.cls = (i == 0) ? SampleClass::bonafide : (i == 1 ? SampleClass::spoof : (coin(rng) ? SampleClass::bonafide : SampleClass::spoof));
    const double shift = e.cls == SampleClass::bonafide ? 0.7 : 0.0;
    e.score = ties ? static_cast<double>(grid(rng)) / 4.0 + (coin(rng) ? shift : 0.0) : real(rng) + shift;
    if (e.cls == SampleClass::spoof) e.attack_id = "A0" + std::to_string(attack(rng));
    s.push_back(e);
  }
  return s;
}

}  // namespace oracle
