#include "gradlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

namespace {

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionMismatch("pearson: length mismatch");
  if (x.size() < 2) throw DegenerateVariance("pearson: need at least two points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateVariance("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DegenerateVariance("cohens_d: need two values per sample");
  const double ma = mean(a);
  const double mb = mean(b);
  double ssa = 0.0, ssb = 0.0;
  for (double v : a) ssa += (v - ma) * (v - ma);
  for (double v : b) ssb += (v - mb) * (v - mb);
  const double pooled = (ssa + ssb) / static_cast<double>(a.size() + b.size() - 2);
  if (!(pooled > 0.0)) throw DegenerateVariance("cohens_d: zero pooled variance");
  return (ma - mb) / std::sqrt(pooled);
}

double paired_permutation_test(std::span<const double> diffs, std::size_t n_perm,
                               std::uint64_t seed) {
  if (diffs.empty()) throw UsageError("permutation test needs at least one difference");
  if (n_perm == 0) throw UsageError("permutation count must be >= 1");
  const std::size_t n = diffs.size();
  double sum = 0.0, scale = 0.0;
  for (double d : diffs) {
    sum += d;
    scale += std::abs(d);
  }
  // Sums rather than means; the comparison tolerates reordering error.
  const double observed = std::abs(sum) - 1e-12 * scale;

  if (n < 63 && (std::uint64_t{1} << n) <= n_perm) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1U) ? -diffs[i] : diffs[i];
      if (std::abs(s) >= observed) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n_perm; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += rng.coin() ? -diffs[i] : diffs[i];
    if (std::abs(s) >= observed) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(1 + n_perm);
}

std::vector<double> bh_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("p value outside [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const double v = std::max(p[order[r]], p[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1));
    running = std::min(running, v);
    adj[order[r]] = running;
  }
  return adj;
}

std::vector<bool> bh_reject(std::span<const double> p, double q) {
  const auto adj = bh_adjust(p);
  std::vector<bool> out(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) out[i] = adj[i] <= q;
  return out;
}

const char* stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

}  // namespace gradlab
