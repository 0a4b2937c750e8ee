#pragma once

// Correlation, effect size, sign-flip permutation test and Benjamini-Hochberg
// adjustment.

#include <cstdint>
#include <span>
#include <vector>

namespace gradlab {

double pearson(std::span<const double> x, std::span<const double> y);

/// (mean1 - mean2) / pooled standard deviation.
double cohens_d(std::span<const double> a, std::span<const double> b);

/// Two-sided sign-flip test on paired differences. Enumerates all 2^n sign
/// assignments when 2^n <= n_perm (p = hits / 2^n); otherwise draws n_perm
/// random assignments (p = (1 + hits) / (1 + n_perm)).
double paired_permutation_test(std::span<const double> diffs, std::size_t n_perm,
                               std::uint64_t seed);

/// Step-up adjusted p values, in input order.
std::vector<double> bh_adjust(std::span<const double> p);
/// Rejections at level q.
std::vector<bool> bh_reject(std::span<const double> p, double q);

/// "***", "**", "*" or "" for p < .001, .01, .05.
const char* stars(double p);

}  // namespace gradlab
