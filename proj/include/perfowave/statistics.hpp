#pragma once

// Two-sample statistics for scalar samples.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace perfowave {

/// Energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'| with all pair means
/// taken over the full empirical samples (V-statistic).  O(n log n).
/// Throws ValidationError on an empty sample.
double energy_distance(std::span<const double> a, std::span<const double> b);

/// Mean of |x - y| over all pairs (x in a, y in b).
double mean_abs_difference(std::span<const double> a, std::span<const double> b);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

using TwoSampleStatistic = std::function<double(std::span<const double>, std::span<const double>)>;

/// Bootstrap standard error: both samples resampled with replacement
/// `replicates` times from a counter-based stream keyed by `seed`.
double bootstrap_standard_error(std::span<const double> a, std::span<const double> b,
                                const TwoSampleStatistic& stat, int replicates, std::uint64_t seed);

/// Fraction of random relabellings of the pooled sample whose statistic is
/// at least the observed one (with the usual +1 correction).
double permutation_p_value(std::span<const double> a, std::span<const double> b,
                           const TwoSampleStatistic& stat, int permutations, std::uint64_t seed);

double sample_mean(std::span<const double> x);
/// Unbiased sample variance (0 for fewer than two values).
double sample_variance(std::span<const double> x);

}  // namespace perfowave
