#include "perfowave/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "perfowave/errors.hpp"
#include "perfowave/noise.hpp"

namespace perfowave {
namespace {

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return s;
}

// Sum over i < j of (s_j - s_i) for sorted s.
double within_sum(const std::vector<double>& s) {
  double total = 0.0;
  const auto n = static_cast<double>(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) total += s[j] * (2.0 * static_cast<double>(j) - n + 1.0);
  return total;
}

double cross_sum(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> prefix(b.size() + 1, 0.0);
  for (std::size_t j = 0; j < b.size(); ++j) prefix[j + 1] = prefix[j] + b[j];
  const double total = prefix.back();
  const auto m = static_cast<double>(b.size());
  double sum = 0.0;
  std::size_t k = 0;
  for (double x : a) {
    while (k < b.size() && b[k] < x) ++k;
    const auto kd = static_cast<double>(k);
    sum += x * kd - prefix[k] + (total - prefix[k]) - x * (m - kd);
  }
  return sum;
}

void require_nonempty(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("two-sample statistic needs non-empty samples");
}

std::uint32_t draw_index(std::uint64_t seed, std::uint32_t rep, std::uint32_t slot, std::uint32_t tag,
                         std::size_t n) {
  const double u = counter_uniform(seed, {rep, slot, tag, 0x5a17u});
  return static_cast<std::uint32_t>(std::min<double>(std::floor(u * static_cast<double>(n)), static_cast<double>(n - 1)));
}

}  // namespace

double mean_abs_difference(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b);
  return cross_sum(sorted_copy(a), sorted_copy(b)) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double energy_distance(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b);
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  if (sa == sb) return 0.0;
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  const double cross = cross_sum(sa, sb) / (na * nb);
  const double aa = 2.0 * within_sum(sa) / (na * na);
  const double bb = 2.0 * within_sum(sb) / (nb * nb);
  return std::max(0.0, 2.0 * cross - aa - bb);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b);
  const auto sa = sorted_copy(a);
  const auto sb = sorted_copy(b);
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double bootstrap_standard_error(std::span<const double> a, std::span<const double> b,
                                const TwoSampleStatistic& stat, int replicates, std::uint64_t seed) {
  require_nonempty(a, b);
  if (replicates < 2) throw ValidationError("bootstrap needs at least two replicates");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(replicates));
  std::vector<double> ra(a.size()), rb(b.size());
  for (int r = 0; r < replicates; ++r) {
    const auto rep = static_cast<std::uint32_t>(r);
    for (std::size_t i = 0; i < a.size(); ++i) ra[i] = a[draw_index(seed, rep, static_cast<std::uint32_t>(i), 1, a.size())];
    for (std::size_t i = 0; i < b.size(); ++i) rb[i] = b[draw_index(seed, rep, static_cast<std::uint32_t>(i), 2, b.size())];
    values.push_back(stat(ra, rb));
  }
  return std::sqrt(sample_variance(values));
}

double permutation_p_value(std::span<const double> a, std::span<const double> b,
                           const TwoSampleStatistic& stat, int permutations, std::uint64_t seed) {
  require_nonempty(a, b);
  const double observed = stat(a, b);
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  int exceed = 0;
  for (int p = 0; p < permutations; ++p) {
    // Fisher-Yates driven by the counter stream.
    for (std::size_t i = pooled.size() - 1; i > 0; --i) {
      const auto j = draw_index(seed, static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(i), 3, i + 1);
      std::swap(pooled[i], pooled[j]);
    }
    const std::span<const double> all(pooled);
    if (stat(all.first(a.size()), all.subspan(a.size())) >= observed) ++exceed;
  }
  return (exceed + 1.0) / (permutations + 1.0);
}

double sample_mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = sample_mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace perfowave
