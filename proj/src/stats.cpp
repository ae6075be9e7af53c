#include "sdtnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sdtnet {

namespace {

// midranks of |values|
std::vector<double> midranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double wilcoxon_paired(const std::vector<double>& a, const std::vector<double>& b,
                       WilcoxonMethod method) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon_paired: length mismatch");

  std::vector<double> diffs;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) return 1.0;  // degenerate: no information either way
  const size_t n = diffs.size();
  if (n < 5) throw std::invalid_argument("wilcoxon_paired: need >= 5 nonzero differences");

  std::vector<double> abs(n);
  for (size_t i = 0; i < n; ++i) abs[i] = std::fabs(diffs[i]);
  const auto ranks = midranks(abs);

  double w_pos = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (diffs[i] > 0) w_pos += ranks[i];
  const double total = static_cast<double>(n) * (static_cast<double>(n) + 1.0) / 2.0;
  const double w_neg = total - w_pos;

  const bool exact = method == WilcoxonMethod::kExact ||
                     (method == WilcoxonMethod::kAuto && n <= 12);
  if (exact) {
    // full enumeration of sign assignments; ties enter through the midranks
    const double lo = std::min(w_pos, w_neg);
    const double hi = std::max(w_pos, w_neg);
    const uint64_t assignments = 1ull << n;
    uint64_t count_lo = 0, count_hi = 0;
    const double eps = 1e-9;
    for (uint64_t mask = 0; mask < assignments; ++mask) {
      double w = 0.0;
      for (size_t i = 0; i < n; ++i)
        if (mask & (1ull << i)) w += ranks[i];
      if (w <= lo + eps) ++count_lo;
      if (w >= hi - eps) ++count_hi;
    }
    const double p = static_cast<double>(count_lo + count_hi) / static_cast<double>(assignments);
    return std::min(1.0, p);
  }

  // normal approximation with tie correction
  const double nn = static_cast<double>(n);
  double tie_term = 0.0;
  {
    auto sorted = abs;
    std::sort(sorted.begin(), sorted.end());
    size_t i = 0;
    while (i < sorted.size()) {
      size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double mu = nn * (nn + 1.0) / 4.0;
  const double sigma2 = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (sigma2 <= 0.0) return 1.0;
  const double z = (w_pos - mu) / std::sqrt(sigma2);
  return std::min(1.0, 2.0 * (1.0 - normal_cdf(std::fabs(z))));
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman_rho: need two equal-length samples");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace sdtnet
