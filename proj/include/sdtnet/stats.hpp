#pragma once

#include <vector>

namespace sdtnet {

enum class WilcoxonMethod { kAuto, kExact, kNormal };

// Two-sided paired signed-rank test. Zero differences are dropped; if all
// differences are zero the result is degenerate (p = 1). Exact enumeration of
// the 2^n sign assignments for n <= 12, normal approximation with tie
// correction above.
double wilcoxon_paired(const std::vector<double>& a, const std::vector<double>& b,
                       WilcoxonMethod method = WilcoxonMethod::kAuto);

// Rank correlation with midranks; NaN when either side has zero rank variance.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

double normal_cdf(double z);

}  // namespace sdtnet
