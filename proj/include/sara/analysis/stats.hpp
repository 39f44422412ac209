#pragma once

#include <span>
#include <string>
#include <vector>

#include "sara/analysis/mfq.hpp"

namespace sara {

/// Linear-interpolated percentile (q in [0, 100]) of unsorted data.
double percentile(std::vector<double> values, double q);

struct FdrResult {
    std::vector<bool> rejected;
    std::vector<double> adjusted;  // BH-adjusted p-values, in input order
    std::size_t n_rejected = 0;
};

/// Benjamini-Hochberg step-up at level alpha. Throws ArgumentError when empty.
FdrResult bh_fdr(std::span<const double> p_values, double alpha = 0.05);

struct MannWhitneyResult {
    double u = 0.0;              // pairs with a > b, ties counted one half
    double rank_biserial = 0.0;  // 2u / (n_a n_b) - 1, positive when a tends to exceed b
    double p_value = 1.0;        // two-sided
    bool exact = false;
};

/// Mann-Whitney U. Uses the exact permutation distribution (with midranks)
/// when both groups have at most `exact_limit` members, otherwise the
/// tie-corrected normal approximation with continuity correction.
MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b, std::size_t exact_limit = 10);

enum class ComparisonMode { Pairwise, OneVsRest };

struct FoundationTest {
    Foundation foundation = Foundation::HarmCare;
    std::string model_a;
    std::string model_b;  // "rest" in one-vs-rest mode
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    double effect_size = 0.0;
    double p_value = 1.0;
    double p_adjusted = 1.0;
    bool significant = false;
    bool exact = false;
};

struct FoundationTestReport {
    std::vector<FoundationTest> tests;
    std::vector<std::string> warnings;
    double alpha = 0.05;
};

/// Rank-based tests of every model pair (or every model against the rest)
/// on every foundation; all p-values form one BH-FDR family.
FoundationTestReport pairwise_foundation_tests(const std::vector<MfqSheet>& sheets, double alpha = 0.05,
                                               ComparisonMode mode = ComparisonMode::Pairwise);

}  // namespace sara
