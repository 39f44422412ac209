#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sara/analysis/records.hpp"

namespace sara {

using SchoolFractions = std::array<double, kNumSchools>;

// ---------------------------------------------------------------------------
// Alignment fractions
// ---------------------------------------------------------------------------

enum class GroupBy { Model, ModelClass };

struct FractionTable {
    std::vector<std::string> groups;
    std::vector<std::size_t> counts;
    std::vector<SchoolFractions> fractions;  // each row sums to 1
    std::vector<std::string> warnings;
};

/// Share of responses per school in each group. `classifier` selects whose
/// labels are used (default: the first classifier tag present).
FractionTable alignment_fractions(const std::vector<ClassifiedResponse>& records, GroupBy group_by,
                                  const std::string& classifier = {});

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

/// 100 * (modal_count - 1) / (R - 1) for R >= 2 repetition labels:
/// 100 when every label agrees, 0 when every label differs.
double consistency_percent(std::span<const std::size_t> labels);

struct BootstrapOptions {
    std::size_t resamples = 10000;
    double level = 0.90;
    std::uint64_t seed = 0;
};

struct ConsistencyRow {
    std::string model_tag;
    std::string dilemma_id;
    std::size_t repetitions = 0;
    std::optional<double> value;  // missing for a single repetition
    std::optional<double> ci_low;
    std::optional<double> ci_high;
};

struct ModelConsistency {
    std::string model_tag;
    std::size_t dilemmas = 0;
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct ConsistencyReport {
    std::vector<ConsistencyRow> rows;
    std::vector<ModelConsistency> models;
    std::vector<std::string> warnings;
};

/// Per-(model, dilemma) consistency with percentile-bootstrap intervals
/// (resampling repetitions), and a per-model mean whose interval resamples
/// the model's dilemmas.
ConsistencyReport consistency(const std::vector<ClassifiedResponse>& records, const std::string& classifier = {},
                              const BootstrapOptions& bootstrap = {});

// ---------------------------------------------------------------------------
// Adjusted mutual information
// ---------------------------------------------------------------------------

/// Maps arbitrary labels onto dense 0-based integer codes in order of first appearance.
std::vector<int> encode_labels(const std::vector<std::string>& labels);

double entropy(std::span<const int> labels);
double mutual_information(std::span<const int> a, std::span<const int> b);
/// E[MI] under the permutation model with fixed marginals (hypergeometric sum).
double expected_mutual_information(std::span<const int> a, std::span<const int> b);
/// (MI - E[MI]) / (mean(H(a), H(b)) - E[MI]). When the denominator vanishes
/// (e.g. both labelings constant) the result is 1 for identical partitions, else 0.
double adjusted_mutual_information(std::span<const int> a, std::span<const int> b);

struct AmiReport {
    double ami = 0.0;
    double mutual_information = 0.0;
    double expected_mutual_information = 0.0;
    double entropy_a = 0.0;
    double entropy_b = 0.0;
    std::size_t n_surrogates = 0;
    double surrogate_mean = 0.0;
    double surrogate_p01 = 0.0;
    double surrogate_p99 = 0.0;
    std::vector<double> surrogates;
};

/// Observed AMI plus a surrogate distribution built by shuffling `b`.
/// Throws ArgumentError on length mismatch, fewer than 2 items or fewer than
/// 100 surrogates.
AmiReport ami_agreement(std::span<const int> a, std::span<const int> b, std::size_t n_surrogates = 1000,
                        std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Response variability: transitions and covariance
// ---------------------------------------------------------------------------

struct TransitionOptions {
    double absorbing_threshold = 0.5;
    double bridging_threshold = 0.1;
};

struct TransitionReport {
    Eigen::MatrixXd counts;         // 8 x 8
    Eigen::MatrixXd probabilities;  // row-stochastic; empty rows uniform
    std::vector<bool> empty_row;
    std::vector<std::size_t> absorbing;
    std::vector<std::size_t> bridging;
    std::size_t trajectories = 0;
};

/// Transitions between consecutive repetitions within each (model, dilemma)
/// trajectory, pooled over the models of `group`.
TransitionReport transition_matrix(const std::vector<ClassifiedResponse>& records, ModelClass group,
                                   const std::string& classifier = {}, const TransitionOptions& options = {});

struct CovarianceReport {
    Eigen::MatrixXd covariance;  // 8 x 8, population convention
    std::size_t observations = 0;
};

/// Covariance of per-(model, dilemma) school-frequency vectors across the
/// observations of `group`.
CovarianceReport covariance_matrix(const std::vector<ClassifiedResponse>& records, ModelClass group,
                                   const std::string& classifier = {});

/// Population covariance of row observations (n_obs x n_vars).
Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& observations);

}  // namespace sara
