#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sara/actmat.hpp"
#include "sara/analysis/records.hpp"
#include "sara/linalg.hpp"

namespace sara {

enum class Method { SARA, ActAdd };

std::string to_string(Method m);
Method parse_method(std::string_view name);

struct SteeringResult {
    ActivationMatrix steered;
    VectorD lambda;
    SimilarityVector sim_align;
    SimilarityVector sim_repel;
    Method method = Method::SARA;
    Eigen::Index n_comp = 0;
    // ActAdd only: the delta added to the prompt, shape of the prompt.
    std::optional<MatrixF> added;
};

struct ActAddSpec {
    ActivationMatrix target;
    ActivationMatrix away;
    double injection_coefficient = 1.0;
};

/// Similarity-based steering with attraction and repulsion.
///
/// All three matrices are reduced to n_comp = choose_ncomp(triple) singular
/// components, per-neuron cosines s_align = cos(A3r, A1r) and
/// s_repel = cos(A3r, A2r) are taken over the reduced dimensions, and every
/// neuron's activations are rescaled by 1 + (s_align - s_repel).
SteeringResult sara_steer(const SteeringTriple& triple);

/// Activation addition baseline: prompt + c * (target - away), with the
/// target/away matrices aligned to the prompt's token axis left to right
/// (longer ones truncated, shorter ones zero-padded).
SteeringResult actadd_steer(const ActivationMatrix& prompt, const ActAddSpec& spec);

/// Left-to-right token alignment used by ActAdd.
MatrixD align_tokens(const MatrixF& m, Eigen::Index n_tokens);

// ---------------------------------------------------------------------------
// Selectivity over classified steered responses.
// ---------------------------------------------------------------------------

/// Schools counted as the intended outcome of each steering direction.
struct DirectionTargets {
    std::vector<std::string> kantian{"Deontology"};
    std::vector<std::string> utilitarian{"Act Utilitarianism", "Rule Utilitarianism"};
};

struct SelectivityRow {
    SteeringDirection direction = SteeringDirection::Unsteered;
    std::size_t n = 0;
    double kantian_share = 0.0;
    double utilitarian_share = 0.0;
    double other_share = 0.0;
    // Defined for Kantian / Utilitarian rows only.
    std::optional<double> on_target;
    std::optional<double> spillover;
};

struct SelectivityReport {
    std::vector<SelectivityRow> rows;
    std::vector<std::string> warnings;
};

/// Records without a steering direction are skipped with a warning.
/// Throws ArgumentError when nothing remains.
SelectivityReport steering_selectivity(const std::vector<ClassifiedResponse>& records, const SchoolSet& schools,
                                       const std::string& classifier = {}, const DirectionTargets& targets = {});

struct MethodDeltaRow {
    SteeringDirection direction = SteeringDirection::Kantian;
    double on_target_sara = 0.0;
    double on_target_actadd = 0.0;
    double spillover_sara = 0.0;
    double spillover_actadd = 0.0;

    double on_target_delta() const { return on_target_sara - on_target_actadd; }
    double spillover_delta() const { return spillover_sara - spillover_actadd; }
};

std::vector<MethodDeltaRow> method_delta_table(const SelectivityReport& sara, const SelectivityReport& actadd);

// ---------------------------------------------------------------------------
// Activation-level selectivity on ensembles with known row structure.
// ---------------------------------------------------------------------------

struct ActivationSelectivity {
    double on_target_gain = 0.0;    // mean (|steered_j| / |prompt_j| - 1) over target rows
    double spillover = 0.0;         // mean max(0, gain) over non-target rows
    double repel_gain = 0.0;        // mean gain over rows shared with the repel prompt
};

/// Row roles: 0 = other, 1 = target (shared with align), 2 = repel-shared.
ActivationSelectivity activation_selectivity(const ActivationMatrix& prompt, const ActivationMatrix& steered,
                                             const std::vector<int>& row_roles);

struct SyntheticTriple {
    SteeringTriple triple;
    std::vector<int> row_roles;
};

/// Rank-three ensemble member: three disjoint neuron groups load on three
/// orthonormal token patterns with strengths 3, 2, 1. The prompt's target
/// group shares its loading rank with the align matrix and its repel group
/// shares its rank with the repel matrix; `noise` adds Gaussian jitter.
SyntheticTriple make_synthetic_triple(std::uint64_t seed, Eigen::Index group_size = 16, Eigen::Index n_tokens = 6,
                                      double noise = 0.01);

struct SyntheticComparisonRow {
    SteeringDirection direction = SteeringDirection::Kantian;
    Method method = Method::SARA;
    ActivationSelectivity mean;
};

/// Runs both methods in both directions over `members` ensemble members.
std::vector<SyntheticComparisonRow> synthetic_method_comparison(std::size_t members, std::uint64_t seed);

}  // namespace sara
