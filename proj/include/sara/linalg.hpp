#pragma once

#include <vector>

#include "sara/actmat.hpp"

namespace sara {

/// Activation matrix projected onto its top singular directions:
/// data = U[:, :n_comp] * Sigma[:n_comp, :n_comp], shape (n_neurons, n_comp).
struct ReducedActivation {
    MatrixD data;
    MatrixD right_vectors;   // V[:, :n_comp], shape (source_tokens, n_comp)
    VectorD singular_values; // all min(n_neurons, n_tokens) values, non-increasing
    Eigen::Index n_comp = 0;
    Eigen::Index source_tokens = 0;

    Eigen::Index n_neurons() const { return data.rows(); }

    /// data * V^T, the rank-n_comp approximation of the source matrix.
    MatrixD reconstruct() const { return data * right_vectors.transpose(); }
};

/// Per-neuron cosine similarity. Entries whose row has zero norm in either
/// operand are 0 and marked undefined.
struct SimilarityVector {
    VectorD values;
    std::vector<bool> undefined;

    Eigen::Index size() const { return values.size(); }
};

/// Exact (non-randomized) SVD truncated to n_comp components.
///
/// Conventions that make the output deterministic:
///  - components ordered by descending singular value; exact ties ordered by
///    the token column each right singular vector loads on most;
///  - each U column is flipped so its largest-magnitude entry is positive.
///
/// Throws ArgumentError for n_comp outside [1, min(n_neurons, n_tokens)] and
/// NumericalError if the decomposition produces non-finite values.
ReducedActivation svd_reduce(const ActivationMatrix& m, Eigen::Index n_comp);
ReducedActivation svd_reduce(const MatrixD& m, Eigen::Index n_comp);

/// min over the triple's token counts, capped at n_neurons.
Eigen::Index choose_ncomp(const SteeringTriple& triple);

/// Throws ArgumentError if the operands differ in shape.
SimilarityVector rowwise_cosine(const ReducedActivation& a, const ReducedActivation& b);
SimilarityVector rowwise_cosine(const MatrixD& a, const MatrixD& b);

}  // namespace sara
