#include "sara/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>

#include "sara/errors.hpp"

namespace sara {

namespace {

// Relative tolerance under which two singular values count as tied.
constexpr double kTieTolerance = 1e-12;
// Row norms below this fraction of the largest row norm are treated as zero.
constexpr double kZeroRowTolerance = 1e-13;

Eigen::Index argmax_abs(const Eigen::Ref<const VectorD>& v)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(best))) best = i;
    return best;
}

}  // namespace

ReducedActivation svd_reduce(const MatrixD& m, Eigen::Index n_comp)
{
    const Eigen::Index rank_bound = std::min(m.rows(), m.cols());
    if (n_comp < 1 || n_comp > rank_bound)
        throw ArgumentError("n_comp must lie in [1, " + std::to_string(rank_bound) + "], got " +
                            std::to_string(n_comp));

    Eigen::JacobiSVD<MatrixD, Eigen::ColPivHouseholderQRPreconditioner> svd(m, Eigen::ComputeThinU |
                                                                                   Eigen::ComputeThinV);
    VectorD sigma = svd.singularValues();
    MatrixD u = svd.matrixU();
    MatrixD v = svd.matrixV();
    if (!sigma.allFinite() || !u.allFinite() || !v.allFinite())
        throw NumericalError("SVD produced non-finite values");

    // Order: descending singular value; ties by the token each component loads on.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(sigma.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const double scale = sigma.size() > 0 ? std::max(sigma.maxCoeff(), 1e-300) : 1.0;
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        if (std::abs(sigma(a) - sigma(b)) > kTieTolerance * scale) return sigma(a) > sigma(b);
        return argmax_abs(v.col(a)) < argmax_abs(v.col(b));
    });

    ReducedActivation out;
    out.n_comp = n_comp;
    out.source_tokens = m.cols();
    out.singular_values.resize(sigma.size());
    out.right_vectors.resize(m.cols(), n_comp);
    for (Eigen::Index k = 0; k < sigma.size(); ++k) out.singular_values(k) = sigma(order[static_cast<std::size_t>(k)]);

    for (Eigen::Index k = 0; k < n_comp; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        const double sign = u(argmax_abs(u.col(src)), src) < 0.0 ? -1.0 : 1.0;
        out.right_vectors.col(k) = sign * v.col(src);
    }
    // A * V_k equals U_k * Sigma_k and stays exact when V is a signed permutation.
    out.data = m * out.right_vectors;
    if (!out.data.allFinite()) throw NumericalError("reduced activation is not finite");
    return out;
}

ReducedActivation svd_reduce(const ActivationMatrix& m, Eigen::Index n_comp)
{
    return svd_reduce(m.to_double(), n_comp);
}

Eigen::Index choose_ncomp(const SteeringTriple& triple)
{
    triple.validate();
    const Eigen::Index tokens =
        std::min({triple.prompt.n_tokens(), triple.align.n_tokens(), triple.repel.n_tokens()});
    return std::min(tokens, triple.prompt.n_neurons());
}

SimilarityVector rowwise_cosine(const MatrixD& a, const MatrixD& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ArgumentError("cosine operands differ in shape: " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));

    const VectorD norm_a = a.rowwise().norm();
    const VectorD norm_b = b.rowwise().norm();
    const double floor_a = kZeroRowTolerance * (norm_a.size() ? norm_a.maxCoeff() : 0.0);
    const double floor_b = kZeroRowTolerance * (norm_b.size() ? norm_b.maxCoeff() : 0.0);

    SimilarityVector out;
    out.values = VectorD::Zero(a.rows());
    out.undefined.assign(static_cast<std::size_t>(a.rows()), false);
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
        if (norm_a(j) <= floor_a || norm_b(j) <= floor_b || norm_a(j) == 0.0 || norm_b(j) == 0.0) {
            out.undefined[static_cast<std::size_t>(j)] = true;
            continue;
        }
        const double c = a.row(j).dot(b.row(j)) / (norm_a(j) * norm_b(j));
        out.values(j) = std::clamp(c, -1.0, 1.0);
    }
    return out;
}

SimilarityVector rowwise_cosine(const ReducedActivation& a, const ReducedActivation& b)
{
    return rowwise_cosine(a.data, b.data);
}

}  // namespace sara
