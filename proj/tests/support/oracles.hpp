#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Deliberately naive: nothing here shares code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "sara/actmat.hpp"
#include "sara/rng.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;  // row-major, rows x cols

inline Mat random_mat(sara::SplitMix64& rng, std::size_t rows, std::size_t cols)
{
    Mat m(rows, std::vector<double>(cols));
    for (auto& r : m)
        for (auto& v : r) v = rng.normal();
    return m;
}

inline sara::MatrixF to_eigen_f(const Mat& m)
{
    sara::MatrixF out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m[0].size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<float>(m[i][j]);
    return out;
}

inline sara::MatrixF random_matrix_f(sara::SplitMix64& rng, Eigen::Index rows, Eigen::Index cols)
{
    return to_eigen_f(random_mat(rng, static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)));
}

/// One-sided (Hestenes) Jacobi: orthogonalize columns by plane rotations;
/// the singular values are the final column norms. Returned descending.
inline std::vector<double> jacobi_singular_values(Mat a)
{
    std::size_t m = a.size();
    std::size_t n = a[0].size();
    if (m < n) {
        Mat t(n, std::vector<double>(m));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) t[j][i] = a[i][j];
        a = t;
        std::swap(m, n);
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0, beta = 0, gamma = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += a[i][p] * a[i][p];
                    beta += a[i][q] * a[i][q];
                    gamma += a[i][p] * a[i][q];
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
                if (std::abs(gamma) < 1e-300) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = a[i][p];
                    const double y = a[i][q];
                    a[i][p] = c * x - s * y;
                    a[i][q] = s * x + c * y;
                }
            }
        }
        if (off < 1e-15) break;
    }
    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < m; ++i) s += a[i][j] * a[i][j];
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

// ---------------------------------------------------------------------------
// Information theory by direct counting.

inline double mi(const std::vector<int>& a, const std::vector<int>& b)
{
    const double n = static_cast<double>(a.size());
    std::map<int, double> ca, cb;
    std::map<std::pair<int, int>, double> cab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1;
        cb[b[i]] += 1;
        cab[{a[i], b[i]}] += 1;
    }
    double out = 0;
    for (auto& [k, c] : cab) out += c / n * std::log(c * n / (ca[k.first] * cb[k.second]));
    return out;
}

inline double h(const std::vector<int>& a)
{
    const double n = static_cast<double>(a.size());
    std::map<int, double> c;
    for (int x : a) c[x] += 1;
    double out = 0;
    for (auto& [k, v] : c) out -= v / n * std::log(v / n);
    return out;
}

/// E[MI] as the average over all n! orderings of b (n <= 8).
inline double brute_emi(const std::vector<int>& a, std::vector<int> b)
{
    std::vector<std::size_t> idx(b.size());
    std::iota(idx.begin(), idx.end(), 0);
    double sum = 0;
    std::size_t count = 0;
    std::vector<int> perm(b.size());
    do {
        for (std::size_t i = 0; i < idx.size(); ++i) perm[i] = b[idx[i]];
        sum += mi(a, perm);
        ++count;
    } while (std::next_permutation(idx.begin(), idx.end()));
    return sum / static_cast<double>(count);
}

inline double brute_ami(const std::vector<int>& a, const std::vector<int>& b)
{
    const double e = brute_emi(a, b);
    return (mi(a, b) - e) / (0.5 * (h(a) + h(b)) - e);
}

// ---------------------------------------------------------------------------
// Benjamini-Hochberg from the definition: largest k with p_(k) <= k alpha / m,
// then reject every hypothesis whose p-value is at most p_(k).

inline std::vector<bool> brute_bh(const std::vector<double>& p, double alpha)
{
    const std::size_t m = p.size();
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    double threshold = -1.0;
    for (std::size_t k = 1; k <= m; ++k)
        if (sorted[k - 1] <= static_cast<double>(k) * alpha / static_cast<double>(m)) threshold = sorted[k - 1];
    std::vector<bool> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = p[i] <= threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Mann-Whitney by enumerating every split of the pooled sample.

inline double u_stat(const std::vector<double>& a, const std::vector<double>& b)
{
    double u = 0;
    for (double x : a)
        for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    return u;
}

inline double brute_mw_p(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size();
    const std::size_t na = a.size();
    const double centre = static_cast<double>(na * b.size()) / 2.0;
    const double observed = std::abs(u_stat(a, b) - centre);
    double extreme = 0, total = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
        std::vector<double> x, y;
        for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? x : y).push_back(pooled[i]);
        total += 1;
        if (std::abs(u_stat(x, y) - centre) >= observed - 1e-9) extreme += 1;
    }
    return extreme / total;
}

}  // namespace oracle
