#include "sara/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "sara/errors.hpp"

namespace sara {

double percentile(std::vector<double> values, double q)
{
    if (values.empty()) throw ArgumentError("percentile of empty data");
    if (!(q >= 0.0 && q <= 100.0)) throw ArgumentError("percentile q must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

FdrResult bh_fdr(std::span<const double> p, double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must be in (0, 1)");
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("p-values must lie in [0, 1]");

    if (p.empty()) throw ArgumentError("bh_fdr needs at least one p-value");
    const std::size_t m = p.size();
    FdrResult r;
    r.rejected.assign(m, false);
    r.adjusted.assign(m, 1.0);

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });

    std::size_t k_max = 0;
    for (std::size_t k = 1; k <= m; ++k)
        if (p[order[k - 1]] <= static_cast<double>(k) * alpha / static_cast<double>(m)) k_max = k;
    for (std::size_t k = 0; k < k_max; ++k) r.rejected[order[k]] = true;
    r.n_rejected = k_max;

    double running = 1.0;
    for (std::size_t k = m; k >= 1; --k) {
        const double q = p[order[k - 1]] * (static_cast<double>(m) / static_cast<double>(k));
        running = std::min(running, q);
        r.adjusted[order[k - 1]] = running;
    }
    return r;
}

namespace {

// Doubled midranks (integers) of the pooled sample a ++ b.
std::vector<long> doubled_ranks(std::span<const double> a, std::span<const double> b, double* tie_term)
{
    const std::size_t n = a.size() + b.size();
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return pooled[x] < pooled[y]; });

    std::vector<long> ranks(n);
    *tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const long r2 = static_cast<long>(i + 1 + j + 1);  // 2 * midrank
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r2;
        const double t = static_cast<double>(j - i + 1);
        *tie_term += t * t * t - t;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

MannWhitneyResult mann_whitney(std::span<const double> a, std::span<const double> b, std::size_t exact_limit)
{
    if (a.empty() || b.empty()) throw ArgumentError("Mann-Whitney needs two non-empty samples");
    for (double v : a)
        if (!std::isfinite(v)) throw ArgumentError("Mann-Whitney sample contains a non-finite value");
    for (double v : b)
        if (!std::isfinite(v)) throw ArgumentError("Mann-Whitney sample contains a non-finite value");

    const auto na = static_cast<long>(a.size());
    const auto nb = static_cast<long>(b.size());
    const long n = na + nb;
    double tie_term = 0.0;
    const auto ranks = doubled_ranks(a, b, &tie_term);

    long ra2 = 0;
    for (long i = 0; i < na; ++i) ra2 += ranks[static_cast<std::size_t>(i)];
    const long u2 = ra2 - na * (na + 1);  // 2U
    const long centre2 = na * nb;         // 2 E[U]

    MannWhitneyResult r;
    r.u = static_cast<double>(u2) / 2.0;
    r.rank_biserial = 2.0 * r.u / static_cast<double>(na * nb) - 1.0;

    if (a.size() <= exact_limit && b.size() <= exact_limit) {
        // count[k][s]: subsets of size k with doubled rank sum s.
        const long max_sum = std::accumulate(ranks.begin(), ranks.end(), 0L);
        std::vector<std::vector<double>> count(static_cast<std::size_t>(na + 1),
                                               std::vector<double>(static_cast<std::size_t>(max_sum + 1), 0.0));
        count[0][0] = 1.0;
        for (long r2 : ranks)
            for (long k = na; k >= 1; --k)
                for (long s = max_sum; s >= r2; --s)
                    count[static_cast<std::size_t>(k)][static_cast<std::size_t>(s)] +=
                        count[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(s - r2)];
        const long observed = std::abs(u2 - centre2);
        double extreme = 0.0;
        double total = 0.0;
        for (long s = 0; s <= max_sum; ++s) {
            const double c = count[static_cast<std::size_t>(na)][static_cast<std::size_t>(s)];
            if (c == 0.0) continue;
            total += c;
            if (std::abs(s - na * (na + 1) - centre2) >= observed) extreme += c;
        }
        r.p_value = std::min(1.0, extreme / total);
        r.exact = true;
        return r;
    }

    const double mu = static_cast<double>(na * nb) / 2.0;
    const double dn = static_cast<double>(n);
    const double var =
        static_cast<double>(na * nb) / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (var <= 0.0) {
        r.p_value = 1.0;
        return r;
    }
    const double z = std::max(0.0, std::abs(r.u - mu) - 0.5) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

FoundationTestReport pairwise_foundation_tests(const std::vector<MfqSheet>& sheets, double alpha,
                                               ComparisonMode mode)
{
    FoundationTestReport report;
    report.alpha = alpha;

    std::map<std::string, std::vector<const MfqSheet*>> by_model;
    std::size_t flagged = 0;
    for (const auto& s : sheets) {
        if (s.catch_flagged) {
            ++flagged;
            continue;
        }
        by_model[s.model_tag].push_back(&s);
    }
    if (flagged) report.warnings.push_back(std::to_string(flagged) + " catch-flagged sheet(s) excluded");
    if (by_model.size() < 2) throw ArgumentError("foundation tests need at least 2 models with usable sheets");

    std::vector<std::string> models;
    for (const auto& [m, _] : by_model) models.push_back(m);

    auto scores = [&](const std::string& model, std::size_t f) {
        std::vector<double> v;
        for (const auto* s : by_model.at(model)) v.push_back(s->foundation_scores[f]);
        return v;
    };
    auto rest_scores = [&](const std::string& model, std::size_t f) {
        std::vector<double> v;
        for (const auto& [m, ss] : by_model)
            if (m != model)
                for (const auto* s : ss) v.push_back(s->foundation_scores[f]);
        return v;
    };
    auto add = [&](Foundation fd, const std::string& ma, const std::string& mb, const std::vector<double>& xa,
                   const std::vector<double>& xb) {
        if (xa.size() < 2 || xb.size() < 2) {
            report.warnings.push_back(to_string(fd) + ": " + ma + " vs " + mb + " skipped (fewer than 2 sheets)");
            return;
        }
        const auto mw = mann_whitney(xa, xb);
        FoundationTest t;
        t.foundation = fd;
        t.model_a = ma;
        t.model_b = mb;
        t.n_a = xa.size();
        t.n_b = xb.size();
        t.effect_size = mw.rank_biserial;
        t.p_value = mw.p_value;
        t.exact = mw.exact;
        report.tests.push_back(t);
    };

    for (std::size_t f = 0; f < kFoundations; ++f) {
        const Foundation fd = kAllFoundations[f];
        if (mode == ComparisonMode::Pairwise) {
            for (std::size_t i = 0; i < models.size(); ++i)
                for (std::size_t j = i + 1; j < models.size(); ++j)
                    add(fd, models[i], models[j], scores(models[i], f), scores(models[j], f));
        } else {
            for (const auto& m : models) add(fd, m, "rest", scores(m, f), rest_scores(m, f));
        }
    }

    if (report.tests.empty()) return report;
    std::vector<double> p;
    for (const auto& t : report.tests) p.push_back(t.p_value);
    const auto fdr = bh_fdr(p, alpha);
    for (std::size_t i = 0; i < report.tests.size(); ++i) {
        report.tests[i].p_adjusted = fdr.adjusted[i];
        report.tests[i].significant = fdr.rejected[i];
    }
    return report;
}

}  // namespace sara
