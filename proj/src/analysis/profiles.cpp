#include "sara/analysis/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include "sara/analysis/stats.hpp"
#include "sara/errors.hpp"
#include "sara/rng.hpp"

namespace sara {

namespace {

std::string resolve_classifier(const std::vector<ClassifiedResponse>& records, const std::string& classifier)
{
    return classifier.empty() ? default_classifier(records) : classifier;
}

struct Trajectory {
    std::string model_tag;
    std::string dilemma_id;
    ModelClass model_class = ModelClass::Open;
    std::vector<std::size_t> labels;  // ordered by repetition index
};

// (model, dilemma) label sequences for one classifier, in repetition order.
std::vector<Trajectory> trajectories(const std::vector<ClassifiedResponse>& records, const std::string& tag,
                                     std::size_t* unlabeled = nullptr)
{
    std::map<std::pair<std::string, std::string>, std::vector<const ClassifiedResponse*>> grouped;
    std::size_t missing = 0;
    for (const auto& r : records) {
        if (!r.school_by_classifier.count(tag)) {
            ++missing;
            continue;
        }
        grouped[{r.model_tag, r.dilemma_id}].push_back(&r);
    }
    if (unlabeled) *unlabeled = missing;

    std::vector<Trajectory> out;
    for (auto& [key, rs] : grouped) {
        std::stable_sort(rs.begin(), rs.end(),
                         [](const auto* a, const auto* b) { return a->repetition < b->repetition; });
        Trajectory t{key.first, key.second, rs.front()->model_class, {}};
        for (const auto* r : rs) t.labels.push_back(r->school_by_classifier.at(tag));
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<int> canonical_partition(std::span<const int> labels)
{
    std::unordered_map<int, int> code;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(code.emplace(l, static_cast<int>(code.size())).first->second);
    return out;
}

struct Contingency {
    std::vector<double> row_sums;
    std::vector<double> col_sums;
    std::map<std::pair<int, int>, double> cells;
    double n = 0.0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b)
{
    const auto ca = canonical_partition(a);
    const auto cb = canonical_partition(b);
    Contingency c;
    c.n = static_cast<double>(a.size());
    c.row_sums.assign(static_cast<std::size_t>(*std::max_element(ca.begin(), ca.end()) + 1), 0.0);
    c.col_sums.assign(static_cast<std::size_t>(*std::max_element(cb.begin(), cb.end()) + 1), 0.0);
    for (std::size_t i = 0; i < ca.size(); ++i) {
        c.row_sums[static_cast<std::size_t>(ca[i])] += 1.0;
        c.col_sums[static_cast<std::size_t>(cb[i])] += 1.0;
        c.cells[{ca[i], cb[i]}] += 1.0;
    }
    return c;
}

double entropy_of_counts(const std::vector<double>& counts, double n)
{
    double h = 0.0;
    for (double c : counts)
        if (c > 0.0) h -= (c / n) * std::log(c / n);
    return h;
}

void check_pair(std::span<const int> a, std::span<const int> b)
{
    if (a.size() != b.size())
        throw ArgumentError("label sequences differ in length: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
    if (a.empty()) throw ArgumentError("label sequences are empty");
}

}  // namespace

// ---------------------------------------------------------------------------

FractionTable alignment_fractions(const std::vector<ClassifiedResponse>& records, GroupBy group_by,
                                  const std::string& classifier)
{
    if (records.empty()) throw ArgumentError("alignment_fractions needs at least one record");
    const std::string tag = resolve_classifier(records, classifier);

    std::map<std::string, std::pair<std::size_t, std::array<std::size_t, kNumSchools>>> counts;
    for (const auto& r : records) {
        const std::string key = group_by == GroupBy::Model ? r.model_tag : to_string(r.model_class);
        auto& entry = counts[key];
        auto it = r.school_by_classifier.find(tag);
        if (it == r.school_by_classifier.end()) continue;
        ++entry.first;
        ++entry.second[it->second];
    }

    FractionTable table;
    for (const auto& [group, entry] : counts) {
        if (entry.first == 0) {
            table.warnings.push_back("group '" + group + "' has no '" + tag + "' labels; omitted");
            continue;
        }
        SchoolFractions f{};
        for (std::size_t s = 0; s < kNumSchools; ++s)
            f[s] = static_cast<double>(entry.second[s]) / static_cast<double>(entry.first);
        table.groups.push_back(group);
        table.counts.push_back(entry.first);
        table.fractions.push_back(f);
    }
    return table;
}

// ---------------------------------------------------------------------------

double consistency_percent(std::span<const std::size_t> labels)
{
    if (labels.size() < 2) throw ArgumentError("consistency needs at least 2 repetitions");
    std::map<std::size_t, std::size_t> freq;
    std::size_t modal = 0;
    for (auto l : labels) modal = std::max(modal, ++freq[l]);
    return 100.0 * static_cast<double>(modal - 1) / static_cast<double>(labels.size() - 1);
}

ConsistencyReport consistency(const std::vector<ClassifiedResponse>& records, const std::string& classifier,
                              const BootstrapOptions& bootstrap)
{
    if (records.empty()) throw ArgumentError("consistency needs at least one record");
    if (!(bootstrap.level > 0.0 && bootstrap.level < 1.0)) throw ArgumentError("bootstrap level must be in (0, 1)");
    const std::string tag = resolve_classifier(records, classifier);
    const double lo_q = 50.0 * (1.0 - bootstrap.level);
    const double hi_q = 100.0 - lo_q;

    ConsistencyReport report;
    std::size_t unlabeled = 0;
    const auto trajs = trajectories(records, tag, &unlabeled);
    if (unlabeled) report.warnings.push_back(std::to_string(unlabeled) + " record(s) lack a '" + tag + "' label");

    std::map<std::string, std::vector<double>> per_model;
    std::uint64_t stream = 0;
    for (const auto& t : trajs) {
        ConsistencyRow row{t.model_tag, t.dilemma_id, t.labels.size(), std::nullopt, std::nullopt, std::nullopt};
        ++stream;
        if (t.labels.size() < 2) {
            report.warnings.push_back("(" + t.model_tag + ", " + t.dilemma_id + ") has a single repetition");
            report.rows.push_back(row);
            continue;
        }
        row.value = consistency_percent(t.labels);
        if (bootstrap.resamples > 0) {
            SplitMix64 rng(derive_seed(bootstrap.seed, stream));
            std::vector<double> boot(bootstrap.resamples);
            std::vector<std::size_t> resample(t.labels.size());
            for (auto& b : boot) {
                for (auto& x : resample) x = t.labels[rng.below(t.labels.size())];
                b = consistency_percent(resample);
            }
            row.ci_low = percentile(boot, lo_q);
            row.ci_high = percentile(std::move(boot), hi_q);
        }
        per_model[t.model_tag].push_back(*row.value);
        report.rows.push_back(row);
    }

    std::uint64_t model_stream = 0x4D4F44454CULL;
    for (const auto& [model, values] : per_model) {
        ModelConsistency mc;
        mc.model_tag = model;
        mc.dilemmas = values.size();
        mc.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        mc.ci_low = mc.ci_high = mc.mean;
        if (bootstrap.resamples > 0 && values.size() > 1) {
            SplitMix64 rng(derive_seed(bootstrap.seed, ++model_stream));
            std::vector<double> boot(bootstrap.resamples);
            for (auto& b : boot) {
                double sum = 0.0;
                for (std::size_t k = 0; k < values.size(); ++k) sum += values[rng.below(values.size())];
                b = sum / static_cast<double>(values.size());
            }
            mc.ci_low = percentile(boot, lo_q);
            mc.ci_high = percentile(std::move(boot), hi_q);
        }
        report.models.push_back(mc);
    }
    return report;
}

// ---------------------------------------------------------------------------

std::vector<int> encode_labels(const std::vector<std::string>& labels)
{
    std::unordered_map<std::string, int> code;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(code.emplace(l, static_cast<int>(code.size())).first->second);
    return out;
}

double entropy(std::span<const int> labels)
{
    if (labels.empty()) return 0.0;
    const auto c = contingency(labels, labels);
    return entropy_of_counts(c.row_sums, c.n);
}

double mutual_information(std::span<const int> a, std::span<const int> b)
{
    check_pair(a, b);
    const auto c = contingency(a, b);
    double mi = 0.0;
    for (const auto& [cell, nij] : c.cells) {
        const double ai = c.row_sums[static_cast<std::size_t>(cell.first)];
        const double bj = c.col_sums[static_cast<std::size_t>(cell.second)];
        mi += (nij / c.n) * std::log(c.n * nij / (ai * bj));
    }
    return std::max(mi, 0.0);
}

double expected_mutual_information(std::span<const int> a, std::span<const int> b)
{
    check_pair(a, b);
    const auto c = contingency(a, b);
    const double n = c.n;
    const double lg_n = std::lgamma(n + 1.0);
    double emi = 0.0;
    for (double ai : c.row_sums) {
        for (double bj : c.col_sums) {
            const double lo = std::max(1.0, ai + bj - n);
            const double hi = std::min(ai, bj);
            const double fixed = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(n - ai + 1.0) +
                                 std::lgamma(n - bj + 1.0) - lg_n;
            for (double nij = lo; nij <= hi; nij += 1.0) {
                const double log_p = fixed - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                                     std::lgamma(bj - nij + 1.0) - std::lgamma(n - ai - bj + nij + 1.0);
                emi += (nij / n) * std::log(n * nij / (ai * bj)) * std::exp(log_p);
            }
        }
    }
    return emi;
}

double adjusted_mutual_information(std::span<const int> a, std::span<const int> b)
{
    check_pair(a, b);
    const double mi = mutual_information(a, b);
    const double emi = expected_mutual_information(a, b);
    const double norm = 0.5 * (entropy(a) + entropy(b));
    const double denom = norm - emi;
    if (std::abs(denom) < 1e-12) return canonical_partition(a) == canonical_partition(b) ? 1.0 : 0.0;
    return (mi - emi) / denom;
}

AmiReport ami_agreement(std::span<const int> a, std::span<const int> b, std::size_t n_surrogates, std::uint64_t seed)
{
    check_pair(a, b);
    if (a.size() < 2) throw ArgumentError("AMI needs at least 2 labeled items");
    if (n_surrogates < 100) throw ArgumentError("AMI needs at least 100 surrogates");

    AmiReport r;
    r.mutual_information = mutual_information(a, b);
    r.expected_mutual_information = expected_mutual_information(a, b);
    r.entropy_a = entropy(a);
    r.entropy_b = entropy(b);
    r.ami = adjusted_mutual_information(a, b);
    r.n_surrogates = n_surrogates;

    SplitMix64 rng(seed);
    std::vector<int> shuffled(b.begin(), b.end());
    r.surrogates.reserve(n_surrogates);
    for (std::size_t k = 0; k < n_surrogates; ++k) {
        rng.shuffle(std::span<int>(shuffled));
        r.surrogates.push_back(adjusted_mutual_information(a, shuffled));
    }
    r.surrogate_mean =
        std::accumulate(r.surrogates.begin(), r.surrogates.end(), 0.0) / static_cast<double>(n_surrogates);
    r.surrogate_p01 = percentile(r.surrogates, 1.0);
    r.surrogate_p99 = percentile(r.surrogates, 99.0);
    return r;
}

// ---------------------------------------------------------------------------

TransitionReport transition_matrix(const std::vector<ClassifiedResponse>& records, ModelClass group,
                                   const std::string& classifier, const TransitionOptions& options)
{
    const std::string tag = resolve_classifier(records, classifier);
    TransitionReport r;
    r.counts = Eigen::MatrixXd::Zero(kNumSchools, kNumSchools);
    for (const auto& t : trajectories(records, tag)) {
        if (t.model_class != group || t.labels.size() < 2) continue;
        ++r.trajectories;
        for (std::size_t k = 1; k < t.labels.size(); ++k)
            r.counts(static_cast<Eigen::Index>(t.labels[k - 1]), static_cast<Eigen::Index>(t.labels[k])) += 1.0;
    }
    if (r.trajectories == 0)
        throw ArgumentError("no " + to_string(group) + " trajectories with at least 2 repetitions");

    r.probabilities = Eigen::MatrixXd::Zero(kNumSchools, kNumSchools);
    r.empty_row.assign(kNumSchools, false);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(kNumSchools); ++i) {
        const double total = r.counts.row(i).sum();
        if (total == 0.0) {
            r.empty_row[static_cast<std::size_t>(i)] = true;
            r.probabilities.row(i).setConstant(1.0 / static_cast<double>(kNumSchools));
            continue;
        }
        r.probabilities.row(i) = r.counts.row(i) / total;
        const double self = r.probabilities(i, i);
        if (self > options.absorbing_threshold) r.absorbing.push_back(static_cast<std::size_t>(i));
        if (self < options.bridging_threshold) r.bridging.push_back(static_cast<std::size_t>(i));
    }
    return r;
}

Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& obs)
{
    if (obs.rows() < 1) throw ArgumentError("covariance needs observations");
    const Eigen::RowVectorXd mean = obs.colwise().mean();
    const Eigen::MatrixXd centered = obs.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(obs.rows());
    // Symmetrize exactly; the product is symmetric up to summation order only.
    return 0.5 * (cov + cov.transpose());
}

CovarianceReport covariance_matrix(const std::vector<ClassifiedResponse>& records, ModelClass group,
                                   const std::string& classifier)
{
    const std::string tag = resolve_classifier(records, classifier);
    std::vector<SchoolFractions> rows;
    for (const auto& t : trajectories(records, tag)) {
        if (t.model_class != group || t.labels.empty()) continue;
        SchoolFractions f{};
        for (auto l : t.labels) f[l] += 1.0;
        for (auto& v : f) v /= static_cast<double>(t.labels.size());
        rows.push_back(f);
    }
    if (rows.size() < 2)
        throw ArgumentError("covariance needs at least 2 " + to_string(group) + " observations, got " +
                            std::to_string(rows.size()));
    Eigen::MatrixXd obs(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kNumSchools));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t s = 0; s < kNumSchools; ++s)
            obs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = rows[i][s];
    return CovarianceReport{population_covariance(obs), rows.size()};
}

}  // namespace sara
