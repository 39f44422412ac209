#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "sara/analysis/mfq.hpp"
#include "sara/analysis/profiles.hpp"
#include "sara/analysis/records.hpp"
#include "sara/analysis/stats.hpp"
#include "sara/io.hpp"
#include "sara/steering.hpp"
#include "sara/toylm.hpp"

using namespace sara;

#ifndef SARA_DATA_DIR
#error "SARA_DATA_DIR must point at the data directory"
#endif

namespace {

const std::filesystem::path kData = SARA_DATA_DIR;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

SteeringTriple random_triple(SplitMix64& rng, Eigen::Index neurons)
{
    auto tokens = [&] { return static_cast<Eigen::Index>(1 + rng.below(9)); };
    return SteeringTriple{ActivationMatrix(oracle::random_matrix_f(rng, neurons, tokens())),
                          ActivationMatrix(oracle::random_matrix_f(rng, neurons, tokens())),
                          ActivationMatrix(oracle::random_matrix_f(rng, neurons, tokens()))};
}

MatrixF mat3x2(float a, float b, float c, float d, float e, float f)
{
    MatrixF m(3, 2);
    m << a, b, c, d, e, f;
    return m;
}

std::string trim(std::string s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

ClassifiedResponse rec(const std::string& model, ModelClass cls, const std::string& dilemma, int rep,
                       std::size_t school, std::optional<SteeringDirection> dir = std::nullopt)
{
    ClassifiedResponse r;
    r.model_tag = model;
    r.model_class = cls;
    r.dilemma_id = dilemma;
    r.repetition = rep;
    r.school_by_classifier["c1"] = school;
    r.steering_direction = dir;
    return r;
}

// ---------------------------------------------------------------------------

Outcome sara_noop()
{
    const auto t0 = Clock::now();
    SplitMix64 rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        auto t = random_triple(rng, static_cast<Eigen::Index>(1 + rng.below(64)));
        t.repel = t.align;
        const auto res = sara_steer(t);
        const MatrixD diff = res.steered.to_double() - t.prompt.to_double();
        worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 10.0, "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome sara_antisymmetry()
{
    SplitMix64 rng(1002);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto t = random_triple(rng, static_cast<Eigen::Index>(1 + rng.below(32)));
        const auto fwd = sara_steer(t);
        std::swap(t.align, t.repel);
        const auto rev = sara_steer(t);
        for (Eigen::Index j = 0; j < fwd.lambda.size(); ++j)
            if (fwd.lambda(j) != -rev.lambda(j)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatching entries over 100 triples"};
}

Outcome lambda_bounds()
{
    SplitMix64 rng(1003);
    double lo = 0.0, hi = 0.0;
    std::size_t errors = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        try {
            const auto res = sara_steer(random_triple(rng, static_cast<Eigen::Index>(1 + rng.below(16))));
            lo = std::min(lo, res.lambda.minCoeff());
            hi = std::max(hi, res.lambda.maxCoeff());
        } catch (const std::exception&) {
            ++errors;
        }
    }
    return {errors == 0 && lo >= -2.0 && hi <= 2.0,
            "range [" + fmt("%.6f", lo) + ", " + fmt("%.6f", hi) + "], " + std::to_string(errors) + " exceptions"};
}

Outcome svd_oracle()
{
    SplitMix64 rng(1004);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t rows = 1 + rng.below(16), cols = 1 + rng.below(16);
        const auto a = oracle::random_mat(rng, rows, cols);
        MatrixD m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j];
        const auto k = static_cast<Eigen::Index>(std::min(rows, cols));
        const auto r = svd_reduce(m, k);
        const auto sv = oracle::jacobi_singular_values(a);
        for (Eigen::Index i = 0; i < k; ++i)
            worst = std::max(worst, std::abs(r.singular_values(i) - sv[static_cast<std::size_t>(i)]));
    }
    return {worst <= 1e-6, "max |sigma - oracle| " + fmt("%.3g", worst)};
}

Outcome golden_fixture()
{
    const SteeringTriple t{ActivationMatrix(mat3x2(3, 0, 0, 2, 0, 0)), ActivationMatrix(mat3x2(4, 0, 3, 0, 0, 1)),
                           ActivationMatrix(mat3x2(0, 1, 0, 1, 5, 0))};
    const auto res = sara_steer(t);
    const bool lambda_ok = res.lambda(0) == 1.0 && res.lambda(1) == -1.0 && res.lambda(2) == 0.0;
    const bool steered_ok = res.steered.data() == mat3x2(6, 0, 0, 0, 0, 0);
    return {lambda_ok && steered_ok, "lambda = (" + fmt("%g", res.lambda(0)) + ", " + fmt("%g", res.lambda(1)) +
                                         ", " + fmt("%g", res.lambda(2)) + ")"};
}

Outcome layer_grouping()
{
    const auto lm = ToyLm::init(ToyLmConfig{});
    SteeringPrompts prompts{trim(io::read_file(kData / "prompts" / "criminal_father.txt")),
                            trim(io::read_file(kData / "prompts" / "kantian.txt")),
                            trim(io::read_file(kData / "prompts" / "utilitarian.txt"))};
    SweepOptions opt;
    opt.max_tokens = 1;
    opt.samples = 1;
    const auto report = layer_sweep(lm, prompts, opt);
    const auto doc = to_json(report);
    bool ok = validate_sweep_report(doc).empty() && report.n_layers == 18 && report.groups.size() == 3;
    const int expect[3][2] = {{0, 5}, {6, 11}, {12, 17}};
    for (std::size_t g = 0; ok && g < 3; ++g)
        ok = report.groups[g].first == expect[g][0] && report.groups[g].last == expect[g][1];
    for (const auto& row : report.rows) {
        const int g = row.layer / 6;
        ok = ok && static_cast<int>(row.group) == g;
    }
    std::set<int> layers;
    for (const auto& row : report.rows) layers.insert(row.layer);
    ok = ok && layers.size() == 18;
    return {ok, "groups 0-5 / 6-11 / 12-17 over " + std::to_string(report.rows.size()) + " rows"};
}

Outcome method_comparison()
{
    const auto s = SchoolSet::defaults();
    using D = SteeringDirection;
    const auto deo = s.index("Deontology"), act = s.index("Act Utilitarianism"), rule = s.index("Rule Utilitarianism"),
               vir = s.index("Virtue Ethics");
    // SARA: K = D D D V, U = A A R D. ActAdd: K = D A A V, U = A D D V.
    auto records = [&](std::vector<std::size_t> k, std::vector<std::size_t> u) {
        std::vector<ClassifiedResponse> r;
        for (std::size_t i = 0; i < k.size(); ++i) r.push_back(rec("m", ModelClass::Open, "d", int(i), k[i], D::Kantian));
        for (std::size_t i = 0; i < u.size(); ++i)
            r.push_back(rec("m", ModelClass::Open, "d", int(i), u[i], D::Utilitarian));
        return r;
    };
    const auto sara = steering_selectivity(records({deo, deo, deo, vir}, {act, act, rule, deo}), s);
    const auto actadd = steering_selectivity(records({deo, act, act, vir}, {act, deo, deo, vir}), s);
    const auto delta = method_delta_table(sara, actadd);
    bool ok = delta.size() == 2;
    for (const auto& d : delta) {
        const double on = d.direction == D::Kantian ? 0.75 - 0.25 : 0.75 - 0.25;
        const double sp = d.direction == D::Kantian ? 0.0 - 0.5 : 0.25 - 0.5;
        ok = ok && std::abs(d.on_target_delta() - on) < 1e-15 && std::abs(d.spillover_delta() - sp) < 1e-15;
        std::printf("    delta %-11s on-target %+.3f spillover %+.3f\n", to_string(d.direction).c_str(),
                    d.on_target_delta(), d.spillover_delta());
    }

    const auto rows = synthetic_method_comparison(50, 2024);
    std::size_t sara_rows = 0;
    for (const auto& r : rows) {
        std::printf("    synthetic %-6s %-11s on-target gain %+.4f spillover %.4f repel gain %+.4f\n",
                    to_string(r.method).c_str(), to_string(r.direction).c_str(), r.mean.on_target_gain,
                    r.mean.spillover, r.mean.repel_gain);
        if (r.method != Method::SARA) continue;
        ++sara_rows;
        ok = ok && r.mean.on_target_gain > r.mean.spillover;
    }
    ok = ok && sara_rows == 2;
    return {ok, "delta table exact; SARA on-target gain exceeds spillover in both directions"};
}

Outcome consistency_criterion()
{
    bool ok = consistency_percent(std::vector<std::size_t>{2, 2, 2, 2, 2}) == 100.0 &&
              consistency_percent(std::vector<std::size_t>{0, 1, 2, 3, 4}) == 0.0;
    // Every multiset of 5 labels over 8 schools.
    std::map<std::size_t, std::set<double>> by_modal;
    std::size_t count = 0;
    std::vector<std::size_t> l(5);
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t pos, std::size_t from) {
        if (pos == 5) {
            std::size_t modal = 0;
            for (std::size_t k = 0; k < 8; ++k)
                modal = std::max<std::size_t>(modal, static_cast<std::size_t>(std::count(l.begin(), l.end(), k)));
            by_modal[modal].insert(consistency_percent(l));
            ++count;
            return;
        }
        for (std::size_t k = from; k < 8; ++k) {
            l[pos] = k;
            walk(pos + 1, k);
        }
    };
    walk(0, 0);
    double prev = -1.0;
    for (const auto& [modal, values] : by_modal) {
        ok = ok && values.size() == 1 && *values.begin() > prev;
        prev = *values.begin();
    }
    return {ok && count == 792, std::to_string(count) + " multisets, strictly increasing in modal count"};
}

Outcome ami_criterion()
{
    SplitMix64 rng(1005);
    double worst_identity = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> a(2 + rng.below(60));
        for (auto& x : a) x = static_cast<int>(rng.below(1 + rng.below(8)));
        worst_identity = std::max(worst_identity, std::abs(adjusted_mutual_information(a, a) - 1.0));
    }
    std::vector<int> a(56), b(56);
    for (auto& x : a) x = static_cast<int>(rng.below(8));
    for (auto& x : b) x = static_cast<int>(rng.below(8));
    const auto rep = ami_agreement(a, b, 1000, 7);

    const std::vector<int> fa{1, 1, 2, 2, 3, 3}, fb{1, 1, 2, 3, 3, 2};
    const double fixture_err = std::abs(adjusted_mutual_information(fa, fb) - oracle::brute_ami(fa, fb));
    const bool ok = worst_identity <= 1e-9 && std::abs(rep.surrogate_mean) <= 0.05 && fixture_err <= 1e-9;
    return {ok, "identity err " + fmt("%.2g", worst_identity) + ", surrogate mean " + fmt("%+.4f", rep.surrogate_mean) +
                    ", fixture err " + fmt("%.2g", fixture_err)};
}

Outcome transition_covariance()
{
    SplitMix64 rng(1006);
    double worst_stochastic = 0.0, worst_symmetry = 0.0, worst_rowsum = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ClassifiedResponse> r;
        const auto models = 2 + rng.below(6), dilemmas = 1 + rng.below(7), reps = 2 + rng.below(9);
        for (std::size_t m = 0; m < models; ++m)
            for (std::size_t d = 0; d < dilemmas; ++d)
                for (std::size_t k = 0; k < reps; ++k)
                    r.push_back(rec("m" + std::to_string(m), ModelClass::Open, "d" + std::to_string(d), int(k),
                                    rng.below(8)));
        const auto t = transition_matrix(r, ModelClass::Open);
        for (Eigen::Index i = 0; i < 8; ++i)
            worst_stochastic = std::max(worst_stochastic, std::abs(t.probabilities.row(i).sum() - 1.0));
        const auto c = covariance_matrix(r, ModelClass::Open).covariance;
        worst_symmetry = std::max(worst_symmetry, (c - c.transpose()).cwiseAbs().maxCoeff());
        worst_rowsum = std::max(worst_rowsum, c.rowwise().sum().cwiseAbs().maxCoeff());
    }

    const auto s = SchoolSet::defaults();
    const auto rs = load_records_jsonl(kData / "fixtures" / "transitions_3traj.jsonl", s);
    const auto t = transition_matrix(rs.records, ModelClass::Proprietary);
    const auto D = static_cast<Eigen::Index>(s.index("Deontology"));
    const auto A = static_cast<Eigen::Index>(s.index("Act Utilitarianism"));
    const auto V = static_cast<Eigen::Index>(s.index("Virtue Ethics"));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(8, 8);
    expected(D, D) = 1;
    expected(D, A) = 1;
    expected(A, D) = 1;
    expected(A, A) = 2;
    expected(V, D) = 1;
    expected(D, V) = 1;
    const bool fixture_ok = rs.errors.empty() && t.counts == expected && t.trajectories == 3;
    const bool ok = fixture_ok && worst_stochastic <= 1e-12 && worst_symmetry <= 1e-12 && worst_rowsum <= 1e-12;
    return {ok, "row-sum err " + fmt("%.2g", worst_stochastic) + ", asymmetry " + fmt("%.2g", worst_symmetry) +
                    ", cov row sums " + fmt("%.2g", worst_rowsum) + ", fixture " + (fixture_ok ? "exact" : "wrong")};
}

Outcome bh_criterion()
{
    SplitMix64 rng(1007);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> p(1 + rng.below(20));
        for (auto& x : p) x = rng.uniform() < 0.3 ? rng.uniform() * 0.01 : rng.uniform();
        if (bh_fdr(p, 0.05).rejected != oracle::brute_bh(p, 0.05)) ++mismatches;
    }
    const std::vector<double> worked{0.01, 0.02, 0.03, 0.04, 0.05};
    const auto w = bh_fdr(worked, 0.05);
    const bool all = w.n_rejected == 5 && std::all_of(w.rejected.begin(), w.rejected.end(), [](bool b) { return b; });
    return {mismatches == 0 && all, std::to_string(mismatches) + " mismatches over 1000 vectors; worked example " +
                                        (all ? "all rejected" : "NOT all rejected")};
}

Outcome mfq_criterion()
{
    const auto key = MfqKey::standard();
    std::vector<int> fives(32, 5), zeros(32, 0);
    fives[5] = 0;  // catch items answered sensibly
    zeros[21] = 5;
    const auto s5 = mfq_score("m", 0, fives), s0 = mfq_score("m", 0, zeros);
    bool ok = !s5.catch_flagged && !s0.catch_flagged;
    for (std::size_t f = 0; f < kFoundations; ++f)
        ok = ok && s5.foundation_scores[f] == 5.0 && s0.foundation_scores[f] == 0.0;

    SplitMix64 rng(1008);
    std::size_t perm_failures = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> ans(32);
        for (auto& x : ans) x = static_cast<int>(rng.below(6));
        auto shuffled = ans;
        for (const auto& items : key.items) {
            std::vector<int> vals;
            for (int it : items) vals.push_back(ans[static_cast<std::size_t>(it - 1)]);
            rng.shuffle(std::span<int>(vals));
            for (std::size_t i = 0; i < items.size(); ++i) shuffled[static_cast<std::size_t>(items[i] - 1)] = vals[i];
        }
        if (mfq_score("m", 0, ans).foundation_scores != mfq_score("m", 0, shuffled).foundation_scores) ++perm_failures;
    }

    std::vector<MfqSheet> sheets;
    for (int r = 0; r < 20; ++r) {
        std::vector<int> ans(32);
        for (auto& x : ans) x = static_cast<int>(rng.below(6));
        sheets.push_back(mfq_score("model-x", r, ans));
    }
    const auto back = parse_mfq_csv(to_mfq_csv(sheets));
    bool round_trip = back.errors.empty() && back.sheets.size() == 20;
    for (std::size_t i = 0; round_trip && i < 20; ++i)
        round_trip = back.sheets[i].answers == sheets[i].answers &&
                     back.sheets[i].foundation_scores == sheets[i].foundation_scores &&
                     back.sheets[i].repetition == sheets[i].repetition &&
                     back.sheets[i].catch_flagged == sheets[i].catch_flagged;
    ok = ok && perm_failures == 0 && round_trip;
    return {ok, "anchors 5.0/0.0, " + std::to_string(perm_failures) + " permutation failures, 20-rep round trip " +
                    (round_trip ? "ok" : "broken")};
}

Outcome toy_model()
{
    ToyLmConfig cfg;
    const auto lm = ToyLm::init(cfg);
    const Tokens prompt = to_tokens(trim(io::read_file(kData / "prompts" / "criminal_father.txt")));

    // Zero-lambda patch from a real steering call (align == repel).
    const int layer = 0;
    const auto a3 = lm.capture_activations(prompt, layer);
    const auto a1 = lm.capture_activations(to_tokens(trim(io::read_file(kData / "prompts" / "kantian.txt"))), layer);
    const auto zero = sara_steer(SteeringTriple{a3, a1, a1});
    HookPoint noop{layer, HookMode::Patch, zero, PatchSpan::Continuous};
    const bool identity = (zero.lambda.array() == 0.0).all() &&
                          lm.generate_steered(prompt, noop, 16, 20) == lm.generate(prompt, 16, 20);

    // Large patch: +2 on even neurons, -1 on odd neurons.
    VectorD lambda(cfg.d_model);
    for (Eigen::Index j = 0; j < lambda.size(); ++j) lambda(j) = j % 2 == 0 ? 2.0 : -1.0;
    MatrixF scaled = a3.data();
    for (Eigen::Index j = 0; j < scaled.rows(); ++j) scaled.row(j) *= static_cast<float>(1.0 + lambda(j));
    HookPoint big{layer, HookMode::Patch,
                  SteeringResult{ActivationMatrix(scaled), lambda, {}, {}, Method::SARA, 1, std::nullopt},
                  PatchSpan::Continuous};

    const int n = 200;
    const auto base = lm.generate(prompt, 1, n), steered = lm.generate_steered(prompt, big, 1, n);
    std::map<Token, int> c0, c1;
    for (const auto& s : base) ++c0[s[0]];
    for (const auto& s : steered) ++c1[s[0]];
    std::set<Token> keys;
    for (const auto& [k, _] : c0) keys.insert(k);
    for (const auto& [k, _] : c1) keys.insert(k);
    double counted = 0.0;
    for (Token k : keys) counted += std::abs(c0[k] - c1[k]);
    counted /= 2.0 * n;

    const auto p0 = ToyLm::distribution(lm.next_token_logits(prompt), cfg.temperature);
    const auto p1 = ToyLm::distribution(lm.next_token_logits(prompt, &big), cfg.temperature);
    double exact = 0.0;
    for (std::size_t i = 0; i < p0.size(); ++i) exact += std::abs(p0[i] - p1[i]);
    exact /= 2.0;

    return {identity && counted > 0.05 && exact > 0.05,
            std::string("zero-lambda identity ") + (identity ? "ok" : "broken") + ", first-token TV over 200 samples " +
                fmt("%.4f", counted) + " (exact " + fmt("%.4f", exact) + ")"};
}

}  // namespace

int main()
{
    const auto t0 = Clock::now();
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
        {"sara_noop_200_triples", sara_noop},
        {"sara_swap_antisymmetry", sara_antisymmetry},
        {"lambda_bounds_10000_triples", lambda_bounds},
        {"svd_matches_jacobi_oracle", svd_oracle},
        {"golden_three_neuron_fixture", golden_fixture},
        {"layer_grouping_18_layers", layer_grouping},
        {"method_comparison_harness", method_comparison},
        {"consistency_anchors_and_monotonicity", consistency_criterion},
        {"ami_identity_surrogates_fixture", ami_criterion},
        {"transition_and_covariance", transition_covariance},
        {"bh_fdr_step_up", bh_criterion},
        {"mfq_scoring_and_ingestion", mfq_criterion},
        {"toy_model_end_to_end", toy_model},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto c0 = Clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(c0));
        std::fflush(stdout);
    }
    const double total = seconds_since(t0);
    const bool fast = total < 300.0;
    if (!fast) ++failed;
    std::printf("%s suite_runtime_under_5_minutes: %.2f s\n", fast ? "PASS" : "FAIL", total);
    std::printf("%d of %zu criteria failed\n", failed, criteria.size() + 1);
    return failed == 0 ? 0 : 1;
}
