#include "sara/steering.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>

#include "sara/errors.hpp"
#include "sara/rng.hpp"

namespace sara {

std::string to_string(Method m)
{
    return m == Method::SARA ? "SARA" : "ActAdd";
}

Method parse_method(std::string_view name)
{
    std::string key;
    for (char c : name) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (key == "sara") return Method::SARA;
    if (key == "actadd") return Method::ActAdd;
    throw ArgumentError("unknown steering method: " + std::string(name));
}

SteeringResult sara_steer(const SteeringTriple& triple)
{
    const Eigen::Index n_comp = choose_ncomp(triple);
    const auto prompt_r = svd_reduce(triple.prompt, n_comp);
    const auto align_r = svd_reduce(triple.align, n_comp);
    const auto repel_r = svd_reduce(triple.repel, n_comp);

    auto s_align = rowwise_cosine(prompt_r, align_r);
    auto s_repel = rowwise_cosine(prompt_r, repel_r);
    VectorD lambda = s_align.values - s_repel.values;

    const MatrixF& a3 = triple.prompt.data();
    MatrixF steered(a3.rows(), a3.cols());
    for (Eigen::Index j = 0; j < a3.rows(); ++j) {
        const double factor = 1.0 + lambda(j);
        for (Eigen::Index t = 0; t < a3.cols(); ++t)
            steered(j, t) = static_cast<float>(static_cast<double>(a3(j, t)) * factor);
    }

    return SteeringResult{
        ActivationMatrix(std::move(steered), triple.prompt.layer(), triple.prompt.model_tag(),
                         triple.prompt.prompt_tag()),
        std::move(lambda), std::move(s_align), std::move(s_repel), Method::SARA, n_comp, std::nullopt};
}

MatrixD align_tokens(const MatrixF& m, Eigen::Index n_tokens)
{
    MatrixD out = MatrixD::Zero(m.rows(), n_tokens);
    const Eigen::Index keep = std::min(n_tokens, m.cols());
    out.leftCols(keep) = m.leftCols(keep).cast<double>();
    return out;
}

SteeringResult actadd_steer(const ActivationMatrix& prompt, const ActAddSpec& spec)
{
    if (spec.target.n_neurons() != prompt.n_neurons() || spec.away.n_neurons() != prompt.n_neurons())
        throw ArgumentError("ActAdd target/away neuron count does not match the prompt");
    if (!std::isfinite(spec.injection_coefficient)) throw ArgumentError("injection coefficient must be finite");

    const Eigen::Index n_tokens = prompt.n_tokens();
    const MatrixD delta =
        spec.injection_coefficient * (align_tokens(spec.target.data(), n_tokens) - align_tokens(spec.away.data(), n_tokens));

    MatrixF steered = (prompt.to_double() + delta).cast<float>();
    VectorD lambda = delta.rowwise().mean();

    SimilarityVector empty;
    empty.values = VectorD::Zero(prompt.n_neurons());
    empty.undefined.assign(static_cast<std::size_t>(prompt.n_neurons()), true);

    return SteeringResult{ActivationMatrix(std::move(steered), prompt.layer(), prompt.model_tag(), prompt.prompt_tag()),
                          std::move(lambda),
                          empty,
                          empty,
                          Method::ActAdd,
                          0,
                          delta.cast<float>()};
}

// ---------------------------------------------------------------------------

SelectivityReport steering_selectivity(const std::vector<ClassifiedResponse>& records, const SchoolSet& schools,
                                       const std::string& classifier, const DirectionTargets& targets)
{
    if (records.empty()) throw ArgumentError("steering_selectivity needs at least one record");
    const std::string tag = classifier.empty() ? default_classifier(records) : classifier;

    std::vector<bool> kantian(schools.size(), false), utilitarian(schools.size(), false);
    for (const auto& s : targets.kantian) kantian[schools.index(s)] = true;
    for (const auto& s : targets.utilitarian) utilitarian[schools.index(s)] = true;

    SelectivityReport report;
    struct Counts {
        std::size_t n = 0, k = 0, u = 0;
    };
    std::map<SteeringDirection, Counts> counts;
    std::size_t skipped_direction = 0, skipped_label = 0;
    for (const auto& r : records) {
        if (!r.steering_direction) {
            ++skipped_direction;
            continue;
        }
        auto it = r.school_by_classifier.find(tag);
        if (it == r.school_by_classifier.end()) {
            ++skipped_label;
            continue;
        }
        auto& c = counts[*r.steering_direction];
        ++c.n;
        if (kantian[it->second]) ++c.k;
        else if (utilitarian[it->second]) ++c.u;
    }
    if (skipped_direction)
        report.warnings.push_back(std::to_string(skipped_direction) + " record(s) without steering_direction skipped");
    if (skipped_label)
        report.warnings.push_back(std::to_string(skipped_label) + " record(s) without a '" + tag + "' label skipped");
    if (counts.empty()) throw ArgumentError("no steered records carry a usable label");

    for (const auto& [dir, c] : counts) {
        SelectivityRow row;
        row.direction = dir;
        row.n = c.n;
        const double n = static_cast<double>(c.n);
        row.kantian_share = static_cast<double>(c.k) / n;
        row.utilitarian_share = static_cast<double>(c.u) / n;
        row.other_share = static_cast<double>(c.n - c.k - c.u) / n;
        if (dir == SteeringDirection::Kantian) {
            row.on_target = row.kantian_share;
            row.spillover = row.utilitarian_share;
        } else if (dir == SteeringDirection::Utilitarian) {
            row.on_target = row.utilitarian_share;
            row.spillover = row.kantian_share;
        }
        report.rows.push_back(row);
    }
    return report;
}

std::vector<MethodDeltaRow> method_delta_table(const SelectivityReport& sara, const SelectivityReport& actadd)
{
    std::vector<MethodDeltaRow> out;
    for (auto dir : {SteeringDirection::Kantian, SteeringDirection::Utilitarian}) {
        auto find = [dir](const SelectivityReport& r) -> const SelectivityRow* {
            for (const auto& row : r.rows)
                if (row.direction == dir) return &row;
            return nullptr;
        };
        const auto* s = find(sara);
        const auto* a = find(actadd);
        if (!s || !a) continue;
        out.push_back({dir, *s->on_target, *a->on_target, *s->spillover, *a->spillover});
    }
    return out;
}

// ---------------------------------------------------------------------------

ActivationSelectivity activation_selectivity(const ActivationMatrix& prompt, const ActivationMatrix& steered,
                                             const std::vector<int>& row_roles)
{
    if (prompt.n_neurons() != steered.n_neurons() || prompt.n_tokens() != steered.n_tokens())
        throw ArgumentError("prompt and steered shapes differ");
    if (static_cast<Eigen::Index>(row_roles.size()) != prompt.n_neurons())
        throw ArgumentError("row_roles length must equal n_neurons");

    double on = 0.0, spill = 0.0, repel = 0.0;
    std::size_t n_on = 0, n_off = 0, n_repel = 0;
    for (Eigen::Index j = 0; j < prompt.n_neurons(); ++j) {
        const double base = prompt.data().row(j).cast<double>().norm();
        if (base == 0.0) continue;
        const double gain = steered.data().row(j).cast<double>().norm() / base - 1.0;
        const int role = row_roles[static_cast<std::size_t>(j)];
        if (role == 1) {
            on += gain;
            ++n_on;
        } else {
            spill += std::max(gain, 0.0);
            ++n_off;
            if (role == 2) {
                repel += gain;
                ++n_repel;
            }
        }
    }
    ActivationSelectivity out;
    if (n_on) out.on_target_gain = on / static_cast<double>(n_on);
    if (n_off) out.spillover = spill / static_cast<double>(n_off);
    if (n_repel) out.repel_gain = repel / static_cast<double>(n_repel);
    return out;
}

SyntheticTriple make_synthetic_triple(std::uint64_t seed, Eigen::Index group_size, Eigen::Index n_tokens,
                                      double noise)
{
    if (group_size < 1 || n_tokens < 3) throw ArgumentError("synthetic triple needs group_size >= 1, n_tokens >= 3");
    SplitMix64 rng(seed);
    const Eigen::Index n = 3 * group_size;

    // Orthonormal token patterns w0, w1, w2 via Householder QR of a Gaussian block.
    MatrixD g(n_tokens, 3);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const MatrixD w = Eigen::HouseholderQR<MatrixD>(g).householderQ() * MatrixD::Identity(n_tokens, 3);

    // Positive unit loadings per group: 0 = target, 1 = repel-shared, 2 = filler.
    std::array<VectorD, 3> load;
    for (Eigen::Index grp = 0; grp < 3; ++grp) {
        load[grp] = VectorD::Zero(n);
        for (Eigen::Index i = 0; i < group_size; ++i) load[grp](grp * group_size + i) = 0.5 + rng.uniform();
        load[grp].normalize();
    }

    // rank_of[g] = which strength (0 -> 3, 1 -> 2, 2 -> 1) group g loads on.
    auto build = [&](std::array<int, 3> rank_of) {
        MatrixD m = MatrixD::Zero(n, n_tokens);
        for (int grp = 0; grp < 3; ++grp) {
            const int r = rank_of[static_cast<std::size_t>(grp)];
            m += (3.0 - r) * load[static_cast<std::size_t>(grp)] * w.col(r).transpose();
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += noise * rng.normal();
        return MatrixF(m.cast<float>());
    };

    // Prompt: target on rank 0, repel-shared on rank 1, filler on rank 2.
    // Align shares rank 0 with the target group only; repel shares rank 1
    // with the repel group only.
    MatrixF prompt = build({0, 1, 2});
    MatrixF align = build({0, 2, 1});
    MatrixF repel = build({2, 1, 0});

    std::vector<int> roles(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < group_size; ++i) {
        roles[static_cast<std::size_t>(i)] = 1;
        roles[static_cast<std::size_t>(group_size + i)] = 2;
    }
    return SyntheticTriple{SteeringTriple{ActivationMatrix(std::move(prompt), 0, "synthetic", "prompt"),
                                          ActivationMatrix(std::move(align), 0, "synthetic", "align"),
                                          ActivationMatrix(std::move(repel), 0, "synthetic", "repel")},
                           std::move(roles)};
}

std::vector<SyntheticComparisonRow> synthetic_method_comparison(std::size_t members, std::uint64_t seed)
{
    if (members == 0) throw ArgumentError("synthetic comparison needs at least one ensemble member");

    std::vector<SyntheticComparisonRow> rows;
    for (auto dir : {SteeringDirection::Kantian, SteeringDirection::Utilitarian}) {
        for (auto method : {Method::SARA, Method::ActAdd}) {
            SyntheticComparisonRow row{dir, method, {}};
            for (std::size_t k = 0; k < members; ++k) {
                auto member = make_synthetic_triple(derive_seed(seed, k));
                auto triple = member.triple;
                auto roles = member.row_roles;
                // The Utilitarian direction attracts what Kantian repels.
                if (dir == SteeringDirection::Utilitarian) {
                    std::swap(triple.align, triple.repel);
                    for (auto& r : roles) r = r == 1 ? 2 : (r == 2 ? 1 : 0);
                }
                const SteeringResult res =
                    method == Method::SARA ? sara_steer(triple)
                                           : actadd_steer(triple.prompt, ActAddSpec{triple.align, triple.repel, 1.0});
                const auto sel = activation_selectivity(triple.prompt, res.steered, roles);
                row.mean.on_target_gain += sel.on_target_gain;
                row.mean.spillover += sel.spillover;
                row.mean.repel_gain += sel.repel_gain;
            }
            const double n = static_cast<double>(members);
            row.mean.on_target_gain /= n;
            row.mean.spillover /= n;
            row.mean.repel_gain /= n;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace sara
