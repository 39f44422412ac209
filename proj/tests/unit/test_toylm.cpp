#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "sara/errors.hpp"
#include "sara/rng.hpp"
#include "sara/toylm.hpp"

using namespace sara;

namespace {

ToyLmConfig small(std::uint64_t seed = 0)
{
    ToyLmConfig c;
    c.n_layers = 4;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_ctx = 64;
    c.seed = seed;
    return c;
}

SteeringResult scale_patch(const ActivationMatrix& prompt, const VectorD& lambda)
{
    MatrixF st = prompt.data();
    for (Eigen::Index j = 0; j < st.rows(); ++j) st.row(j) *= static_cast<float>(1.0 + lambda(j));
    return SteeringResult{ActivationMatrix(st), lambda, {}, {}, Method::SARA, 1, std::nullopt};
}

Tokens random_prompt(SplitMix64& rng, std::size_t max_len)
{
    Tokens t(1 + rng.below(max_len));
    for (auto& x : t) x = static_cast<Token>(rng.below(kVocabSize));
    return t;
}

}  // namespace

TEST(ToyLm, ConfigValidation)
{
    auto c = small();
    c.n_heads = 3;
    EXPECT_THROW(ToyLm::init(c), ArgumentError);
    c = small();
    c.n_layers = 0;
    EXPECT_THROW(ToyLm::init(c), ArgumentError);
    c = small();
    c.temperature = -1;
    EXPECT_THROW(ToyLm::init(c), ArgumentError);
}

TEST(ToyLm, Determinism)
{
    const auto a = ToyLm::init(small(1));
    const auto b = ToyLm::init(small(1));
    const auto c = ToyLm::init(small(2));
    const Tokens p = to_tokens("hello world");
    EXPECT_EQ(a.next_token_logits(p), b.next_token_logits(p));
    EXPECT_NE(a.next_token_logits(p), c.next_token_logits(p));
}

TEST(ToyLm, GreedyIsPureFunctionOfSeedAndPrompt)
{
    auto cfg = small(3);
    cfg.temperature = 0.0;
    const auto lm = ToyLm::init(cfg);
    const Tokens p = to_tokens("abc");
    const auto g1 = lm.generate(p, 8, 3);
    const auto g2 = ToyLm::init(cfg).generate(p, 8, 3);
    EXPECT_EQ(g1, g2);
    EXPECT_EQ(g1[0], g1[1]);
}

TEST(ToyLm, SamplingReproducibleAndVaried)
{
    const auto lm = ToyLm::init(small(4));
    const Tokens p = to_tokens("prompt");
    const auto a = lm.generate(p, 6, 5);
    EXPECT_EQ(a, lm.generate(p, 6, 5));
    EXPECT_EQ(a.size(), 5u);
    for (const auto& s : a) EXPECT_EQ(s.size(), 6u);
    EXPECT_NE(a[0], a[1]);
}

TEST(ToyLm, KvCacheMatchesFullRecompute)
{
    auto cfg = small(5);
    cfg.temperature = 0.0;
    const auto lm = ToyLm::init(cfg);
    const Tokens p = to_tokens("cache");
    const auto gen = lm.generate(p, 5, 1)[0];
    Tokens seq = p;
    for (Token t : gen) {
        const auto logits = lm.next_token_logits(seq);
        const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
        EXPECT_EQ(best, t);
        seq.push_back(t);
    }
}

TEST(ToyLm, CaptureShapeAndPurity)
{
    const auto lm = ToyLm::init(small(6));
    const Tokens p = to_tokens("shape test");
    const auto a = lm.capture_activations(p, 1);
    EXPECT_EQ(a.n_neurons(), 16);
    EXPECT_EQ(a.n_tokens(), static_cast<Eigen::Index>(p.size()));
    EXPECT_TRUE(a == lm.capture_activations(p, 1));
    EXPECT_FALSE(lm.capture_activations(p, 0).data() == lm.capture_activations(p, 3).data());
    EXPECT_THROW(lm.capture_activations(p, 4), ArgumentError);
    EXPECT_THROW(lm.capture_activations({}, 0), ArgumentError);
}

TEST(ToyLm, TraceInvariants)
{
    const auto lm = ToyLm::init(small(7));
    const Tokens p = to_tokens("attention rows");
    const auto tr = lm.trace(p);
    ASSERT_EQ(tr.residual.size(), 4u);
    for (const auto& layer : tr.attention) {
        ASSERT_EQ(layer.size(), 2u);
        for (const auto& a : layer) {
            for (Eigen::Index i = 0; i < a.rows(); ++i) {
                EXPECT_NEAR(a.row(i).sum(), 1.0f, 1e-5f);
                for (Eigen::Index j = i + 1; j < a.cols(); ++j) EXPECT_EQ(a(i, j), 0.0f);
            }
        }
    }
    const auto dist = ToyLm::distribution(tr.last_logits, 0.8);
    double sum = 0;
    for (double v : dist) {
        EXPECT_GE(v, 0.0);
        sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const auto greedy = ToyLm::distribution(tr.last_logits, 0.0);
    EXPECT_EQ(*std::max_element(greedy.begin(), greedy.end()), 1.0);
}

TEST(ToyLm, CaptureHookIsNoOpOverRandomPrompts)
{
    const auto lm = ToyLm::init(small(8));
    SplitMix64 rng(8);
    for (int i = 0; i < 100; ++i) {
        const Tokens p = random_prompt(rng, 12);
        HookPoint hook{static_cast<int>(rng.below(4)), HookMode::Capture, std::nullopt};
        ASSERT_EQ(lm.generate_steered(p, hook, 3, 1), lm.generate(p, 3, 1));
    }
}

TEST(ToyLm, ZeroLambdaPatchIsNoOp)
{
    const auto lm = ToyLm::init(small(9));
    const Tokens p = to_tokens("zero lambda");
    for (auto span : {PatchSpan::Continuous, PatchSpan::PromptOnly}) {
        const auto prompt = lm.capture_activations(p, 2);
        HookPoint hook{2, HookMode::Patch, scale_patch(prompt, VectorD::Zero(16)), span};
        EXPECT_EQ(lm.generate_steered(p, hook, 8, 4), lm.generate(p, 8, 4));
        EXPECT_EQ(lm.next_token_logits(p, &hook), lm.next_token_logits(p));
    }
}

TEST(ToyLm, PatchChangesLogitsAndValidatesShape)
{
    const auto lm = ToyLm::init(small(10));
    const Tokens p = to_tokens("patched");
    const auto prompt = lm.capture_activations(p, 1);
    VectorD lambda(16);
    for (Eigen::Index j = 0; j < 16; ++j) lambda(j) = j % 2 ? -1.0 : 2.0;
    HookPoint hook{1, HookMode::Patch, scale_patch(prompt, lambda)};
    EXPECT_NE(lm.next_token_logits(p, &hook), lm.next_token_logits(p));

    HookPoint bad{1, HookMode::Patch, scale_patch(ActivationMatrix(MatrixF::Ones(8, 3)), VectorD::Zero(8))};
    EXPECT_THROW(lm.generate_steered(p, bad, 2, 1), ArgumentError);
    HookPoint missing{1, HookMode::Patch, std::nullopt};
    EXPECT_THROW(lm.generate_steered(p, missing, 2, 1), ArgumentError);
    HookPoint out_of_range{7, HookMode::Capture, std::nullopt};
    EXPECT_THROW(lm.generate_steered(p, out_of_range, 2, 1), ArgumentError);
}

TEST(ToyLm, SaveLoadRoundTrip)
{
    const auto lm = ToyLm::init(small(11));
    const auto path = std::filesystem::temp_directory_path() / ("sara_toylm_" + std::to_string(::getpid()) + ".bin");
    lm.save(path);
    const auto back = ToyLm::load(path);
    const Tokens p = to_tokens("weights");
    EXPECT_EQ(back.next_token_logits(p), lm.next_token_logits(p));
    std::filesystem::remove(path);
}

TEST(Tokens, ByteRoundTrip)
{
    const std::string s = "caf\xc3\xa9 ok";
    const auto t = to_tokens(s);
    EXPECT_EQ(t.size(), s.size());
    EXPECT_EQ(to_text(t), s);
}

TEST(LayerGroups, Thirds)
{
    const auto g18 = layer_groups(18);
    EXPECT_EQ(g18[0].first, 0);
    EXPECT_EQ(g18[0].last, 5);
    EXPECT_EQ(g18[1].first, 6);
    EXPECT_EQ(g18[1].last, 11);
    EXPECT_EQ(g18[2].first, 12);
    EXPECT_EQ(g18[2].last, 17);
    const auto g6 = layer_groups(6);
    EXPECT_EQ(g6[1].first, 2);
    EXPECT_EQ(g6[1].last, 3);
    const auto g3 = layer_groups(3);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(g3[static_cast<std::size_t>(i)].first, g3[static_cast<std::size_t>(i)].last);
    const auto g7 = layer_groups(7);
    EXPECT_EQ(g7[2].first, 4);
    EXPECT_EQ(g7[2].last, 6);
    EXPECT_THROW(layer_groups(2), ArgumentError);
    EXPECT_EQ(group_of(14, 18), LayerGroup::Late);
}

TEST(LayerSweep, ReportCountsAndSchema)
{
    auto cfg = small(12);
    cfg.n_layers = 3;
    const auto lm = ToyLm::init(cfg);
    SteeringPrompts prompts{"Should the parent be reported?", "Duties matter.", "Consequences matter."};
    SweepOptions opt;
    opt.max_tokens = 4;
    opt.samples = 2;
    const auto report = layer_sweep(lm, prompts, opt);
    EXPECT_EQ(report.rows.size(), 3u * 2 * 2);
    EXPECT_EQ(report.layers.size(), 3u * 2);
    EXPECT_EQ(report.unsteered.size(), 2u);
    const auto doc = to_json(report);
    EXPECT_TRUE(validate_sweep_report(doc).empty());

    auto broken = doc;
    broken["rows"].erase(broken["rows"].begin());
    EXPECT_FALSE(validate_sweep_report(broken).empty());

    opt.method = Method::ActAdd;
    opt.layers = {1};
    const auto actadd = layer_sweep(lm, prompts, opt);
    EXPECT_EQ(actadd.rows.size(), 1u * 2 * 2);
    opt.layers = {5};
    EXPECT_THROW(layer_sweep(lm, prompts, opt), ArgumentError);
}

TEST(LayerSweep, IdenticalSteeringPromptsLeaveSamplesUnchanged)
{
    const auto lm = ToyLm::init(small(13));
    SteeringPrompts prompts{"dilemma text", "same", "same"};
    SweepOptions opt;
    opt.max_tokens = 5;
    opt.samples = 3;
    const auto report = layer_sweep(lm, prompts, opt);
    for (const auto& row : report.rows) {
        EXPECT_FALSE(row.changed);
        EXPECT_EQ(row.text, report.unsteered[static_cast<std::size_t>(row.sample)]);
    }
}
