#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sara/actmat.hpp"
#include "sara/steering.hpp"

namespace sara {

using Token = std::int32_t;
using Tokens = std::vector<Token>;

inline constexpr int kVocabSize = 256;

/// Byte-level tokenization: one token per UTF-8 byte.
Tokens to_tokens(std::string_view text);
std::string to_text(const Tokens& tokens);

struct ToyLmConfig {
    int n_layers = 18;
    int d_model = 64;
    int n_heads = 4;
    int n_ctx = 256;
    std::uint64_t seed = 0;
    double temperature = 0.8;  // 0 selects greedy decoding

    /// Throws ArgumentError on an invalid configuration.
    void validate() const;
};

enum class HookMode { Capture, Patch };

/// Which positions a patch touches during generation. PromptOnly patches the
/// prompt span; Continuous also rescales every generated position by the
/// same per-neuron factors (additive ActAdd deltas stay on the prompt span).
enum class PatchSpan { PromptOnly, Continuous };

struct HookPoint {
    int layer = 0;
    HookMode mode = HookMode::Capture;
    std::optional<SteeringResult> patch_source;
    PatchSpan span = PatchSpan::Continuous;
};

struct LayerWeights {
    MatrixF ln1_gain, ln1_bias;  // 1 x d
    MatrixF w_qkv, b_qkv;        // d x 3d, 1 x 3d
    MatrixF w_out, b_out;        // d x d, 1 x d
    MatrixF ln2_gain, ln2_bias;  // 1 x d
    MatrixF w_fc, b_fc;          // d x 4d, 1 x 4d
    MatrixF w_proj, b_proj;      // 4d x d, 1 x d
};

struct ToyLmWeights {
    MatrixF token_embedding;     // vocab x d
    MatrixF position_embedding;  // n_ctx x d
    std::vector<LayerWeights> layers;
    MatrixF lnf_gain, lnf_bias;  // 1 x d
    MatrixF w_unembed;           // d x vocab
};

/// Per-layer residual streams and attention probabilities of one forward pass.
struct ForwardTrace {
    std::vector<MatrixF> residual;                // per layer: (n_tokens, d_model), after the block
    std::vector<std::vector<MatrixF>> attention;  // [layer][head]: (n_tokens, n_tokens)
    std::vector<float> last_logits;
};

/// Small pre-norm decoder-only transformer (byte vocabulary, learned
/// positional embeddings, GELU MLP) whose weights are a pure function of the
/// config seed. Immutable after construction; every generation owns its own
/// KV cache, so concurrent use is safe.
class ToyLm {
public:
    /// Draws all weight matrices from N(0, 0.02) with SplitMix64(cfg.seed);
    /// layer-norm gains start at 1 and every bias at 0.
    static ToyLm init(const ToyLmConfig& cfg);

    static ToyLm load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    ToyLm(ToyLmConfig cfg, ToyLmWeights weights);

    const ToyLmConfig& config() const { return cfg_; }
    const ToyLmWeights& weights() const { return w_; }

    /// Residual stream after block `layer`, shaped (d_model, n_tokens).
    ActivationMatrix capture_activations(const Tokens& prompt, int layer, std::string prompt_tag = {}) const;

    /// Next-token logits after `tokens`, optionally through a patch hook.
    std::vector<float> next_token_logits(const Tokens& tokens, const HookPoint* hook = nullptr) const;

    /// softmax(logits / temperature); temperature 0 yields a one-hot argmax.
    static std::vector<double> distribution(const std::vector<float>& logits, double temperature);

    ForwardTrace trace(const Tokens& tokens) const;

    /// `samples` continuations of `prompt`, each up to `max_tokens` long.
    /// Sample i draws from SplitMix64(derive_seed(cfg.seed, i)).
    std::vector<Tokens> generate_steered(const Tokens& prompt, const HookPoint& hook, int max_tokens,
                                         int samples) const;
    std::vector<Tokens> generate(const Tokens& prompt, int max_tokens, int samples) const;

private:
    struct Cache;
    struct Patch;

    Patch make_patch(const HookPoint& hook, std::size_t prompt_len) const;
    MatrixF forward(const Tokens& tokens, int start, Cache& cache, const Patch* patch, int capture_layer,
                    MatrixF* captured, ForwardTrace* trace) const;
    std::vector<float> logits_of(const MatrixF& last_hidden) const;

    ToyLmConfig cfg_;
    ToyLmWeights w_;
};

// ---------------------------------------------------------------------------
// Layer sweep
// ---------------------------------------------------------------------------

enum class LayerGroup { Early, Mid, Late };
std::string to_string(LayerGroup g);

struct LayerGroupRange {
    LayerGroup group;
    int first;
    int last;  // inclusive
};

/// Thirds of the layer stack: floor(n/3) layers each for early and mid, the
/// remainder to late. Throws ArgumentError when n_layers < 3.
std::vector<LayerGroupRange> layer_groups(int n_layers);
LayerGroup group_of(int layer, int n_layers);

struct SteeringPrompts {
    std::string prompt;
    std::string kantian;
    std::string utilitarian;
};

struct SweepOptions {
    Method method = Method::SARA;
    int max_tokens = 32;
    int samples = 5;
    PatchSpan span = PatchSpan::Continuous;
    double injection_coefficient = 1.0;
    std::vector<int> layers;  // empty = every layer
};

struct SweepRow {
    int layer = 0;
    LayerGroup group = LayerGroup::Early;
    SteeringDirection direction = SteeringDirection::Kantian;
    int sample = 0;
    std::string text;
    bool changed = false;  // differs from the unsteered sample with the same index
};

struct SweepLayerSummary {
    int layer = 0;
    SteeringDirection direction = SteeringDirection::Kantian;
    Eigen::Index n_comp = 0;
    double lambda_mean = 0.0;
    double lambda_abs_mean = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double changed_fraction = 0.0;
};

struct SweepGroupSummary {
    LayerGroup group = LayerGroup::Early;
    SteeringDirection direction = SteeringDirection::Kantian;
    int first_layer = 0;
    int last_layer = 0;
    std::size_t n_samples = 0;
    double changed_fraction = 0.0;
    double lambda_abs_mean = 0.0;
};

struct SweepReport {
    int n_layers = 0;
    Method method = Method::SARA;
    int samples = 0;
    int max_tokens = 0;
    double temperature = 0.0;
    std::uint64_t seed = 0;
    std::vector<LayerGroupRange> groups;
    std::vector<std::string> unsteered;
    std::vector<SweepRow> rows;
    std::vector<SweepLayerSummary> layers;
    std::vector<SweepGroupSummary> group_summaries;
};

/// Steers at each selected layer in both directions (Kantian: align with the
/// Kantian prompt and repel the utilitarian one; Utilitarian: the reverse).
SweepReport layer_sweep(const ToyLm& model, const SteeringPrompts& prompts, const SweepOptions& options);

nlohmann::json to_json(const SweepReport& report);
/// Structural self-check of a sweep report document; returns the problems found.
std::vector<std::string> validate_sweep_report(const nlohmann::json& doc);
/// JSON schema describing to_json(SweepReport).
nlohmann::json sweep_report_schema();

}  // namespace sara
