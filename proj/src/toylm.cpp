#include "sara/toylm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "sara/errors.hpp"
#include "sara/io.hpp"
#include "sara/rng.hpp"

namespace sara {

namespace {

constexpr std::string_view kCheckpointMagic = "SALM";
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr float kInitStd = 0.02f;
constexpr float kLayerNormEps = 1e-5f;

MatrixF layer_norm(const MatrixF& x, const MatrixF& gain, const MatrixF& bias)
{
    MatrixF out(x.rows(), x.cols());
    const float inv_d = 1.0f / static_cast<float>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const float mean = x.row(i).sum() * inv_d;
        const float var = (x.row(i).array() - mean).square().sum() * inv_d;
        const float inv_std = 1.0f / std::sqrt(var + kLayerNormEps);
        out.row(i) = ((x.row(i).array() - mean) * inv_std * gain.array() + bias.array()).matrix();
    }
    return out;
}

float gelu(float x)
{
    constexpr float k = 0.7978845608028654f;  // sqrt(2 / pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

MatrixF gaussian(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols)
{
    MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = kInitStd * static_cast<float>(rng.normal());
    return m;
}

void write_blob(io::ByteWriter& w, const MatrixF& m)
{
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(m.data()[i]);
}

MatrixF read_blob(io::ByteReader& r, Eigen::Index rows, Eigen::Index cols)
{
    const auto got_rows = r.u64();
    const auto got_cols = r.u64();
    if (got_rows != static_cast<std::uint64_t>(rows) || got_cols != static_cast<std::uint64_t>(cols))
        throw FormatError("checkpoint blob has shape " + std::to_string(got_rows) + "x" + std::to_string(got_cols) +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = r.f32();
        if (!std::isfinite(m.data()[i])) throw DataError("checkpoint contains non-finite weights");
    }
    return m;
}

template <typename F>
void for_each_weight(ToyLmWeights& w, F&& f)
{
    f(w.token_embedding);
    f(w.position_embedding);
    for (auto& l : w.layers) {
        f(l.ln1_gain), f(l.ln1_bias), f(l.w_qkv), f(l.b_qkv), f(l.w_out), f(l.b_out);
        f(l.ln2_gain), f(l.ln2_bias), f(l.w_fc), f(l.b_fc), f(l.w_proj), f(l.b_proj);
    }
    f(w.lnf_gain);
    f(w.lnf_bias);
    f(w.w_unembed);
}

ToyLmWeights zero_weights(const ToyLmConfig& cfg)
{
    const Eigen::Index d = cfg.d_model;
    ToyLmWeights w;
    w.token_embedding = MatrixF::Zero(kVocabSize, d);
    w.position_embedding = MatrixF::Zero(cfg.n_ctx, d);
    w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& l : w.layers) {
        l.ln1_gain = MatrixF::Ones(1, d);
        l.ln1_bias = MatrixF::Zero(1, d);
        l.w_qkv = MatrixF::Zero(d, 3 * d);
        l.b_qkv = MatrixF::Zero(1, 3 * d);
        l.w_out = MatrixF::Zero(d, d);
        l.b_out = MatrixF::Zero(1, d);
        l.ln2_gain = MatrixF::Ones(1, d);
        l.ln2_bias = MatrixF::Zero(1, d);
        l.w_fc = MatrixF::Zero(d, 4 * d);
        l.b_fc = MatrixF::Zero(1, 4 * d);
        l.w_proj = MatrixF::Zero(4 * d, d);
        l.b_proj = MatrixF::Zero(1, d);
    }
    w.lnf_gain = MatrixF::Ones(1, d);
    w.lnf_bias = MatrixF::Zero(1, d);
    w.w_unembed = MatrixF::Zero(d, kVocabSize);
    return w;
}

Token sample_token(const std::vector<float>& logits, double temperature, SplitMix64& rng)
{
    const auto probs = ToyLm::distribution(logits, temperature);
    if (temperature == 0.0)
        return static_cast<Token>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    const double u = rng.uniform();
    double cum = 0.0;
    Token last_nonzero = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) last_nonzero = static_cast<Token>(i);
        cum += probs[i];
        if (u < cum) return static_cast<Token>(i);
    }
    return last_nonzero;
}

}  // namespace

Tokens to_tokens(std::string_view text)
{
    Tokens out;
    out.reserve(text.size());
    for (char c : text) out.push_back(static_cast<Token>(static_cast<unsigned char>(c)));
    return out;
}

std::string to_text(const Tokens& tokens)
{
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    return out;
}

void ToyLmConfig::validate() const
{
    if (n_layers < 1) throw ArgumentError("n_layers must be >= 1");
    if (d_model < 1 || n_heads < 1) throw ArgumentError("d_model and n_heads must be positive");
    if (d_model % n_heads != 0) throw ArgumentError("d_model must be divisible by n_heads");
    if (n_ctx < 1) throw ArgumentError("n_ctx must be >= 1");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ArgumentError("temperature must be >= 0");
}

struct ToyLm::Cache {
    std::vector<MatrixF> keys;
    std::vector<MatrixF> values;
};

struct ToyLm::Patch {
    int layer = -1;
    VectorD factor;  // per-neuron multiplier, empty when absent
    MatrixF add;     // (d_model, span) additive delta, empty when absent
    std::size_t prompt_len = 0;
    bool continuous = false;
};

ToyLm::ToyLm(ToyLmConfig cfg, ToyLmWeights weights) : cfg_(cfg), w_(std::move(weights))
{
    cfg_.validate();
    if (static_cast<int>(w_.layers.size()) != cfg_.n_layers) throw ArgumentError("weights do not match n_layers");
}

ToyLm ToyLm::init(const ToyLmConfig& cfg)
{
    cfg.validate();
    const Eigen::Index d = cfg.d_model;
    SplitMix64 rng(cfg.seed);
    ToyLmWeights w = zero_weights(cfg);
    w.token_embedding = gaussian(rng, kVocabSize, d);
    w.position_embedding = gaussian(rng, cfg.n_ctx, d);
    for (auto& l : w.layers) {
        l.w_qkv = gaussian(rng, d, 3 * d);
        l.w_out = gaussian(rng, d, d);
        l.w_fc = gaussian(rng, d, 4 * d);
        l.w_proj = gaussian(rng, 4 * d, d);
    }
    w.w_unembed = gaussian(rng, d, kVocabSize);
    return ToyLm(cfg, std::move(w));
}

void ToyLm::save(const std::filesystem::path& path) const
{
    io::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(cfg_.n_layers));
    w.u32(static_cast<std::uint32_t>(cfg_.d_model));
    w.u32(static_cast<std::uint32_t>(cfg_.n_heads));
    w.u32(static_cast<std::uint32_t>(cfg_.n_ctx));
    w.u32(static_cast<std::uint32_t>(kVocabSize));
    w.u64(cfg_.seed);
    w.f64(cfg_.temperature);
    auto weights = w_;
    for_each_weight(weights, [&](const MatrixF& m) { write_blob(w, m); });
    io::write_file_atomic(path, w.take());
}

ToyLm ToyLm::load(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    if (bytes.size() < kCheckpointMagic.size() || std::string_view(bytes).substr(0, 4) != kCheckpointMagic)
        throw FormatError("not a toy model checkpoint: " + path.string());
    io::ByteReader r(std::string_view(bytes).substr(4));
    if (r.u32() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    ToyLmConfig cfg;
    cfg.n_layers = static_cast<int>(r.u32());
    cfg.d_model = static_cast<int>(r.u32());
    cfg.n_heads = static_cast<int>(r.u32());
    cfg.n_ctx = static_cast<int>(r.u32());
    if (r.u32() != static_cast<std::uint32_t>(kVocabSize)) throw FormatError("checkpoint vocabulary is not byte-level");
    cfg.seed = r.u64();
    cfg.temperature = r.f64();
    cfg.validate();
    ToyLmWeights w = zero_weights(cfg);
    for_each_weight(w, [&](MatrixF& m) { m = read_blob(r, m.rows(), m.cols()); });
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint weights");
    return ToyLm(cfg, std::move(w));
}

ToyLm::Patch ToyLm::make_patch(const HookPoint& hook, std::size_t prompt_len) const
{
    if (hook.layer < 0 || hook.layer >= cfg_.n_layers)
        throw ArgumentError("hook layer " + std::to_string(hook.layer) + " outside [0, " +
                            std::to_string(cfg_.n_layers) + ")");
    Patch p;
    if (hook.mode == HookMode::Capture) return p;
    if (!hook.patch_source) throw ArgumentError("patch hook requires a steering result");
    const auto& src = *hook.patch_source;
    p.layer = hook.layer;
    p.prompt_len = prompt_len;
    p.continuous = hook.span == PatchSpan::Continuous;
    if (src.method == Method::SARA) {
        if (src.lambda.size() != cfg_.d_model)
            throw ArgumentError("lambda has " + std::to_string(src.lambda.size()) + " entries, model has d_model " +
                                std::to_string(cfg_.d_model));
        p.factor = VectorD::Ones(cfg_.d_model) + src.lambda;
    } else {
        if (!src.added || src.added->rows() != cfg_.d_model)
            throw ArgumentError("ActAdd patch delta does not match d_model");
        p.add = *src.added;
    }
    return p;
}

MatrixF ToyLm::forward(const Tokens& tokens, int start, Cache& cache, const Patch* patch, int capture_layer,
                       MatrixF* captured, ForwardTrace* trace) const
{
    const Eigen::Index d = cfg_.d_model;
    const Eigen::Index len = static_cast<Eigen::Index>(tokens.size());
    const Eigen::Index total = start + len;
    const int n_heads = cfg_.n_heads;
    const Eigen::Index dh = d / n_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    MatrixF x(len, d);
    for (Eigen::Index i = 0; i < len; ++i) {
        const Token t = tokens[static_cast<std::size_t>(i)];
        if (t < 0 || t >= kVocabSize) throw ArgumentError("token id out of range: " + std::to_string(t));
        x.row(i) = w_.token_embedding.row(t) + w_.position_embedding.row(start + i);
    }

    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto& lw = w_.layers[static_cast<std::size_t>(l)];
        MatrixF h = layer_norm(x, lw.ln1_gain, lw.ln1_bias);
        MatrixF qkv = h * lw.w_qkv;
        qkv.rowwise() += lw.b_qkv.row(0);
        auto& keys = cache.keys[static_cast<std::size_t>(l)];
        auto& values = cache.values[static_cast<std::size_t>(l)];
        keys.middleRows(start, len) = qkv.middleCols(d, d);
        values.middleRows(start, len) = qkv.middleCols(2 * d, d);

        MatrixF attn(len, d);
        if (trace) trace->attention.emplace_back();
        for (int hd = 0; hd < n_heads; ++hd) {
            const auto q = qkv.middleCols(hd * dh, dh);
            const auto k = keys.block(0, hd * dh, total, dh);
            const auto v = values.block(0, hd * dh, total, dh);
            MatrixF scores = (q * k.transpose()) * scale;
            for (Eigen::Index i = 0; i < len; ++i) {
                const Eigen::Index visible = start + i + 1;
                const float mx = scores.row(i).head(visible).maxCoeff();
                float sum = 0.0f;
                for (Eigen::Index c = 0; c < visible; ++c) {
                    scores(i, c) = std::exp(scores(i, c) - mx);
                    sum += scores(i, c);
                }
                scores.row(i).head(visible) /= sum;
                scores.row(i).tail(total - visible).setZero();
            }
            attn.middleCols(hd * dh, dh) = scores * v;
            if (trace) trace->attention.back().push_back(scores);
        }
        MatrixF attn_proj = attn * lw.w_out;
        attn_proj.rowwise() += lw.b_out.row(0);
        x += attn_proj;

        MatrixF h2 = layer_norm(x, lw.ln2_gain, lw.ln2_bias);
        MatrixF fc = h2 * lw.w_fc;
        fc.rowwise() += lw.b_fc.row(0);
        fc = fc.unaryExpr([](float v) { return gelu(v); });
        MatrixF mlp = fc * lw.w_proj;
        mlp.rowwise() += lw.b_proj.row(0);
        x += mlp;

        if (patch && patch->layer == l) {
            for (Eigen::Index i = 0; i < len; ++i) {
                const auto pos = static_cast<std::size_t>(start + i);
                const bool in_prompt = pos < patch->prompt_len;
                if (patch->factor.size() && (in_prompt || patch->continuous))
                    for (Eigen::Index j = 0; j < d; ++j)
                        x(i, j) = static_cast<float>(static_cast<double>(x(i, j)) * patch->factor(j));
                if (patch->add.size() && in_prompt && static_cast<Eigen::Index>(pos) < patch->add.cols())
                    x.row(i) += patch->add.col(static_cast<Eigen::Index>(pos)).transpose();
            }
        }
        if (l == capture_layer && captured) *captured = x;
        if (trace) trace->residual.push_back(x);
    }
    return x;
}

std::vector<float> ToyLm::logits_of(const MatrixF& last_hidden) const
{
    const MatrixF h = layer_norm(last_hidden, w_.lnf_gain, w_.lnf_bias);
    const MatrixF logits = h * w_.w_unembed;
    return std::vector<float>(logits.data(), logits.data() + logits.size());
}

std::vector<double> ToyLm::distribution(const std::vector<float>& logits, double temperature)
{
    std::vector<double> p(logits.size(), 0.0);
    if (logits.empty()) return p;
    if (temperature == 0.0) {
        p[static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin())] = 1.0;
        return p;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

ActivationMatrix ToyLm::capture_activations(const Tokens& prompt, int layer, std::string prompt_tag) const
{
    if (layer < 0 || layer >= cfg_.n_layers)
        throw ArgumentError("layer " + std::to_string(layer) + " outside [0, " + std::to_string(cfg_.n_layers) + ")");
    if (prompt.empty()) throw ArgumentError("prompt must be non-empty");
    if (static_cast<int>(prompt.size()) > cfg_.n_ctx) throw ArgumentError("prompt longer than the context window");
    Cache cache;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        cache.keys.emplace_back(static_cast<Eigen::Index>(prompt.size()), cfg_.d_model);
        cache.values.emplace_back(static_cast<Eigen::Index>(prompt.size()), cfg_.d_model);
    }
    MatrixF captured;
    forward(prompt, 0, cache, nullptr, layer, &captured, nullptr);
    return ActivationMatrix(captured.transpose(), static_cast<std::uint32_t>(layer),
                            "toylm-seed" + std::to_string(cfg_.seed), std::move(prompt_tag));
}

ForwardTrace ToyLm::trace(const Tokens& tokens) const
{
    if (tokens.empty()) throw ArgumentError("prompt must be non-empty");
    if (static_cast<int>(tokens.size()) > cfg_.n_ctx) throw ArgumentError("prompt longer than the context window");
    Cache cache;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        cache.keys.emplace_back(static_cast<Eigen::Index>(tokens.size()), cfg_.d_model);
        cache.values.emplace_back(static_cast<Eigen::Index>(tokens.size()), cfg_.d_model);
    }
    ForwardTrace t;
    const MatrixF x = forward(tokens, 0, cache, nullptr, -1, nullptr, &t);
    t.last_logits = logits_of(x.bottomRows(1));
    return t;
}

std::vector<float> ToyLm::next_token_logits(const Tokens& tokens, const HookPoint* hook) const
{
    if (tokens.empty()) throw ArgumentError("prompt must be non-empty");
    if (static_cast<int>(tokens.size()) > cfg_.n_ctx) throw ArgumentError("prompt longer than the context window");
    Patch patch;
    if (hook) patch = make_patch(*hook, tokens.size());
    Cache cache;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        cache.keys.emplace_back(static_cast<Eigen::Index>(tokens.size()), cfg_.d_model);
        cache.values.emplace_back(static_cast<Eigen::Index>(tokens.size()), cfg_.d_model);
    }
    const MatrixF x = forward(tokens, 0, cache, patch.layer >= 0 ? &patch : nullptr, -1, nullptr, nullptr);
    return logits_of(x.bottomRows(1));
}

std::vector<Tokens> ToyLm::generate_steered(const Tokens& prompt, const HookPoint& hook, int max_tokens,
                                            int samples) const
{
    if (prompt.empty()) throw ArgumentError("prompt must be non-empty");
    if (static_cast<int>(prompt.size()) > cfg_.n_ctx) throw ArgumentError("prompt longer than the context window");
    if (samples < 1) throw ArgumentError("samples must be >= 1");
    if (max_tokens < 0) throw ArgumentError("max_tokens must be >= 0");

    const Patch patch = make_patch(hook, prompt.size());
    const Patch* active = patch.layer >= 0 ? &patch : nullptr;

    const Eigen::Index capacity =
        std::min<Eigen::Index>(cfg_.n_ctx, static_cast<Eigen::Index>(prompt.size()) + max_tokens);
    Cache base;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        base.keys.emplace_back(capacity, cfg_.d_model);
        base.values.emplace_back(capacity, cfg_.d_model);
    }
    const MatrixF prefill = forward(prompt, 0, base, active, -1, nullptr, nullptr);
    const std::vector<float> first_logits = logits_of(prefill.bottomRows(1));

    std::vector<Tokens> out;
    out.reserve(static_cast<std::size_t>(samples));
    for (int s = 0; s < samples; ++s) {
        SplitMix64 rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(s)));
        Cache cache = base;
        std::vector<float> logits = first_logits;
        Tokens generated;
        while (static_cast<int>(generated.size()) < max_tokens) {
            const Token next = sample_token(logits, cfg_.temperature, rng);
            generated.push_back(next);
            if (static_cast<int>(generated.size()) == max_tokens) break;
            const int pos = static_cast<int>(prompt.size() + generated.size()) - 1;
            if (pos >= capacity) break;
            const MatrixF x = forward(Tokens{next}, pos, cache, active, -1, nullptr, nullptr);
            logits = logits_of(x);
        }
        out.push_back(std::move(generated));
    }
    return out;
}

std::vector<Tokens> ToyLm::generate(const Tokens& prompt, int max_tokens, int samples) const
{
    return generate_steered(prompt, HookPoint{}, max_tokens, samples);
}

// ---------------------------------------------------------------------------

std::string to_string(LayerGroup g)
{
    switch (g) {
    case LayerGroup::Early: return "early";
    case LayerGroup::Mid: return "mid";
    case LayerGroup::Late: return "late";
    }
    return "late";
}

std::vector<LayerGroupRange> layer_groups(int n_layers)
{
    if (n_layers < 3) throw ArgumentError("layer grouping needs at least 3 layers, got " + std::to_string(n_layers));
    const int third = n_layers / 3;
    return {{LayerGroup::Early, 0, third - 1},
            {LayerGroup::Mid, third, 2 * third - 1},
            {LayerGroup::Late, 2 * third, n_layers - 1}};
}

LayerGroup group_of(int layer, int n_layers)
{
    for (const auto& g : layer_groups(n_layers))
        if (layer >= g.first && layer <= g.last) return g.group;
    throw ArgumentError("layer " + std::to_string(layer) + " outside the model");
}

SweepReport layer_sweep(const ToyLm& model, const SteeringPrompts& prompts, const SweepOptions& options)
{
    const auto& cfg = model.config();
    SweepReport report;
    report.n_layers = cfg.n_layers;
    report.groups = layer_groups(cfg.n_layers);
    report.method = options.method;
    report.samples = options.samples;
    report.max_tokens = options.max_tokens;
    report.temperature = cfg.temperature;
    report.seed = cfg.seed;

    std::vector<int> layers = options.layers;
    if (layers.empty())
        for (int l = 0; l < cfg.n_layers; ++l) layers.push_back(l);
    for (int l : layers)
        if (l < 0 || l >= cfg.n_layers) throw ArgumentError("sweep layer " + std::to_string(l) + " outside the model");

    const Tokens prompt = to_tokens(prompts.prompt);
    const Tokens kantian = to_tokens(prompts.kantian);
    const Tokens utilitarian = to_tokens(prompts.utilitarian);
    const auto trace_prompt = model.trace(prompt);
    const auto trace_kantian = model.trace(kantian);
    const auto trace_utilitarian = model.trace(utilitarian);
    auto residual_at = [&](const ForwardTrace& t, int layer, const char* tag) {
        return ActivationMatrix(t.residual[static_cast<std::size_t>(layer)].transpose(),
                                static_cast<std::uint32_t>(layer), "toylm-seed" + std::to_string(cfg.seed), tag);
    };

    for (const auto& toks : model.generate(prompt, options.max_tokens, options.samples))
        report.unsteered.push_back(to_text(toks));

    for (int layer : layers) {
        const auto a_prompt = residual_at(trace_prompt, layer, "prompt");
        const auto a_kantian = residual_at(trace_kantian, layer, "kantian");
        const auto a_utilitarian = residual_at(trace_utilitarian, layer, "utilitarian");
        for (auto dir : {SteeringDirection::Kantian, SteeringDirection::Utilitarian}) {
            const auto& align = dir == SteeringDirection::Kantian ? a_kantian : a_utilitarian;
            const auto& repel = dir == SteeringDirection::Kantian ? a_utilitarian : a_kantian;
            SteeringResult result =
                options.method == Method::SARA
                    ? sara_steer(SteeringTriple{a_prompt, align, repel})
                    : actadd_steer(a_prompt, ActAddSpec{align, repel, options.injection_coefficient});

            SweepLayerSummary summary;
            summary.layer = layer;
            summary.direction = dir;
            summary.n_comp = result.n_comp;
            summary.lambda_mean = result.lambda.mean();
            summary.lambda_abs_mean = result.lambda.cwiseAbs().mean();
            summary.lambda_min = result.lambda.minCoeff();
            summary.lambda_max = result.lambda.maxCoeff();

            HookPoint hook{layer, HookMode::Patch, std::move(result), options.span};
            const auto outs = model.generate_steered(prompt, hook, options.max_tokens, options.samples);
            std::size_t changed = 0;
            for (int s = 0; s < options.samples; ++s) {
                SweepRow row;
                row.layer = layer;
                row.group = group_of(layer, cfg.n_layers);
                row.direction = dir;
                row.sample = s;
                row.text = to_text(outs[static_cast<std::size_t>(s)]);
                row.changed = row.text != report.unsteered[static_cast<std::size_t>(s)];
                changed += row.changed ? 1 : 0;
                report.rows.push_back(std::move(row));
            }
            summary.changed_fraction = static_cast<double>(changed) / options.samples;
            report.layers.push_back(summary);
        }
    }

    for (const auto& g : report.groups) {
        for (auto dir : {SteeringDirection::Kantian, SteeringDirection::Utilitarian}) {
            SweepGroupSummary gs;
            gs.group = g.group;
            gs.direction = dir;
            gs.first_layer = g.first;
            gs.last_layer = g.last;
            std::size_t n_layers = 0;
            for (const auto& ls : report.layers) {
                if (ls.direction != dir || ls.layer < g.first || ls.layer > g.last) continue;
                gs.changed_fraction += ls.changed_fraction;
                gs.lambda_abs_mean += ls.lambda_abs_mean;
                ++n_layers;
            }
            gs.n_samples = n_layers * static_cast<std::size_t>(options.samples);
            if (n_layers) {
                gs.changed_fraction /= static_cast<double>(n_layers);
                gs.lambda_abs_mean /= static_cast<double>(n_layers);
            }
            report.group_summaries.push_back(gs);
        }
    }
    return report;
}

nlohmann::json to_json(const SweepReport& r)
{
    nlohmann::json j;
    j["kind"] = "layer_sweep";
    j["n_layers"] = r.n_layers;
    j["method"] = to_string(r.method);
    j["samples"] = r.samples;
    j["max_tokens"] = r.max_tokens;
    j["temperature"] = r.temperature;
    j["seed"] = r.seed;
    for (const auto& g : r.groups)
        j["groups"].push_back({{"group", to_string(g.group)}, {"first", g.first}, {"last", g.last}});
    j["unsteered"] = r.unsteered;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"layer", row.layer},
                             {"group", to_string(row.group)},
                             {"direction", to_string(row.direction)},
                             {"sample", row.sample},
                             {"text", row.text},
                             {"changed", row.changed}});
    j["layers"] = nlohmann::json::array();
    for (const auto& l : r.layers)
        j["layers"].push_back({{"layer", l.layer},
                               {"direction", to_string(l.direction)},
                               {"n_comp", l.n_comp},
                               {"lambda_mean", l.lambda_mean},
                               {"lambda_abs_mean", l.lambda_abs_mean},
                               {"lambda_min", l.lambda_min},
                               {"lambda_max", l.lambda_max},
                               {"changed_fraction", l.changed_fraction}});
    j["group_summaries"] = nlohmann::json::array();
    for (const auto& g : r.group_summaries)
        j["group_summaries"].push_back({{"group", to_string(g.group)},
                                        {"direction", to_string(g.direction)},
                                        {"first_layer", g.first_layer},
                                        {"last_layer", g.last_layer},
                                        {"n_samples", g.n_samples},
                                        {"changed_fraction", g.changed_fraction},
                                        {"lambda_abs_mean", g.lambda_abs_mean}});
    return j;
}

nlohmann::json sweep_report_schema()
{
    using nlohmann::json;
    const json direction = {{"type", "string"}, {"enum", {"Kantian", "Utilitarian"}}};
    const json group = {{"type", "string"}, {"enum", {"early", "mid", "late"}}};
    const json integer = {{"type", "integer"}, {"minimum", 0}};
    const json number = {{"type", "number"}};
    return json{
        {"$schema", "https://json-schema.org/draft/2020-12/schema"},
        {"title", "layer sweep report"},
        {"type", "object"},
        {"required", {"kind", "n_layers", "method", "samples", "max_tokens", "temperature", "seed", "groups",
                      "unsteered", "rows", "layers", "group_summaries"}},
        {"properties",
         {{"kind", {{"const", "layer_sweep"}}},
          {"n_layers", {{"type", "integer"}, {"minimum", 3}}},
          {"method", {{"type", "string"}, {"enum", {"SARA", "ActAdd"}}}},
          {"samples", {{"type", "integer"}, {"minimum", 1}}},
          {"max_tokens", integer},
          {"temperature", {{"type", "number"}, {"minimum", 0}}},
          {"seed", integer},
          {"groups",
           {{"type", "array"},
            {"minItems", 3},
            {"maxItems", 3},
            {"items",
             {{"type", "object"},
              {"required", {"group", "first", "last"}},
              {"properties", {{"group", group}, {"first", integer}, {"last", integer}}}}}}},
          {"unsteered", {{"type", "array"}, {"items", {{"type", "string"}}}}},
          {"rows",
           {{"type", "array"},
            {"items",
             {{"type", "object"},
              {"required", {"layer", "group", "direction", "sample", "text", "changed"}},
              {"properties",
               {{"layer", integer},
                {"group", group},
                {"direction", direction},
                {"sample", integer},
                {"text", {{"type", "string"}}},
                {"changed", {{"type", "boolean"}}}}}}}}},
          {"layers",
           {{"type", "array"},
            {"items",
             {{"type", "object"},
              {"required", {"layer", "direction", "n_comp", "lambda_mean", "lambda_abs_mean", "lambda_min",
                            "lambda_max", "changed_fraction"}},
              {"properties",
               {{"layer", integer},
                {"direction", direction},
                {"n_comp", integer},
                {"lambda_mean", number},
                {"lambda_abs_mean", number},
                {"lambda_min", number},
                {"lambda_max", number},
                {"changed_fraction", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}}}}}}}},
          {"group_summaries",
           {{"type", "array"},
            {"items",
             {{"type", "object"},
              {"required", {"group", "direction", "first_layer", "last_layer", "n_samples", "changed_fraction",
                            "lambda_abs_mean"}},
              {"properties",
               {{"group", group},
                {"direction", direction},
                {"first_layer", integer},
                {"last_layer", integer},
                {"n_samples", integer},
                {"changed_fraction", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                {"lambda_abs_mean", number}}}}}}}}}};
}

namespace {

// Minimal validator for the subset of JSON Schema used by sweep_report_schema().
void check_node(const nlohmann::json& value, const nlohmann::json& schema, const std::string& where,
                std::vector<std::string>& problems)
{
    if (schema.contains("const") && value != schema["const"]) problems.push_back(where + ": unexpected value");
    if (schema.contains("enum")) {
        bool hit = false;
        for (const auto& e : schema["enum"]) hit = hit || e == value;
        if (!hit) problems.push_back(where + ": value not in enum");
    }
    if (schema.contains("type")) {
        const auto type = schema["type"].get<std::string>();
        bool ok = (type == "object" && value.is_object()) || (type == "array" && value.is_array()) ||
                  (type == "string" && value.is_string()) || (type == "boolean" && value.is_boolean()) ||
                  (type == "integer" && value.is_number_integer()) || (type == "number" && value.is_number());
        if (!ok) {
            problems.push_back(where + ": expected " + type);
            return;
        }
    }
    if (value.is_number()) {
        if (schema.contains("minimum") && value.get<double>() < schema["minimum"].get<double>())
            problems.push_back(where + ": below minimum");
        if (schema.contains("maximum") && value.get<double>() > schema["maximum"].get<double>())
            problems.push_back(where + ": above maximum");
    }
    if (value.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema["required"])
                if (!value.contains(key.get<std::string>()))
                    problems.push_back(where + ": missing '" + key.get<std::string>() + "'");
        if (schema.contains("properties"))
            for (const auto& [key, sub] : schema["properties"].items())
                if (value.contains(key)) check_node(value[key], sub, where + "." + key, problems);
    }
    if (value.is_array()) {
        if (schema.contains("minItems") && value.size() < schema["minItems"].get<std::size_t>())
            problems.push_back(where + ": too few items");
        if (schema.contains("maxItems") && value.size() > schema["maxItems"].get<std::size_t>())
            problems.push_back(where + ": too many items");
        if (schema.contains("items"))
            for (std::size_t i = 0; i < value.size(); ++i)
                check_node(value[i], schema["items"], where + "[" + std::to_string(i) + "]", problems);
    }
}

}  // namespace

std::vector<std::string> validate_sweep_report(const nlohmann::json& doc)
{
    std::vector<std::string> problems;
    check_node(doc, sweep_report_schema(), "$", problems);
    if (!problems.empty()) return problems;

    // Cross-field rules the schema cannot express.
    const auto n_layers = doc["n_layers"].get<int>();
    const auto expected = layer_groups(n_layers);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& g = doc["groups"][i];
        if (g["group"] != to_string(expected[i].group) || g["first"] != expected[i].first ||
            g["last"] != expected[i].last)
            problems.push_back("$.groups[" + std::to_string(i) + "]: does not match the layer thirds");
    }
    const std::size_t per_layer = 2 * doc["samples"].get<std::size_t>();
    if (doc["rows"].size() != doc["layers"].size() / 2 * per_layer)
        problems.push_back("$.rows: row count is not layers x 2 directions x samples");
    for (const auto& row : doc["rows"])
        if (row["layer"].get<int>() >= n_layers) problems.push_back("$.rows: layer out of range");
    return problems;
}

}  // namespace sara
