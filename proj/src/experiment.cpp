#include "sara/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>
#include <sstream>

#include "sara/analysis/mfq.hpp"
#include "sara/analysis/records.hpp"
#include "sara/errors.hpp"
#include "sara/io.hpp"

namespace sara {

namespace fs = std::filesystem;
using nlohmann::json;

ExitCode exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const UsageError*>(&e)) return ExitCode::Usage;
    if (dynamic_cast<const IoError*>(&e)) return ExitCode::Io;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return ExitCode::Io;
    return ExitCode::Failure;
}

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

int parse_int(std::string_view s, const std::string& what)
{
    int v = 0;
    const auto t = trim(s);
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
        throw UsageError("invalid " + what + ": '" + std::string(s) + "'");
    return v;
}

double parse_double(std::string_view s, bool* ok)
{
    double v = 0.0;
    const auto t = trim(s);
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    *ok = ec == std::errc{} && p == t.data() + t.size() && !t.empty();
    return v;
}

std::vector<std::string> split_lines(std::string_view text)
{
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(start, end - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        if (end == text.size()) break;
        start = end + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json matrix_json(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string matrix_csv(const Eigen::MatrixXd& m, const SchoolSet& schools)
{
    std::string out = "from";
    for (const auto& n : schools.names()) out += "," + csv_field(n);
    out += "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out += csv_field(schools.name(static_cast<std::size_t>(i)));
        for (Eigen::Index j = 0; j < m.cols(); ++j) out += "," + num(m(i, j));
        out += "\n";
    }
    return out;
}

json opt_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

std::string direction_dir(SteeringDirection d)
{
    return d == SteeringDirection::Kantian ? "kantian" : "utilitarian";
}

std::vector<SteeringDirection> directions_of(DirectionChoice c)
{
    switch (c) {
    case DirectionChoice::Kantian: return {SteeringDirection::Kantian};
    case DirectionChoice::Utilitarian: return {SteeringDirection::Utilitarian};
    case DirectionChoice::Both: break;
    }
    return {SteeringDirection::Kantian, SteeringDirection::Utilitarian};
}

json tokens_json(const Tokens& t)
{
    json a = json::array();
    for (Token x : t) a.push_back(x);
    return a;
}

}  // namespace

std::vector<int> parse_layer_spec(const std::string& spec, int n_layers)
{
    std::vector<int> layers;
    const auto s = trim(spec);
    if (s.empty()) throw UsageError("empty layer list");
    if (s == "all") {
        for (int l = 0; l < n_layers; ++l) layers.push_back(l);
        return layers;
    }
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto range = part.find("..");
        if (range == std::string::npos) {
            layers.push_back(parse_int(part, "layer"));
            continue;
        }
        const int lo = parse_int(part.substr(0, range), "layer range");
        const int hi = parse_int(part.substr(range + 2), "layer range");
        if (lo > hi) throw UsageError("layer range '" + part + "' is empty");
        for (int l = lo; l <= hi; ++l) layers.push_back(l);
    }
    for (int l : layers)
        if (l < 0 || l >= n_layers)
            throw UsageError("layer " + std::to_string(l) + " outside [0, " + std::to_string(n_layers) + ")");
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    return layers;
}

DirectionChoice parse_direction_choice(const std::string& s)
{
    if (s == "kantian") return DirectionChoice::Kantian;
    if (s == "utilitarian") return DirectionChoice::Utilitarian;
    if (s == "both") return DirectionChoice::Both;
    throw UsageError("direction must be kantian, utilitarian or both, got '" + s + "'");
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const
{
    if (samples < 1) throw UsageError("samples must be >= 1");
    if (max_tokens < 1) throw UsageError("max-tokens must be >= 1");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw UsageError("temperature must be >= 0");
    if (prompt_text.empty() || align_text.empty() || repel_text.empty())
        throw UsageError("prompt, align and repel texts must be non-empty");
    if (!checkpoint && n_layers < 3) throw UsageError("n-layers must be >= 3");
    if (!std::isfinite(injection_coefficient)) throw UsageError("injection coefficient must be finite");
}

ToyLm ExperimentConfig::model() const
{
    if (checkpoint) {
        auto loaded = ToyLm::load(*checkpoint);
        auto cfg = loaded.config();
        cfg.temperature = temperature;
        return ToyLm(cfg, loaded.weights());
    }
    ToyLmConfig cfg;
    cfg.n_layers = n_layers;
    cfg.seed = seed;
    cfg.temperature = temperature;
    try {
        return ToyLm::init(cfg);
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
}

json ExperimentConfig::to_json() const
{
    const char* dir = direction == DirectionChoice::Kantian       ? "kantian"
                      : direction == DirectionChoice::Utilitarian ? "utilitarian"
                                                                  : "both";
    return {{"method", sara::to_string(method)},
            {"layers", layers},
            {"direction", dir},
            {"prompt_text", prompt_text},
            {"align_text", align_text},
            {"repel_text", repel_text},
            {"samples", samples},
            {"max_tokens", max_tokens},
            {"temperature", temperature},
            {"seed", seed},
            {"n_layers", n_layers},
            {"checkpoint", checkpoint ? json(checkpoint->string()) : json(nullptr)},
            {"span", span == PatchSpan::Continuous ? "continuous" : "prompt"},
            {"injection_coefficient", injection_coefficient}};
}

std::string read_text_asset(const fs::path& path)
{
    auto s = io::read_file(path);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

PromptAssets PromptAssets::load(const fs::path& data_dir, const std::string& dilemma)
{
    const auto dir = data_dir / "prompts";
    return {read_text_asset(dir / (dilemma + ".txt")), read_text_asset(dir / "kantian.txt"),
            read_text_asset(dir / "utilitarian.txt")};
}

// ---------------------------------------------------------------------------

std::string encode_lambda_csv(const VectorD& lambda)
{
    std::string out = "neuron,lambda\n";
    for (Eigen::Index j = 0; j < lambda.size(); ++j) out += std::to_string(j) + "," + num(lambda(j)) + "\n";
    return out;
}

VectorD decode_lambda_csv(std::string_view text)
{
    const auto lines = split_lines(text);
    if (lines.empty() || trim(lines[0]) != "neuron,lambda") throw FormatError("lambda CSV must start with 'neuron,lambda'");
    std::vector<double> values;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto where = "lambda CSV line " + std::to_string(i + 1) + ": ";
        const auto comma = lines[i].find(',');
        if (comma == std::string::npos) throw FormatError(where + "expected 'neuron,lambda'");
        bool ok = false;
        const double idx = parse_double(lines[i].substr(0, comma), &ok);
        if (!ok || idx != static_cast<double>(values.size())) throw FormatError(where + "neuron indices must run 0, 1, 2, ...");
        const double v = parse_double(lines[i].substr(comma + 1), &ok);
        if (!ok || !std::isfinite(v)) throw FormatError(where + "lambda must be a finite number");
        values.push_back(v);
    }
    if (values.empty()) throw FormatError("lambda CSV has no rows");
    return Eigen::Map<VectorD>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void save_lambda_csv(const VectorD& lambda, const fs::path& path)
{
    io::write_file_atomic(path, encode_lambda_csv(lambda));
}

VectorD load_lambda_csv(const fs::path& path)
{
    return decode_lambda_csv(io::read_file(path));
}

// ---------------------------------------------------------------------------

void Manifest::add_input(const fs::path& path)
{
    inputs[path.string()] = io::sha256_hex(io::read_file(path));
}

std::string Manifest::inputs_digest() const
{
    std::string all;
    for (const auto& [path, digest] : inputs) all += digest + "\n";
    return io::sha256_hex(all);
}

json Manifest::to_json() const
{
    return {{"command", command},      {"version", kVersion},       {"seed", seed},
            {"parameters", parameters}, {"inputs", inputs},          {"inputs_digest", inputs_digest()},
            {"outputs", outputs},       {"timestamp", timestamp}};
}

namespace {

std::vector<fs::path> regular_files(const fs::path& dir)
{
    std::vector<fs::path> files;
    if (!fs::exists(dir)) return files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && fs::relative(e.path(), dir) != "manifest.json")
            files.push_back(fs::relative(e.path(), dir));
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::string directory_digest(const fs::path& dir)
{
    std::string all;
    for (const auto& rel : regular_files(dir))
        all += rel.generic_string() + "\t" + io::sha256_hex(io::read_file(dir / rel)) + "\n";
    return io::sha256_hex(all);
}

std::string dump_json(const json& j, int indent)
{
    return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

void write_json(const fs::path& path, const json& j)
{
    io::write_file_atomic(path, dump_json(j) + "\n");
}

void write_manifest(const fs::path& dir, Manifest manifest)
{
    for (const auto& rel : regular_files(dir))
        manifest.outputs[rel.generic_string()] = io::sha256_hex(io::read_file(dir / rel));
    manifest.timestamp = utc_timestamp();
    write_json(dir / "manifest.json", manifest.to_json());
}

// ---------------------------------------------------------------------------
// steer / sweep

SteerSummary run_steer(const ExperimentConfig& cfg)
{
    cfg.validate();
    const auto model = cfg.model();
    const auto layers = parse_layer_spec(cfg.layers, model.config().n_layers);
    const auto out = cfg.output_dir;

    const Tokens prompt = to_tokens(cfg.prompt_text);
    const Tokens align = to_tokens(cfg.align_text);
    const Tokens repel = to_tokens(cfg.repel_text);
    const auto unsteered = model.generate(prompt, cfg.max_tokens, cfg.samples);
    {
        std::string lines;
        for (std::size_t i = 0; i < unsteered.size(); ++i)
            lines += dump_json({{"sample", i}, {"text", to_text(unsteered[i])}, {"tokens", tokens_json(unsteered[i])}},
                               -1) +
                     "\n";
        io::write_file_atomic(out / "unsteered.jsonl", lines);
    }

    SteerSummary summary;
    summary.output_dir = out;
    const std::string tag = "toylm-seed" + std::to_string(model.config().seed);
    for (int layer : layers) {
        char name[32];
        std::snprintf(name, sizeof name, "layer_%02d", layer);
        const auto a_prompt = model.capture_activations(prompt, layer, "prompt");
        const auto a_align = model.capture_activations(align, layer, "align");
        const auto a_repel = model.capture_activations(repel, layer, "repel");
        for (auto dir : directions_of(cfg.direction)) {
            const bool fwd = dir == SteeringDirection::Kantian;
            const auto& to = fwd ? a_align : a_repel;
            const auto& away = fwd ? a_repel : a_align;
            const auto d = out / name / direction_dir(dir);
            auto retag = [&](const ActivationMatrix& m, const char* prompt_tag) {
                return ActivationMatrix(m.data(), m.layer(), tag, prompt_tag);
            };
            save_dump(retag(a_prompt, "prompt"), d / "prompt.actdump");
            save_dump(retag(to, "align"), d / "align.actdump");
            save_dump(retag(away, "repel"), d / "repel.actdump");

            SteeringResult result = cfg.method == Method::SARA
                                        ? sara_steer(SteeringTriple{a_prompt, to, away})
                                        : actadd_steer(a_prompt, ActAddSpec{to, away, cfg.injection_coefficient});
            save_lambda_csv(result.lambda, d / "lambda.csv");
            save_dump(retag(result.steered, "steered"), d / "steered.actdump");

            HookPoint hook{layer, HookMode::Patch, std::move(result), cfg.span};
            const auto outs = model.generate_steered(prompt, hook, cfg.max_tokens, cfg.samples);
            std::string lines;
            for (std::size_t i = 0; i < outs.size(); ++i)
                lines += dump_json({{"layer", layer},
                                    {"direction", to_string(dir)},
                                    {"method", to_string(cfg.method)},
                                    {"sample", i},
                                    {"text", to_text(outs[i])},
                                    {"tokens", tokens_json(outs[i])},
                                    {"changed", outs[i] != unsteered[i]}},
                                   -1) +
                         "\n";
            io::write_file_atomic(d / "samples.jsonl", lines);
            summary.result_sets.emplace_back(layer, dir);
        }
    }

    Manifest m;
    m.command = "steer";
    m.seed = cfg.seed;
    m.parameters = cfg.to_json();
    if (cfg.checkpoint) m.add_input(*cfg.checkpoint);
    write_manifest(out, m);
    return summary;
}

SweepReport run_sweep(const ExperimentConfig& cfg)
{
    cfg.validate();
    const auto model = cfg.model();
    SweepOptions opt;
    opt.method = cfg.method;
    opt.max_tokens = cfg.max_tokens;
    opt.samples = cfg.samples;
    opt.span = cfg.span;
    opt.injection_coefficient = cfg.injection_coefficient;
    opt.layers = parse_layer_spec(cfg.layers, model.config().n_layers);
    const auto report = layer_sweep(model, SteeringPrompts{cfg.prompt_text, cfg.align_text, cfg.repel_text}, opt);
    const auto doc = to_json(report);
    const auto problems = validate_sweep_report(doc);
    if (!problems.empty()) throw DataError("sweep report failed its self-check: " + problems.front());
    write_json(cfg.output_dir / "sweep.json", doc);
    write_json(cfg.output_dir / "sweep_schema.json", sweep_report_schema());

    Manifest m;
    m.command = "sweep";
    m.seed = cfg.seed;
    m.parameters = cfg.to_json();
    if (cfg.checkpoint) m.add_input(*cfg.checkpoint);
    write_manifest(cfg.output_dir, m);
    return report;
}

// ---------------------------------------------------------------------------
// JSON views

json to_json(const FractionTable& t, const SchoolSet& schools)
{
    json groups = json::array();
    for (std::size_t g = 0; g < t.groups.size(); ++g) {
        json f = json::object();
        for (std::size_t k = 0; k < kNumSchools; ++k) f[schools.name(k)] = t.fractions[g][k];
        groups.push_back({{"group", t.groups[g]}, {"count", t.counts[g]}, {"fractions", f}});
    }
    return {{"schools", schools.names()}, {"groups", groups}, {"warnings", t.warnings}};
}

json to_json(const ConsistencyReport& r)
{
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"model_tag", row.model_tag},
                        {"dilemma_id", row.dilemma_id},
                        {"repetitions", row.repetitions},
                        {"consistency", opt_json(row.value)},
                        {"ci_low", opt_json(row.ci_low)},
                        {"ci_high", opt_json(row.ci_high)}});
    json models = json::array();
    for (const auto& m : r.models)
        models.push_back({{"model_tag", m.model_tag},
                          {"dilemmas", m.dilemmas},
                          {"mean", m.mean},
                          {"ci_low", m.ci_low},
                          {"ci_high", m.ci_high}});
    return {{"rows", rows}, {"models", models}, {"warnings", r.warnings}};
}

json to_json(const AmiReport& r, bool include_surrogates)
{
    json j{{"ami", r.ami},
           {"mutual_information", r.mutual_information},
           {"expected_mutual_information", r.expected_mutual_information},
           {"entropy_a", r.entropy_a},
           {"entropy_b", r.entropy_b},
           {"n_surrogates", r.n_surrogates},
           {"surrogate_mean", r.surrogate_mean},
           {"surrogate_p01", r.surrogate_p01},
           {"surrogate_p99", r.surrogate_p99}};
    if (include_surrogates) j["surrogates"] = r.surrogates;
    return j;
}

json to_json(const TransitionReport& r, const SchoolSet& schools)
{
    auto names = [&](const std::vector<std::size_t>& idx) {
        json a = json::array();
        for (auto i : idx) a.push_back(schools.name(i));
        return a;
    };
    return {{"schools", schools.names()},
            {"trajectories", r.trajectories},
            {"counts", matrix_json(r.counts)},
            {"probabilities", matrix_json(r.probabilities)},
            {"empty_row", r.empty_row},
            {"absorbing", names(r.absorbing)},
            {"bridging", names(r.bridging)}};
}

json to_json(const CovarianceReport& r, const SchoolSet& schools)
{
    return {{"schools", schools.names()}, {"observations", r.observations}, {"covariance", matrix_json(r.covariance)}};
}

json to_json(const FoundationTestReport& r)
{
    json tests = json::array();
    for (const auto& t : r.tests)
        tests.push_back({{"foundation", to_string(t.foundation)},
                         {"model_a", t.model_a},
                         {"model_b", t.model_b},
                         {"n_a", t.n_a},
                         {"n_b", t.n_b},
                         {"effect_size", t.effect_size},
                         {"p_value", t.p_value},
                         {"p_adjusted", t.p_adjusted},
                         {"significant", t.significant},
                         {"exact", t.exact}});
    return {{"alpha", r.alpha}, {"tests", tests}, {"warnings", r.warnings}};
}

json to_json(const FdrResult& r, const std::vector<double>& p)
{
    json rows = json::array();
    for (std::size_t i = 0; i < p.size(); ++i)
        rows.push_back({{"index", i}, {"p_value", p[i]}, {"p_adjusted", r.adjusted[i]}, {"rejected", bool(r.rejected[i])}});
    return {{"n_rejected", r.n_rejected}, {"tests", rows}};
}

json to_json(const SelectivityReport& r)
{
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"direction", to_string(row.direction)},
                        {"n", row.n},
                        {"kantian_share", row.kantian_share},
                        {"utilitarian_share", row.utilitarian_share},
                        {"other_share", row.other_share},
                        {"on_target", opt_json(row.on_target)},
                        {"spillover", opt_json(row.spillover)}});
    return {{"rows", rows}, {"warnings", r.warnings}};
}

json to_json(const std::vector<MethodDeltaRow>& rows)
{
    json out = json::array();
    for (const auto& d : rows)
        out.push_back({{"direction", to_string(d.direction)},
                       {"on_target_sara", d.on_target_sara},
                       {"on_target_actadd", d.on_target_actadd},
                       {"on_target_delta", d.on_target_delta()},
                       {"spillover_sara", d.spillover_sara},
                       {"spillover_actadd", d.spillover_actadd},
                       {"spillover_delta", d.spillover_delta()}});
    return out;
}

json to_json(const std::vector<SyntheticComparisonRow>& rows)
{
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"direction", to_string(r.direction)},
                       {"method", to_string(r.method)},
                       {"on_target_gain", r.mean.on_target_gain},
                       {"spillover", r.mean.spillover},
                       {"repel_gain", r.mean.repel_gain}});
    return out;
}

json inspect_dump(const ActivationMatrix& m, const std::string& bytes)
{
    const MatrixD d = m.to_double();
    Eigen::Index zero_rows = 0;
    for (Eigen::Index i = 0; i < d.rows(); ++i) zero_rows += d.row(i).isZero(0.0) ? 1 : 0;
    json warnings = json::array();
    if (zero_rows > 0)
        warnings.push_back(std::to_string(zero_rows) + " neuron row(s) are all zero; their cosine similarity is undefined");
    return {{"n_neurons", m.n_neurons()},
            {"n_tokens", m.n_tokens()},
            {"layer", m.layer()},
            {"model_tag", m.model_tag()},
            {"prompt_tag", m.prompt_tag()},
            {"sha256", io::sha256_hex(bytes)},
            {"min", d.minCoeff()},
            {"max", d.maxCoeff()},
            {"mean", d.mean()},
            {"frobenius_norm", d.norm()},
            {"zero_rows", zero_rows},
            {"warnings", warnings}};
}

// ---------------------------------------------------------------------------
// analyze

bool is_known_analysis(const std::string& name)
{
    static const std::set<std::string> known{"fractions", "consistency", "ami", "transitions",
                                             "covariance", "mfq", "fdr"};
    return known.count(name) > 0;
}

std::vector<std::string> read_label_file(const fs::path& path)
{
    std::vector<std::string> labels;
    for (const auto& line : split_lines(io::read_file(path))) {
        auto t = trim(line);
        if (!t.empty()) labels.push_back(std::move(t));
    }
    return labels;
}

std::vector<double> read_pvalues(const fs::path& path)
{
    const auto lines = split_lines(io::read_file(path));
    std::vector<double> p;
    std::size_t column = 0;
    std::size_t first = 0;
    if (!lines.empty() && lines[0].find("p_value") != std::string::npos) {
        std::stringstream ss(lines[0]);
        std::string cell;
        std::size_t i = 0;
        while (std::getline(ss, cell, ',')) {
            if (trim(cell) == "p_value") column = i;
            ++i;
        }
        first = 1;
    }
    for (std::size_t n = first; n < lines.size(); ++n) {
        if (trim(lines[n]).empty()) continue;
        std::stringstream ss(lines[n]);
        std::string cell;
        for (std::size_t i = 0; i <= column; ++i)
            if (!std::getline(ss, cell, ',')) cell.clear();
        bool ok = false;
        const double v = parse_double(cell, &ok);
        if (!ok) throw FormatError(path.string() + ":" + std::to_string(n + 1) + ": not a p-value");
        p.push_back(v);
    }
    return p;
}

AnalyzeResult run_analyze(const AnalyzeOptions& o)
{
    if (o.analyses.empty()) throw UsageError("no analysis selected");
    for (const auto& a : o.analyses)
        if (!is_known_analysis(a)) throw UsageError("unknown analysis '" + a + "'");
    auto wants = [&](const char* name) { return std::find(o.analyses.begin(), o.analyses.end(), name) != o.analyses.end(); };

    AnalyzeResult res;
    Manifest manifest;
    manifest.command = "analyze";
    manifest.seed = o.seed;
    manifest.parameters = {{"analyses", o.analyses},     {"classifier", o.classifier}, {"surrogates", o.surrogates},
                           {"alpha", o.alpha},           {"bootstrap", o.bootstrap},
                           {"mfq_mode", o.mfq_mode == ComparisonMode::Pairwise ? "pairwise" : "one-vs-rest"}};
    const auto out = o.output_dir;

    const SchoolSet schools = o.schools ? SchoolSet::from_file(*o.schools) : SchoolSet::defaults();
    if (o.schools) manifest.add_input(*o.schools);

    std::optional<RecordSet> records;
    auto need_records = [&]() -> const std::vector<ClassifiedResponse>& {
        if (!records) {
            if (!o.records) throw UsageError("this analysis needs --records");
            records = load_records_jsonl(*o.records, schools);
            manifest.add_input(*o.records);
            for (const auto& e : records->errors)
                res.row_errors.push_back(o.records->string() + ":" + std::to_string(e.line) + ": " + e.message);
        }
        return records->records;
    };

    if (wants("fractions")) {
        const auto& r = need_records();
        json j = json::object();
        std::string csv = "grouping,group,count";
        for (const auto& n : schools.names()) csv += "," + csv_field(n);
        csv += "\n";
        for (auto [g, name] : {std::pair{GroupBy::Model, "model"}, std::pair{GroupBy::ModelClass, "model_class"}}) {
            const auto t = alignment_fractions(r, g, o.classifier);
            j[name] = to_json(t, schools);
            for (std::size_t i = 0; i < t.groups.size(); ++i) {
                csv += std::string(name) + "," + csv_field(t.groups[i]) + "," + std::to_string(t.counts[i]);
                for (double f : t.fractions[i]) csv += "," + num(f);
                csv += "\n";
            }
            for (const auto& w : t.warnings) res.warnings.push_back(w);
        }
        res.results["fractions"] = j;
        io::write_file_atomic(out / "fractions.csv", csv);
    }

    if (wants("consistency")) {
        const auto& r = need_records();
        BootstrapOptions b;
        b.resamples = o.bootstrap;
        b.seed = o.seed;
        const auto rep = consistency(r, o.classifier, b);
        res.results["consistency"] = to_json(rep);
        std::string csv = "model_tag,dilemma_id,repetitions,consistency,ci_low,ci_high\n";
        auto cell = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
        for (const auto& row : rep.rows)
            csv += csv_field(row.model_tag) + "," + csv_field(row.dilemma_id) + "," + std::to_string(row.repetitions) +
                   "," + cell(row.value) + "," + cell(row.ci_low) + "," + cell(row.ci_high) + "\n";
        io::write_file_atomic(out / "consistency.csv", csv);
        for (const auto& w : rep.warnings) res.warnings.push_back(w);
    }

    if (wants("ami")) {
        json j;
        if (o.labels_a || o.labels_b) {
            if (!o.labels_a || !o.labels_b) throw UsageError("--labels-a and --labels-b go together");
            const auto a = read_label_file(*o.labels_a), b = read_label_file(*o.labels_b);
            manifest.add_input(*o.labels_a);
            manifest.add_input(*o.labels_b);
            j = to_json(ami_agreement(encode_labels(a), encode_labels(b), o.surrogates, o.seed));
            j["source"] = {o.labels_a->string(), o.labels_b->string()};
        } else {
            const auto& r = need_records();
            auto tags = o.ami_classifiers;
            if (tags.empty()) tags = classifier_tags(r);
            if (tags.size() < 2) throw UsageError("ami needs two classifiers in the records or --labels-a/--labels-b");
            std::vector<std::string> a, b;
            for (const auto& rec : r) {
                const auto ia = rec.school_by_classifier.find(tags[0]);
                const auto ib = rec.school_by_classifier.find(tags[1]);
                if (ia == rec.school_by_classifier.end() || ib == rec.school_by_classifier.end()) continue;
                a.push_back(schools.name(ia->second));
                b.push_back(schools.name(ib->second));
            }
            j = to_json(ami_agreement(encode_labels(a), encode_labels(b), o.surrogates, o.seed));
            j["source"] = {tags[0], tags[1]};
        }
        res.results["ami"] = j;
    }

    for (const char* which : {"transitions", "covariance"}) {
        if (!wants(which)) continue;
        const auto& r = need_records();
        json j = json::object();
        for (auto cls : {ModelClass::Proprietary, ModelClass::Open}) {
            try {
                if (std::string(which) == "transitions")
                    j[to_string(cls)] = to_json(transition_matrix(r, cls, o.classifier), schools);
                else
                    j[to_string(cls)] = to_json(covariance_matrix(r, cls, o.classifier), schools);
            } catch (const ArgumentError& e) {
                res.warnings.push_back(std::string(which) + " (" + to_string(cls) + "): " + e.what());
            }
        }
        if (j.empty()) throw DataError(std::string(which) + ": no model class has enough data");
        for (auto& [cls, v] : j.items()) {
            const auto m = std::string(which) == "transitions" ? v["probabilities"] : v["covariance"];
            Eigen::MatrixXd mat(8, 8);
            for (int i = 0; i < 8; ++i)
                for (int k = 0; k < 8; ++k) mat(i, k) = m[i][k].get<double>();
            io::write_file_atomic(out / (std::string(which) + "_" + cls + ".csv"), matrix_csv(mat, schools));
        }
        res.results[which] = j;
    }

    if (wants("mfq")) {
        if (!o.mfq_csv) throw UsageError("mfq needs --mfq-csv");
        const MfqKey key = o.mfq_key ? MfqKey::from_json_file(*o.mfq_key) : MfqKey::standard();
        if (o.mfq_key) manifest.add_input(*o.mfq_key);
        const auto table = load_mfq_csv(*o.mfq_csv, key);
        manifest.add_input(*o.mfq_csv);
        for (const auto& e : table.errors)
            res.row_errors.push_back(o.mfq_csv->string() + ":" + std::to_string(e.line) + ": " + e.message);
        io::write_file_atomic(out / "mfq_scores.csv", to_scores_csv(table.sheets));

        std::map<std::string, std::pair<std::array<double, kFoundations>, std::size_t>> means;
        for (const auto& s : table.sheets) {
            if (s.catch_flagged) continue;
            auto& [sum, n] = means[s.model_tag];
            for (std::size_t f = 0; f < kFoundations; ++f) sum[f] += s.foundation_scores[f];
            ++n;
        }
        json models = json::array();
        for (const auto& [tag, sn] : means) {
            json f = json::object();
            for (std::size_t k = 0; k < kFoundations; ++k)
                f[to_string(kAllFoundations[k])] = sn.first[k] / static_cast<double>(sn.second);
            models.push_back({{"model_tag", tag}, {"sheets", sn.second}, {"mean_scores", f}});
        }
        json j{{"sheets", table.sheets.size()}, {"models", models}};
        if (means.size() >= 2) {
            const auto tests = pairwise_foundation_tests(table.sheets, o.alpha, o.mfq_mode);
            j["tests"] = to_json(tests);
            for (const auto& w : tests.warnings) res.warnings.push_back(w);
        } else {
            res.warnings.push_back("mfq: fewer than two models with usable sheets; foundation tests skipped");
        }
        res.results["mfq"] = j;
    }

    if (wants("fdr")) {
        if (!o.pvalues) throw UsageError("fdr needs --pvalues");
        const auto p = read_pvalues(*o.pvalues);
        manifest.add_input(*o.pvalues);
        res.results["fdr"] = to_json(bh_fdr(p, o.alpha), p);
    }

    for (auto& [name, value] : res.results.items()) write_json(out / (name + ".json"), value);
    if (!res.row_errors.empty()) write_json(out / "errors.json", {{"row_errors", res.row_errors}});
    if (!res.warnings.empty()) write_json(out / "warnings.json", res.warnings);
    write_manifest(out, manifest);
    return res;
}

}  // namespace sara
