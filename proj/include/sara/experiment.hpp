#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sara/analysis/profiles.hpp"
#include "sara/analysis/stats.hpp"
#include "sara/steering.hpp"
#include "sara/toylm.hpp"

namespace sara {

inline constexpr const char* kVersion = SARA_VERSION;

/// Exit codes of the command-line harness.
enum class ExitCode : int { Ok = 0, Failure = 1, Usage = 2, Io = 3 };

/// Usage errors map to exit code 2, IoError to 3, every other Error to 1.
ExitCode exit_code_for(const std::exception& e);

/// "14", "0..17", "0,6,12" or "all". Throws UsageError for malformed specs
/// or layers outside [0, n_layers).
std::vector<int> parse_layer_spec(const std::string& spec, int n_layers);

enum class DirectionChoice { Kantian, Utilitarian, Both };
DirectionChoice parse_direction_choice(const std::string& s);

/// Steering / sweep configuration. The Kantian direction aligns with
/// align_text and repels repel_text; the Utilitarian direction swaps them.
struct ExperimentConfig {
    Method method = Method::SARA;
    std::string layers = "14";
    DirectionChoice direction = DirectionChoice::Kantian;
    std::string prompt_text;
    std::string align_text;
    std::string repel_text;
    int samples = 5;
    int max_tokens = 32;
    double temperature = 0.8;
    std::uint64_t seed = 0;
    int n_layers = 18;
    std::optional<std::filesystem::path> checkpoint;
    PatchSpan span = PatchSpan::Continuous;
    double injection_coefficient = 1.0;
    std::filesystem::path output_dir;

    /// Throws UsageError unless samples >= 1, max_tokens >= 1,
    /// temperature >= 0, the prompts are non-empty and n_layers >= 3.
    void validate() const;
    ToyLm model() const;
    nlohmann::json to_json() const;
};

/// Defaults for the prompt texts, read from `<data_dir>/prompts`.
struct PromptAssets {
    std::string dilemma;
    std::string kantian;
    std::string utilitarian;
    static PromptAssets load(const std::filesystem::path& data_dir, const std::string& dilemma = "criminal_father");
};

/// Trailing whitespace removed.
std::string read_text_asset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Lambda CSV: header `neuron,lambda`, one row per neuron in order, values
// printed with 17 significant digits so the round trip is exact.
// ---------------------------------------------------------------------------
std::string encode_lambda_csv(const VectorD& lambda);
VectorD decode_lambda_csv(std::string_view text);
void save_lambda_csv(const VectorD& lambda, const std::filesystem::path& path);
VectorD load_lambda_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Provenance
// ---------------------------------------------------------------------------
struct Manifest {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::json parameters = nlohmann::json::object();
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // relative path -> sha256
    std::string timestamp;                       // UTC, ISO 8601

    void add_input(const std::filesystem::path& path);
    /// SHA-256 over the sorted input digests; changes iff some input byte does.
    std::string inputs_digest() const;
    nlohmann::json to_json() const;
};

/// SHA-256 over every regular file under `dir` (relative path and content,
/// sorted by path), skipping manifest.json.
std::string directory_digest(const std::filesystem::path& dir);

/// Dumps JSON, replacing invalid UTF-8 sequences.
std::string dump_json(const nlohmann::json& j, int indent = 1);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
/// Records every regular file under `dir` as an output, then writes manifest.json.
void write_manifest(const std::filesystem::path& dir, Manifest manifest);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------
struct SteerSummary {
    std::vector<std::pair<int, SteeringDirection>> result_sets;
    std::filesystem::path output_dir;
};

/// Writes, per (layer, direction) under layer_XX/<direction>/: prompt, align
/// and repel dumps, lambda.csv, steered.actdump and samples.jsonl; plus
/// unsteered.jsonl and manifest.json at the top level.
SteerSummary run_steer(const ExperimentConfig& cfg);

/// Writes sweep.json and sweep_schema.json plus manifest.json.
SweepReport run_sweep(const ExperimentConfig& cfg);

struct AnalyzeOptions {
    std::vector<std::string> analyses;  // fractions consistency ami transitions covariance mfq fdr
    std::optional<std::filesystem::path> records;
    std::optional<std::filesystem::path> schools;
    std::string classifier;
    std::optional<std::filesystem::path> labels_a;
    std::optional<std::filesystem::path> labels_b;
    std::vector<std::string> ami_classifiers;
    std::size_t surrogates = 1000;
    std::optional<std::filesystem::path> mfq_csv;
    std::optional<std::filesystem::path> mfq_key;
    ComparisonMode mfq_mode = ComparisonMode::Pairwise;
    std::optional<std::filesystem::path> pvalues;
    double alpha = 0.05;
    std::size_t bootstrap = 10000;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
};

struct AnalyzeResult {
    nlohmann::json results = nlohmann::json::object();  // analysis name -> result
    std::vector<std::string> row_errors;                // "<file>:<line>: message"
    std::vector<std::string> warnings;
};

bool is_known_analysis(const std::string& name);

/// Runs the selected analyses and writes <name>.json per analysis (plus CSV
/// plot data where tabular), errors.json when inputs had bad rows, and
/// manifest.json.
AnalyzeResult run_analyze(const AnalyzeOptions& options);

/// One label per line; blank lines skipped.
std::vector<std::string> read_label_file(const std::filesystem::path& path);
/// One p-value per line, or a CSV whose `p_value` column holds them.
std::vector<double> read_pvalues(const std::filesystem::path& path);

nlohmann::json to_json(const FractionTable& t, const SchoolSet& schools);
nlohmann::json to_json(const ConsistencyReport& r);
nlohmann::json to_json(const AmiReport& r, bool include_surrogates = false);
nlohmann::json to_json(const TransitionReport& r, const SchoolSet& schools);
nlohmann::json to_json(const CovarianceReport& r, const SchoolSet& schools);
nlohmann::json to_json(const FoundationTestReport& r);
nlohmann::json to_json(const FdrResult& r, const std::vector<double>& p);
nlohmann::json to_json(const SelectivityReport& r);
nlohmann::json to_json(const std::vector<MethodDeltaRow>& rows);
nlohmann::json to_json(const std::vector<SyntheticComparisonRow>& rows);
nlohmann::json inspect_dump(const ActivationMatrix& m, const std::string& bytes);

}  // namespace sara
