#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "sara/analysis/records.hpp"
#include "sara/errors.hpp"
#include "sara/experiment.hpp"
#include "sara/io.hpp"

using namespace sara;
namespace fs = std::filesystem;

#ifndef SARA_DEFAULT_DATA_DIR
#define SARA_DEFAULT_DATA_DIR "data"
#endif

namespace {

fs::path default_output_dir()
{
    if (const char* env = std::getenv("SARA_OUTPUT_DIR"); env && *env) return env;
    return "sara_out";
}

fs::path default_data_dir()
{
    if (const char* env = std::getenv("SARA_DATA_DIR"); env && *env) return env;
    return SARA_DEFAULT_DATA_DIR;
}

struct RunArgs {
    std::string method = "sara";
    std::string layers;
    std::string direction = "kantian";
    std::string dilemma = "criminal_father";
    std::string prompt, prompt_file, align, align_file, repel, repel_file;
    int samples = 5;
    int max_tokens = 32;
    double temperature = 0.8;
    std::uint64_t seed = 0;
    int n_layers = 18;
    std::string checkpoint;
    std::string span = "continuous";
    double coefficient = 1.0;
    std::string out;
};

void add_run_options(CLI::App* cmd, RunArgs& a)
{
    cmd->add_option("--method", a.method, "sara or actadd")->check(CLI::IsMember({"sara", "actadd"}));
    cmd->add_option("--layers", a.layers, "layer spec: 14, 0..17, 0,6,12 or all");
    cmd->add_option("--direction", a.direction, "kantian, utilitarian or both");
    cmd->add_option("--dilemma", a.dilemma, "bundled prompt asset name");
    cmd->add_option("--prompt", a.prompt, "prompt text (overrides --dilemma)");
    cmd->add_option("--prompt-file", a.prompt_file, "prompt text file");
    cmd->add_option("--align", a.align, "align text (default: Kantian prompt)");
    cmd->add_option("--align-file", a.align_file, "align text file");
    cmd->add_option("--repel", a.repel, "repel text (default: utilitarian prompt)");
    cmd->add_option("--repel-file", a.repel_file, "repel text file");
    cmd->add_option("--samples", a.samples, "samples per setting");
    cmd->add_option("--max-tokens", a.max_tokens, "tokens generated per sample");
    cmd->add_option("--temperature", a.temperature, "sampling temperature (0 = greedy)");
    cmd->add_option("--seed", a.seed, "model and sampling seed");
    cmd->add_option("--n-layers", a.n_layers, "toy model depth");
    cmd->add_option("--checkpoint", a.checkpoint, "toy model weights file");
    cmd->add_option("--span", a.span, "continuous or prompt")->check(CLI::IsMember({"continuous", "prompt"}));
    cmd->add_option("--coefficient", a.coefficient, "ActAdd injection coefficient");
    cmd->add_option("--out", a.out, "output directory (default $SARA_OUTPUT_DIR or ./sara_out)");
}

ExperimentConfig make_config(const RunArgs& a, const fs::path& data_dir, const std::string& default_layers)
{
    ExperimentConfig c;
    c.method = parse_method(a.method);
    c.layers = a.layers.empty() ? default_layers : a.layers;
    c.direction = parse_direction_choice(a.direction);
    auto text = [&](const std::string& inline_text, const std::string& file, const std::string& fallback) {
        if (!inline_text.empty()) return inline_text;
        if (!file.empty()) return read_text_asset(file);
        return fallback;
    };
    const auto dir = data_dir / "prompts";
    c.prompt_text = text(a.prompt, a.prompt_file, "");
    if (c.prompt_text.empty()) c.prompt_text = read_text_asset(dir / (a.dilemma + ".txt"));
    c.align_text = text(a.align, a.align_file, "");
    if (c.align_text.empty()) c.align_text = read_text_asset(dir / "kantian.txt");
    c.repel_text = text(a.repel, a.repel_file, "");
    if (c.repel_text.empty()) c.repel_text = read_text_asset(dir / "utilitarian.txt");
    c.samples = a.samples;
    c.max_tokens = a.max_tokens;
    c.temperature = a.temperature;
    c.seed = a.seed;
    c.n_layers = a.n_layers;
    if (!a.checkpoint.empty()) c.checkpoint = a.checkpoint;
    c.span = a.span == "prompt" ? PatchSpan::PromptOnly : PatchSpan::Continuous;
    c.injection_coefficient = a.coefficient;
    c.output_dir = a.out.empty() ? default_output_dir() : fs::path(a.out);
    return c;
}

void print_warnings(const std::vector<std::string>& warnings)
{
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Similarity-based activation steering and moral-profile analysis"};
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "TOML file mirroring the command-line flags");
    app.require_subcommand(1);
    std::string data_dir_arg;
    app.add_option("--data-dir", data_dir_arg, "bundled assets directory");

    RunArgs steer_args, sweep_args;
    auto* steer = app.add_subcommand("steer", "steer the toy model and write activation, lambda and sample artifacts");
    add_run_options(steer, steer_args);
    auto* sweep = app.add_subcommand("sweep", "steer at every selected layer in both directions and report by group");
    add_run_options(sweep, sweep_args);

    AnalyzeOptions an;
    std::vector<std::string> analyses;
    std::string records, schools, labels_a, labels_b, mfq_csv, mfq_key, pvalues, mfq_mode = "pairwise", an_out;
    auto* analyze = app.add_subcommand("analyze", "run analyses over classified responses, MFQ sheets or p-values");
    for (const char* name : {"fractions", "consistency", "ami", "transitions", "covariance", "mfq", "fdr"})
        analyze->add_flag_callback(std::string("--") + name, [&analyses, name] { analyses.push_back(name); },
                                   std::string("run the ") + name + " analysis");
    analyze->add_option("--analysis", analyses, "analysis names (repeatable)");
    analyze->add_option("--records", records, "classified responses (JSON lines)");
    analyze->add_option("--schools", schools, "school label list");
    analyze->add_option("--classifier", an.classifier, "classifier tag to use");
    analyze->add_option("--labels-a", labels_a, "first label file for ami");
    analyze->add_option("--labels-b", labels_b, "second label file for ami");
    analyze->add_option("--ami-classifiers", an.ami_classifiers, "two classifier tags compared by ami")->expected(2);
    analyze->add_option("--surrogates", an.surrogates, "ami shuffle surrogates");
    analyze->add_option("--mfq-csv", mfq_csv, "questionnaire answers");
    analyze->add_option("--mfq-key", mfq_key, "item-to-foundation key (JSON)");
    analyze->add_option("--mfq-mode", mfq_mode, "pairwise or one-vs-rest")
        ->check(CLI::IsMember({"pairwise", "one-vs-rest"}));
    analyze->add_option("--pvalues", pvalues, "p-values for fdr");
    analyze->add_option("--alpha", an.alpha, "false discovery rate");
    analyze->add_option("--bootstrap", an.bootstrap, "bootstrap resamples for consistency");
    analyze->add_option("--seed", an.seed, "seed for bootstrap and surrogates");
    analyze->add_option("--out", an_out, "output directory");

    std::string score_in, score_key, score_out;
    auto* mfq = app.add_subcommand("mfq-score", "score questionnaire sheets into foundation scores");
    mfq->add_option("input", score_in, "answers CSV")->required();
    mfq->add_option("--key", score_key, "item-to-foundation key (JSON)");
    mfq->add_option("--out", score_out, "scores CSV (default stdout)");

    std::vector<std::string> dumps;
    auto* inspect = app.add_subcommand("dump-inspect", "print header and summary statistics of activation dumps");
    inspect->add_option("files", dumps, "dump files")->required();

    std::string cmp_sara, cmp_actadd, cmp_schools, cmp_classifier, cmp_out;
    std::size_t synthetic = 0;
    std::uint64_t cmp_seed = 0;
    auto* compare = app.add_subcommand("compare-methods", "on-target and spillover per direction, SARA vs ActAdd");
    compare->add_option("--sara", cmp_sara, "classified SARA-steered responses");
    compare->add_option("--actadd", cmp_actadd, "classified ActAdd-steered responses");
    compare->add_option("--schools", cmp_schools, "school label list");
    compare->add_option("--classifier", cmp_classifier, "classifier tag to use");
    compare->add_option("--synthetic", synthetic, "ensemble size for the activation-level comparison");
    compare->add_option("--seed", cmp_seed, "seed for the synthetic ensemble");
    compare->add_option("--out", cmp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::Usage);
    }

    const fs::path data_dir = data_dir_arg.empty() ? default_data_dir() : fs::path(data_dir_arg);
    try {
        if (*steer) {
            const auto summary = run_steer(make_config(steer_args, data_dir, "14"));
            std::cout << "wrote " << summary.result_sets.size() << " result set(s) to " << summary.output_dir.string()
                      << "\n";
            return 0;
        }
        if (*sweep) {
            const auto cfg = make_config(sweep_args, data_dir, "all");
            const auto report = run_sweep(cfg);
            for (const auto& g : report.group_summaries)
                std::printf("%-5s %-11s layers %2d-%-2d changed %.3f |lambda| %.4f\n", to_string(g.group).c_str(),
                            to_string(g.direction).c_str(), g.first_layer, g.last_layer, g.changed_fraction,
                            g.lambda_abs_mean);
            return 0;
        }
        if (*analyze) {
            an.analyses = analyses;
            if (!records.empty()) an.records = records;
            if (!schools.empty()) an.schools = schools;
            if (!labels_a.empty()) an.labels_a = labels_a;
            if (!labels_b.empty()) an.labels_b = labels_b;
            if (!mfq_csv.empty()) an.mfq_csv = mfq_csv;
            if (!mfq_key.empty()) an.mfq_key = mfq_key;
            if (!pvalues.empty()) an.pvalues = pvalues;
            an.mfq_mode = mfq_mode == "pairwise" ? ComparisonMode::Pairwise : ComparisonMode::OneVsRest;
            an.output_dir = an_out.empty() ? default_output_dir() : fs::path(an_out);
            const auto res = run_analyze(an);
            std::cout << dump_json(res.results, 1) << "\n";
            print_warnings(res.warnings);
            for (const auto& e : res.row_errors) std::cerr << "error: " << e << "\n";
            return res.row_errors.empty() ? 0 : static_cast<int>(ExitCode::Failure);
        }
        if (*mfq) {
            const MfqKey key = score_key.empty() ? MfqKey::standard() : MfqKey::from_json_file(score_key);
            const auto table = load_mfq_csv(score_in, key);
            const auto csv = to_scores_csv(table.sheets);
            if (score_out.empty())
                std::cout << csv;
            else
                io::write_file_atomic(score_out, csv);
            for (const auto& e : table.errors) std::cerr << "error: line " << e.line << ": " << e.message << "\n";
            return table.errors.empty() ? 0 : static_cast<int>(ExitCode::Failure);
        }
        if (*inspect) {
            nlohmann::json all = nlohmann::json::array();
            for (const auto& f : dumps) {
                const auto bytes = io::read_file(f);
                const auto m = is_json_path(f) ? decode_dump_json(bytes) : decode_dump(bytes);
                auto info = inspect_dump(m, bytes);
                info["path"] = f;
                for (const auto& w : info["warnings"]) std::cerr << "warning: " << f << ": " << w.get<std::string>() << "\n";
                all.push_back(std::move(info));
            }
            std::cout << dump_json(dumps.size() == 1 ? all[0] : all, 1) << "\n";
            return 0;
        }
        if (*compare) {
            const fs::path out = cmp_out.empty() ? default_output_dir() : fs::path(cmp_out);
            Manifest manifest;
            manifest.command = "compare-methods";
            manifest.seed = cmp_seed;
            nlohmann::json doc = nlohmann::json::object();
            if (!cmp_sara.empty() || !cmp_actadd.empty()) {
                if (cmp_sara.empty() || cmp_actadd.empty()) throw UsageError("--sara and --actadd go together");
                const SchoolSet s = cmp_schools.empty() ? SchoolSet::defaults() : SchoolSet::from_file(cmp_schools);
                const auto rs = load_records_jsonl(cmp_sara, s);
                const auto ra = load_records_jsonl(cmp_actadd, s);
                manifest.add_input(cmp_sara);
                manifest.add_input(cmp_actadd);
                for (const auto& e : rs.errors) std::cerr << "error: " << cmp_sara << ":" << e.line << ": " << e.message << "\n";
                for (const auto& e : ra.errors) std::cerr << "error: " << cmp_actadd << ":" << e.line << ": " << e.message << "\n";
                const auto sel_s = steering_selectivity(rs.records, s, cmp_classifier);
                const auto sel_a = steering_selectivity(ra.records, s, cmp_classifier);
                doc["sara"] = to_json(sel_s);
                doc["actadd"] = to_json(sel_a);
                doc["delta"] = to_json(method_delta_table(sel_s, sel_a));
                print_warnings(sel_s.warnings);
                print_warnings(sel_a.warnings);
                if (!rs.errors.empty() || !ra.errors.empty()) {
                    write_json(out / "compare.json", doc);
                    write_manifest(out, manifest);
                    std::cout << dump_json(doc, 1) << "\n";
                    return static_cast<int>(ExitCode::Failure);
                }
            } else if (synthetic == 0) {
                throw UsageError("compare-methods needs --sara and --actadd, or --synthetic N");
            }
            if (synthetic > 0) {
                manifest.parameters["synthetic"] = synthetic;
                doc["synthetic"] = to_json(synthetic_method_comparison(synthetic, cmp_seed));
            }
            write_json(out / "compare.json", doc);
            write_manifest(out, manifest);
            std::cout << dump_json(doc, 1) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(exit_code_for(e));
    }
    return 0;
}
