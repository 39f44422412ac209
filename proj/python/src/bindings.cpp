#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sara/analysis/mfq.hpp"
#include "sara/analysis/profiles.hpp"
#include "sara/analysis/stats.hpp"
#include "sara/errors.hpp"
#include "sara/experiment.hpp"
#include "sara/linalg.hpp"
#include "sara/steering.hpp"
#include "sara/toylm.hpp"

namespace py = pybind11;
using namespace sara;

namespace {

py::dict result_dict(const SteeringResult& r)
{
    py::dict d;
    d["steered"] = r.steered.data();
    d["lambda"] = r.lambda;
    d["method"] = to_string(r.method);
    d["n_comp"] = r.n_comp;
    if (r.sim_align.size()) {
        d["sim_align"] = r.sim_align.values;
        d["sim_repel"] = r.sim_repel.values;
    }
    if (r.added) d["added"] = *r.added;
    return d;
}

ActivationMatrix as_matrix(const MatrixF& m)
{
    return ActivationMatrix(m);
}

SteeringResult scaling_patch(const ActivationMatrix& prompt, const VectorD& lambda)
{
    if (lambda.size() != prompt.n_neurons())
        throw ArgumentError("lambda has " + std::to_string(lambda.size()) + " entries, expected " +
                            std::to_string(prompt.n_neurons()));
    MatrixF scaled = prompt.data();
    for (Eigen::Index j = 0; j < scaled.rows(); ++j)
        for (Eigen::Index t = 0; t < scaled.cols(); ++t)
            scaled(j, t) = static_cast<float>(static_cast<double>(scaled(j, t)) * (1.0 + lambda(j)));
    return SteeringResult{ActivationMatrix(scaled, prompt.layer()), lambda, {}, {}, Method::SARA, 0, std::nullopt};
}

PatchSpan parse_span(const std::string& s)
{
    if (s == "continuous") return PatchSpan::Continuous;
    if (s == "prompt") return PatchSpan::PromptOnly;
    throw ArgumentError("span must be 'continuous' or 'prompt'");
}

// Byte-level samples are not necessarily valid UTF-8.
py::list texts(const std::vector<Tokens>& outs)
{
    py::list t;
    for (const auto& o : outs) t.append(py::bytes(to_text(o)));
    return t;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Similarity-based activation steering, a toy transformer and moral-profile analysis";
    m.attr("__version__") = kVersion;

    auto base = py::register_exception<Error>(m, "SaraError", PyExc_RuntimeError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<TruncationError>(m, "TruncationError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    // Activation dumps
    m.def(
        "load_dump",
        [](const std::filesystem::path& path) {
            const auto a = load_dump(path);
            py::dict d;
            d["data"] = a.data();
            d["layer"] = a.layer();
            d["model_tag"] = a.model_tag();
            d["prompt_tag"] = a.prompt_tag();
            return d;
        },
        py::arg("path"), "Read a .actdump (or .json mirror) into a dict with a (neurons, tokens) float32 array.");
    m.def(
        "save_dump",
        [](const MatrixF& data, const std::filesystem::path& path, std::uint32_t layer, const std::string& model_tag,
           const std::string& prompt_tag) { save_dump_raw(data, layer, model_tag, prompt_tag, path); },
        py::arg("data"), py::arg("path"), py::arg("layer") = 0, py::arg("model_tag") = "", py::arg("prompt_tag") = "");
    m.def("load_lambda_csv", &load_lambda_csv, py::arg("path"));
    m.def("save_lambda_csv", &save_lambda_csv, py::arg("lambda_"), py::arg("path"));

    // Steering
    m.def(
        "sara_steer",
        [](const MatrixF& prompt, const MatrixF& align, const MatrixF& repel) {
            return result_dict(sara_steer(SteeringTriple{as_matrix(prompt), as_matrix(align), as_matrix(repel)}));
        },
        py::arg("prompt"), py::arg("align"), py::arg("repel"));
    m.def(
        "actadd_steer",
        [](const MatrixF& prompt, const MatrixF& target, const MatrixF& away, double coefficient) {
            return result_dict(actadd_steer(as_matrix(prompt), ActAddSpec{as_matrix(target), as_matrix(away), coefficient}));
        },
        py::arg("prompt"), py::arg("target"), py::arg("away"), py::arg("coefficient") = 1.0);
    m.def(
        "svd_reduce",
        [](const MatrixD& a, Eigen::Index n_comp) {
            const auto r = svd_reduce(a, n_comp);
            return py::make_tuple(r.data, r.singular_values, r.right_vectors);
        },
        py::arg("matrix"), py::arg("n_comp"), "Returns (reduced, singular_values, right_vectors).");
    m.def(
        "rowwise_cosine", [](const MatrixD& a, const MatrixD& b) { return rowwise_cosine(a, b).values; }, py::arg("a"),
        py::arg("b"));
    m.def(
        "synthetic_method_comparison",
        [](std::size_t members, std::uint64_t seed) {
            py::list rows;
            for (const auto& r : synthetic_method_comparison(members, seed)) {
                py::dict d;
                d["direction"] = to_string(r.direction);
                d["method"] = to_string(r.method);
                d["on_target_gain"] = r.mean.on_target_gain;
                d["spillover"] = r.mean.spillover;
                d["repel_gain"] = r.mean.repel_gain;
                rows.append(d);
            }
            return rows;
        },
        py::arg("members"), py::arg("seed") = 0);

    // Toy model
    py::class_<ToyLm>(m, "ToyLm")
        .def(py::init([](int n_layers, int d_model, int n_heads, int n_ctx, std::uint64_t seed, double temperature) {
                 ToyLmConfig c;
                 c.n_layers = n_layers;
                 c.d_model = d_model;
                 c.n_heads = n_heads;
                 c.n_ctx = n_ctx;
                 c.seed = seed;
                 c.temperature = temperature;
                 return ToyLm::init(c);
             }),
             py::arg("n_layers") = 18, py::arg("d_model") = 64, py::arg("n_heads") = 4, py::arg("n_ctx") = 256,
             py::arg("seed") = 0, py::arg("temperature") = 0.8)
        .def_static("load", &ToyLm::load, py::arg("path"))
        .def("save", &ToyLm::save, py::arg("path"))
        .def_property_readonly("n_layers", [](const ToyLm& lm) { return lm.config().n_layers; })
        .def_property_readonly("d_model", [](const ToyLm& lm) { return lm.config().d_model; })
        .def(
            "capture",
            [](const ToyLm& lm, const std::string& prompt, int layer) {
                return lm.capture_activations(to_tokens(prompt), layer).data();
            },
            py::arg("prompt"), py::arg("layer"), "Residual stream after block `layer`, shaped (d_model, n_tokens).")
        .def(
            "generate",
            [](const ToyLm& lm, const std::string& prompt, int max_tokens, int samples) {
                return texts(lm.generate(to_tokens(prompt), max_tokens, samples));
            },
            py::arg("prompt"), py::arg("max_tokens") = 32, py::arg("samples") = 5)
        .def(
            "generate_with_lambda",
            [](const ToyLm& lm, const std::string& prompt, int layer, const VectorD& lambda, int max_tokens,
               int samples, const std::string& span) {
                const Tokens toks = to_tokens(prompt);
                HookPoint hook{layer, HookMode::Patch, scaling_patch(lm.capture_activations(toks, layer), lambda),
                               parse_span(span)};
                return texts(lm.generate_steered(toks, hook, max_tokens, samples));
            },
            py::arg("prompt"), py::arg("layer"), py::arg("lambda_"), py::arg("max_tokens") = 32,
            py::arg("samples") = 5, py::arg("span") = "continuous",
            "Generate with every neuron at `layer` scaled by (1 + lambda).")
        .def(
            "first_token_distribution",
            [](const ToyLm& lm, const std::string& prompt, std::optional<std::pair<int, VectorD>> patch) {
                const Tokens toks = to_tokens(prompt);
                if (!patch) return ToyLm::distribution(lm.next_token_logits(toks), lm.config().temperature);
                HookPoint hook{patch->first, HookMode::Patch,
                               scaling_patch(lm.capture_activations(toks, patch->first), patch->second)};
                return ToyLm::distribution(lm.next_token_logits(toks, &hook), lm.config().temperature);
            },
            py::arg("prompt"), py::arg("patch") = py::none(), "patch: optional (layer, lambda).");

    m.def(
        "layer_groups",
        [](int n_layers) {
            std::vector<std::tuple<std::string, int, int>> out;
            for (const auto& g : layer_groups(n_layers)) out.emplace_back(to_string(g.group), g.first, g.last);
            return out;
        },
        py::arg("n_layers"));

    // Analysis
    m.def("consistency_percent", [](const std::vector<std::size_t>& labels) { return consistency_percent(labels); },
          py::arg("labels"));
    m.def("encode_labels", &encode_labels, py::arg("labels"));
    m.def(
        "adjusted_mutual_information",
        [](const std::vector<int>& a, const std::vector<int>& b) { return adjusted_mutual_information(a, b); },
        py::arg("a"), py::arg("b"));
    m.def(
        "ami_agreement",
        [](const std::vector<int>& a, const std::vector<int>& b, std::size_t n_surrogates, std::uint64_t seed) {
            const auto r = ami_agreement(a, b, n_surrogates, seed);
            py::dict d;
            d["ami"] = r.ami;
            d["expected_mutual_information"] = r.expected_mutual_information;
            d["surrogate_mean"] = r.surrogate_mean;
            d["surrogate_p01"] = r.surrogate_p01;
            d["surrogate_p99"] = r.surrogate_p99;
            d["surrogates"] = r.surrogates;
            return d;
        },
        py::arg("a"), py::arg("b"), py::arg("n_surrogates") = 1000, py::arg("seed") = 0);
    m.def(
        "bh_fdr",
        [](const std::vector<double>& p, double alpha) {
            const auto r = bh_fdr(p, alpha);
            return py::make_tuple(std::vector<bool>(r.rejected.begin(), r.rejected.end()), r.adjusted);
        },
        py::arg("p_values"), py::arg("alpha") = 0.05, "Returns (rejected, adjusted).");
    m.def(
        "mann_whitney",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = mann_whitney(a, b);
            py::dict d;
            d["u"] = r.u;
            d["rank_biserial"] = r.rank_biserial;
            d["p_value"] = r.p_value;
            d["exact"] = r.exact;
            return d;
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "mfq_score",
        [](const std::vector<int>& answers) {
            const auto s = mfq_score("", 0, answers);
            py::dict d;
            for (std::size_t f = 0; f < kFoundations; ++f) d[py::str(to_string(kAllFoundations[f]))] = s.foundation_scores[f];
            d["catch_flagged"] = s.catch_flagged;
            return d;
        },
        py::arg("answers"), "Foundation scores of 32 (or 30) answers in [0, 5].");
    m.def(
        "population_covariance", [](const Eigen::MatrixXd& obs) { return population_covariance(obs); },
        py::arg("observations"));
}
