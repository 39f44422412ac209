#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sara {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

/// Activations of one prompt at one layer, shaped (n_neurons, n_tokens).
/// Construction enforces the invariants: non-empty and every entry finite.
class ActivationMatrix {
public:
    explicit ActivationMatrix(MatrixF data, std::uint32_t layer = 0, std::string model_tag = {},
                              std::string prompt_tag = {});

    const MatrixF& data() const { return data_; }
    Eigen::Index n_neurons() const { return data_.rows(); }
    Eigen::Index n_tokens() const { return data_.cols(); }
    std::uint32_t layer() const { return layer_; }
    const std::string& model_tag() const { return model_tag_; }
    const std::string& prompt_tag() const { return prompt_tag_; }

    MatrixD to_double() const { return data_.cast<double>(); }

    friend bool operator==(const ActivationMatrix& a, const ActivationMatrix& b);

private:
    MatrixF data_;
    std::uint32_t layer_;
    std::string model_tag_;
    std::string prompt_tag_;
};

/// A3 (prompt), A1 (align) and A2 (repel). Token counts may differ; neuron
/// count and layer must agree.
struct SteeringTriple {
    ActivationMatrix prompt;
    ActivationMatrix align;
    ActivationMatrix repel;

    /// Throws ArgumentError when the matrices disagree on n_neurons or layer.
    void validate() const;
};

// ---------------------------------------------------------------------------
// .actdump interchange format (all integers and floats little-endian):
//
//   "SARA"            4 bytes magic
//   version           u32 (currently 1)
//   n_neurons         u64
//   n_tokens          u64
//   layer             u32
//   model_tag         u32 byte length + UTF-8 bytes
//   prompt_tag        u32 byte length + UTF-8 bytes
//   payload           n_neurons * n_tokens f32, row-major (neuron-major)
//
// The JSON mirror (.actdump.json) carries the same fields with `data` as a
// nested array of rows.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDumpVersion = 1;

std::string encode_dump(const ActivationMatrix& m);
ActivationMatrix decode_dump(std::string_view bytes);

std::string encode_dump_json(const ActivationMatrix& m);
ActivationMatrix decode_dump_json(std::string_view text);

/// Dispatches on extension: `*.json` uses the JSON mirror, anything else the
/// binary format.
ActivationMatrix load_dump(const std::filesystem::path& path);
void save_dump(const ActivationMatrix& m, const std::filesystem::path& path);

/// Low-level writer for callers that hold raw buffers (bindings, adapters).
/// Rejects non-finite values before anything touches the filesystem.
void save_dump_raw(const MatrixF& data, std::uint32_t layer, std::string_view model_tag,
                   std::string_view prompt_tag, const std::filesystem::path& path);

bool is_json_path(const std::filesystem::path& path);

}  // namespace sara
