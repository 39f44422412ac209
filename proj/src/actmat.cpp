#include "sara/actmat.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "sara/errors.hpp"
#include "sara/io.hpp"

namespace sara {

namespace {

constexpr std::string_view kMagic = "SARA";

void check_finite(const MatrixF& data)
{
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            if (!std::isfinite(data(i, j)))
                throw DataError("non-finite activation at (" + std::to_string(i) + ", " + std::to_string(j) +
                                ")");
}

void check_shape(Eigen::Index rows, Eigen::Index cols)
{
    if (rows < 1 || cols < 1)
        throw ArgumentError("activation matrix must be at least 1x1, got " + std::to_string(rows) + "x" +
                            std::to_string(cols));
}

std::string encode(const MatrixF& data, std::uint32_t layer, std::string_view model_tag,
                   std::string_view prompt_tag)
{
    io::ByteWriter w;
    w.buffer().reserve(40 + model_tag.size() + prompt_tag.size() + 4 * static_cast<std::size_t>(data.size()));
    w.bytes(kMagic);
    w.u32(kDumpVersion);
    w.u64(static_cast<std::uint64_t>(data.rows()));
    w.u64(static_cast<std::uint64_t>(data.cols()));
    w.u32(layer);
    w.str(model_tag);
    w.str(prompt_tag);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j) w.f32(data(i, j));
    return w.take();
}

}  // namespace

ActivationMatrix::ActivationMatrix(MatrixF data, std::uint32_t layer, std::string model_tag, std::string prompt_tag)
    : data_(std::move(data)), layer_(layer), model_tag_(std::move(model_tag)), prompt_tag_(std::move(prompt_tag))
{
    check_shape(data_.rows(), data_.cols());
    check_finite(data_);
}

bool operator==(const ActivationMatrix& a, const ActivationMatrix& b)
{
    return a.layer_ == b.layer_ && a.model_tag_ == b.model_tag_ && a.prompt_tag_ == b.prompt_tag_ &&
           a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() && a.data_ == b.data_;
}

void SteeringTriple::validate() const
{
    if (align.n_neurons() != prompt.n_neurons() || repel.n_neurons() != prompt.n_neurons())
        throw ArgumentError("steering triple neuron counts differ: prompt " + std::to_string(prompt.n_neurons()) +
                            ", align " + std::to_string(align.n_neurons()) + ", repel " +
                            std::to_string(repel.n_neurons()));
    if (align.layer() != prompt.layer() || repel.layer() != prompt.layer())
        throw ArgumentError("steering triple matrices come from different layers");
}

std::string encode_dump(const ActivationMatrix& m)
{
    return encode(m.data(), m.layer(), m.model_tag(), m.prompt_tag());
}

ActivationMatrix decode_dump(std::string_view bytes)
{
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
        throw FormatError("not an activation dump: bad magic");

    io::ByteReader r(bytes.substr(kMagic.size()));
    std::uint32_t version = 0;
    std::uint64_t rows = 0, cols = 0;
    std::uint32_t layer = 0;
    std::string model_tag, prompt_tag;
    try {
        version = r.u32();
        rows = r.u64();
        cols = r.u64();
        layer = r.u32();
        model_tag = r.str();
        prompt_tag = r.str();
    } catch (const TruncationError& e) {
        throw FormatError(std::string("malformed dump header: ") + e.what());
    }
    if (version != kDumpVersion) throw FormatError("unsupported dump version " + std::to_string(version));
    if (rows == 0 || cols == 0) throw FormatError("dump header declares an empty matrix");

    constexpr auto kMax = static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max());
    if (rows > kMax || cols > kMax || rows * cols > kMax)
        throw FormatError("dump header declares an implausible shape");

    const std::uint64_t expected = rows * cols * 4;
    if (r.remaining() != expected)
        throw TruncationError("payload holds " + std::to_string(r.remaining() / 4) + " floats but header declares " +
                              std::to_string(rows) + "x" + std::to_string(cols));

    MatrixF data(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j) data(i, j) = r.f32();
    check_finite(data);
    return ActivationMatrix(std::move(data), layer, std::move(model_tag), std::move(prompt_tag));
}

std::string encode_dump_json(const ActivationMatrix& m)
{
    nlohmann::json j;
    j["format"] = "SARA";
    j["version"] = kDumpVersion;
    j["n_neurons"] = m.n_neurons();
    j["n_tokens"] = m.n_tokens();
    j["layer"] = m.layer();
    j["model_tag"] = m.model_tag();
    j["prompt_tag"] = m.prompt_tag();
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.n_neurons(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index t = 0; t < m.n_tokens(); ++t) row.push_back(m.data()(i, t));
        rows.push_back(std::move(row));
    }
    j["data"] = std::move(rows);
    return j.dump(1) + "\n";
}

ActivationMatrix decode_dump_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("invalid JSON dump: ") + e.what());
    }
    try {
        if (j.contains("format") && j.at("format") != "SARA") throw FormatError("JSON dump has wrong format tag");
        if (j.contains("version") && j.at("version").get<std::uint32_t>() != kDumpVersion)
            throw FormatError("unsupported JSON dump version");
        const auto& rows = j.at("data");
        if (!rows.is_array() || rows.empty() || !rows.front().is_array() || rows.front().empty())
            throw FormatError("JSON dump `data` must be a non-empty array of rows");
        const auto n = static_cast<Eigen::Index>(rows.size());
        const auto t = static_cast<Eigen::Index>(rows.front().size());
        if (j.contains("n_neurons") && j.at("n_neurons").get<Eigen::Index>() != n)
            throw TruncationError("JSON dump row count does not match n_neurons");
        if (j.contains("n_tokens") && j.at("n_tokens").get<Eigen::Index>() != t)
            throw TruncationError("JSON dump column count does not match n_tokens");

        MatrixF data(n, t);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != t)
                throw TruncationError("JSON dump row " + std::to_string(i) + " has the wrong length");
            for (Eigen::Index c = 0; c < t; ++c) {
                const auto& v = row[static_cast<std::size_t>(c)];
                if (!v.is_number()) throw DataError("JSON dump entry is not a finite number");
                data(i, c) = v.get<float>();
            }
        }
        check_finite(data);
        return ActivationMatrix(std::move(data), j.value("layer", std::uint32_t{0}),
                                j.value("model_tag", std::string{}), j.value("prompt_tag", std::string{}));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed JSON dump: ") + e.what());
    }
}

bool is_json_path(const std::filesystem::path& path)
{
    return path.extension() == ".json";
}

ActivationMatrix load_dump(const std::filesystem::path& path)
{
    const auto bytes = io::read_file(path);
    if (is_json_path(path)) return decode_dump_json(bytes);
    return decode_dump(bytes);
}

void save_dump(const ActivationMatrix& m, const std::filesystem::path& path)
{
    io::write_file_atomic(path, is_json_path(path) ? encode_dump_json(m) : encode_dump(m));
}

void save_dump_raw(const MatrixF& data, std::uint32_t layer, std::string_view model_tag,
                   std::string_view prompt_tag, const std::filesystem::path& path)
{
    check_shape(data.rows(), data.cols());
    check_finite(data);
    if (is_json_path(path)) {
        save_dump(ActivationMatrix(data, layer, std::string(model_tag), std::string(prompt_tag)), path);
        return;
    }
    io::write_file_atomic(path, encode(data, layer, model_tag, prompt_tag));
}

}  // namespace sara
