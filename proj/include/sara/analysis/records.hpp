#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sara {

inline constexpr std::size_t kNumSchools = 8;

/// The eight ethical-school categories, loaded from a config list. Lookups
/// ignore case, spaces, underscores and hyphens, so "Act Utilitarianism",
/// "act_utilitarianism" and "ActUtilitarianism" name the same school.
class SchoolSet {
public:
    /// Seven named schools plus a configurable eighth label.
    static SchoolSet defaults(std::string eighth_label = "Other");
    /// One label per line; blank lines and `#` comments ignored.
    static SchoolSet from_file(const std::filesystem::path& path);

    explicit SchoolSet(std::vector<std::string> names);

    const std::string& name(std::size_t index) const { return names_.at(index); }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

    std::optional<std::size_t> find(std::string_view label) const;
    /// Throws ValidationError for unknown labels.
    std::size_t index(std::string_view label) const;

private:
    std::vector<std::string> names_;
    std::vector<std::string> keys_;
};

enum class ModelClass { Proprietary, Open };
enum class SteeringDirection { Kantian, Utilitarian, Unsteered };

std::string to_string(ModelClass c);
std::string to_string(SteeringDirection d);
ModelClass parse_model_class(std::string_view s);
SteeringDirection parse_direction(std::string_view s);

/// One (model, dilemma, repetition) response with the school each
/// classifier assigned to it (stored as SchoolSet indices).
struct ClassifiedResponse {
    std::string model_tag;
    ModelClass model_class = ModelClass::Open;
    std::string dilemma_id;
    int repetition = 0;
    std::map<std::string, std::size_t> school_by_classifier;
    std::optional<SteeringDirection> steering_direction;
};

struct RowError {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct RecordSet {
    std::vector<ClassifiedResponse> records;
    std::vector<RowError> errors;
};

/// Parses line-delimited JSON. Each bad line yields a RowError instead of
/// aborting the parse; duplicate repetitions per (model, dilemma, classifier,
/// steering direction) are reported against the later line.
RecordSet parse_records_jsonl(std::string_view text, const SchoolSet& schools);
RecordSet load_records_jsonl(const std::filesystem::path& path, const SchoolSet& schools);
std::string to_jsonl(const std::vector<ClassifiedResponse>& records, const SchoolSet& schools);

/// Lexicographically first classifier tag present in any record; empty if none.
std::string default_classifier(const std::vector<ClassifiedResponse>& records);
/// All classifier tags in lexicographic order.
std::vector<std::string> classifier_tags(const std::vector<ClassifiedResponse>& records);

}  // namespace sara
