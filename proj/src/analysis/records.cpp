#include "sara/analysis/records.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "sara/errors.hpp"
#include "sara/io.hpp"

namespace sara {

namespace {

std::string normalize(std::string_view label)
{
    std::string key;
    for (char c : label) {
        if (c == ' ' || c == '_' || c == '-' || c == '\t') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return key;
}

}  // namespace

SchoolSet SchoolSet::defaults(std::string eighth_label)
{
    return SchoolSet({"Deontology", "Act Utilitarianism", "Rule Utilitarianism", "Virtue Ethics",
                      "Prima Facie Duties", "Theory of Rights", "Ethical Altruism", std::move(eighth_label)});
}

SchoolSet SchoolSet::from_file(const std::filesystem::path& path)
{
    std::istringstream in(io::read_file(path));
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        names.push_back(line.substr(first, last - first + 1));
    }
    return SchoolSet(std::move(names));
}

SchoolSet::SchoolSet(std::vector<std::string> names) : names_(std::move(names))
{
    if (names_.size() != kNumSchools)
        throw ValidationError("school list must contain exactly " + std::to_string(kNumSchools) + " labels, got " +
                              std::to_string(names_.size()));
    for (const auto& n : names_) {
        auto key = normalize(n);
        if (key.empty()) throw ValidationError("empty school label");
        if (std::find(keys_.begin(), keys_.end(), key) != keys_.end())
            throw ValidationError("duplicate school label: " + n);
        keys_.push_back(std::move(key));
    }
}

std::optional<std::size_t> SchoolSet::find(std::string_view label) const
{
    const auto key = normalize(label);
    for (std::size_t i = 0; i < keys_.size(); ++i)
        if (keys_[i] == key) return i;
    return std::nullopt;
}

std::size_t SchoolSet::index(std::string_view label) const
{
    if (auto i = find(label)) return *i;
    throw ValidationError("unknown ethical school: " + std::string(label));
}

std::string to_string(ModelClass c)
{
    return c == ModelClass::Proprietary ? "proprietary" : "open";
}

std::string to_string(SteeringDirection d)
{
    switch (d) {
    case SteeringDirection::Kantian: return "Kantian";
    case SteeringDirection::Utilitarian: return "Utilitarian";
    case SteeringDirection::Unsteered: return "Unsteered";
    }
    return "Unsteered";
}

ModelClass parse_model_class(std::string_view s)
{
    const auto key = normalize(s);
    if (key == "proprietary" || key == "closed") return ModelClass::Proprietary;
    if (key == "open" || key == "openweights") return ModelClass::Open;
    throw ValidationError("unknown model_class: " + std::string(s));
}

SteeringDirection parse_direction(std::string_view s)
{
    const auto key = normalize(s);
    if (key == "kantian") return SteeringDirection::Kantian;
    if (key == "utilitarian") return SteeringDirection::Utilitarian;
    if (key == "unsteered" || key == "none") return SteeringDirection::Unsteered;
    throw ValidationError("unknown steering_direction: " + std::string(s));
}

RecordSet parse_records_jsonl(std::string_view text, const SchoolSet& schools)
{
    RecordSet out;
    std::set<std::tuple<std::string, std::string, std::string, int, int>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (end == text.size()) break;
            continue;
        }

        try {
            const auto j = nlohmann::json::parse(line);
            ClassifiedResponse r;
            r.model_tag = j.at("model_tag").get<std::string>();
            r.model_class = parse_model_class(j.at("model_class").get<std::string>());
            r.dilemma_id = j.at("dilemma_id").get<std::string>();
            r.repetition = j.at("repetition").get<int>();
            if (r.repetition < 0) throw ValidationError("repetition must be >= 0");
            for (const auto& [tag, label] : j.at("school_by_classifier").items())
                r.school_by_classifier[tag] = schools.index(label.get<std::string>());
            if (r.school_by_classifier.empty()) throw ValidationError("record carries no classifier label");
            if (auto it = j.find("steering_direction"); it != j.end() && !it->is_null())
                r.steering_direction = parse_direction(it->get<std::string>());

            const int dir = r.steering_direction ? static_cast<int>(*r.steering_direction) : -1;
            for (const auto& [tag, _] : r.school_by_classifier) {
                if (!seen.emplace(r.model_tag, r.dilemma_id, tag, r.repetition, dir).second)
                    throw ValidationError("duplicate repetition " + std::to_string(r.repetition) + " for (" +
                                          r.model_tag + ", " + r.dilemma_id + ", " + tag + ")");
            }
            out.records.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            out.errors.push_back({line_no, e.what()});
        } catch (const Error& e) {
            out.errors.push_back({line_no, e.what()});
        }
        if (end == text.size()) break;
    }
    return out;
}

RecordSet load_records_jsonl(const std::filesystem::path& path, const SchoolSet& schools)
{
    return parse_records_jsonl(io::read_file(path), schools);
}

std::string to_jsonl(const std::vector<ClassifiedResponse>& records, const SchoolSet& schools)
{
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["model_tag"] = r.model_tag;
        j["model_class"] = to_string(r.model_class);
        j["dilemma_id"] = r.dilemma_id;
        j["repetition"] = r.repetition;
        auto labels = nlohmann::json::object();
        for (const auto& [tag, school] : r.school_by_classifier) labels[tag] = schools.name(school);
        j["school_by_classifier"] = std::move(labels);
        if (r.steering_direction) j["steering_direction"] = to_string(*r.steering_direction);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<std::string> classifier_tags(const std::vector<ClassifiedResponse>& records)
{
    std::set<std::string> tags;
    for (const auto& r : records)
        for (const auto& [tag, _] : r.school_by_classifier) tags.insert(tag);
    return {tags.begin(), tags.end()};
}

std::string default_classifier(const std::vector<ClassifiedResponse>& records)
{
    auto tags = classifier_tags(records);
    return tags.empty() ? std::string{} : tags.front();
}

}  // namespace sara
