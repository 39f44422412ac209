#include "sara/analysis/mfq.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sara/errors.hpp"
#include "sara/io.hpp"

namespace sara {

std::string to_string(Foundation f)
{
    switch (f) {
    case Foundation::HarmCare: return "HarmCare";
    case Foundation::FairnessReciprocity: return "FairnessReciprocity";
    case Foundation::IngroupLoyalty: return "IngroupLoyalty";
    case Foundation::AuthorityRespect: return "AuthorityRespect";
    case Foundation::PuritySanctity: return "PuritySanctity";
    }
    return "?";
}

MfqKey MfqKey::standard()
{
    MfqKey k;
    k.items = {{{1, 7, 12, 17, 23, 28},
                {2, 8, 13, 18, 24, 29},
                {3, 9, 14, 19, 25, 30},
                {4, 10, 15, 20, 26, 31},
                {5, 11, 16, 21, 27, 32}}};
    return k;
}

MfqKey MfqKey::from_json_file(const std::filesystem::path& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    MfqKey k;
    try {
        const auto& f = j.at("foundations");
        for (std::size_t i = 0; i < kFoundations; ++i) {
            const auto items = f.at(to_string(kAllFoundations[i])).get<std::vector<int>>();
            if (items.size() != 6)
                throw ValidationError(to_string(kAllFoundations[i]) + " must list exactly 6 items");
            std::copy(items.begin(), items.end(), k.items[i].begin());
        }
        const auto& c = j.at("catch");
        k.math_item = c.at("math_item").get<int>();
        k.good_item = c.at("good_item").get<int>();
        k.math_max = c.value("math_max", k.math_max);
        k.good_min = c.value("good_min", k.good_min);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    k.validate();
    return k;
}

void MfqKey::validate() const
{
    std::set<int> seen;
    for (const auto& f : items)
        for (int i : f) {
            if (i < 1 || i > static_cast<int>(kMfqItems))
                throw ValidationError("MFQ item " + std::to_string(i) + " out of range 1..32");
            if (i == math_item || i == good_item)
                throw ValidationError("MFQ item " + std::to_string(i) + " is a catch item");
            if (!seen.insert(i).second) throw ValidationError("MFQ item " + std::to_string(i) + " keyed twice");
        }
    if (math_item == good_item || math_item < 1 || good_item < 1 || math_item > 32 || good_item > 32)
        throw ValidationError("invalid MFQ catch items");
}

std::array<int, kMfqScoredItems> MfqSheet::item_scores(const MfqKey& key) const
{
    std::array<int, kMfqScoredItems> out{};
    std::size_t k = 0;
    for (int item = 1; item <= static_cast<int>(kMfqItems); ++item)
        if (item != key.math_item && item != key.good_item) out[k++] = answers[static_cast<std::size_t>(item - 1)];
    return out;
}

MfqSheet mfq_score(std::string model_tag, int repetition, std::span<const int> answers, const MfqKey& key)
{
    if (answers.size() != kMfqItems && answers.size() != kMfqScoredItems)
        throw ValidationError("MFQ sheet needs 32 or 30 answers, got " + std::to_string(answers.size()));
    for (std::size_t i = 0; i < answers.size(); ++i)
        if (answers[i] < 0 || answers[i] > 5)
            throw ValidationError("MFQ answer " + std::to_string(i + 1) + " = " + std::to_string(answers[i]) +
                                " outside [0, 5]");

    MfqSheet s;
    s.model_tag = std::move(model_tag);
    s.repetition = repetition;
    if (answers.size() == kMfqItems) {
        std::copy(answers.begin(), answers.end(), s.answers.begin());
        const int math = s.answers[static_cast<std::size_t>(key.math_item - 1)];
        const int good = s.answers[static_cast<std::size_t>(key.good_item - 1)];
        s.catch_flagged = math > key.math_max || good < key.good_min;
    } else {
        // Catch items absent: fill with passing values.
        std::size_t k = 0;
        for (int item = 1; item <= static_cast<int>(kMfqItems); ++item) {
            auto& slot = s.answers[static_cast<std::size_t>(item - 1)];
            if (item == key.math_item) slot = 0;
            else if (item == key.good_item) slot = 5;
            else slot = answers[k++];
        }
    }
    for (std::size_t f = 0; f < kFoundations; ++f) {
        double sum = 0.0;
        for (int item : key.items[f]) sum += s.answers[static_cast<std::size_t>(item - 1)];
        s.foundation_scores[f] = sum / 6.0;
    }
    return s;
}

namespace {

std::vector<std::string> split_csv(std::string_view line)
{
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cell += '"', ++i;
            else if (c == '"') quoted = false;
            else cell += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(std::move(cell));
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return out;
}

std::optional<int> parse_int(const std::string& s)
{
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace

MfqTable parse_mfq_csv(std::string_view text, const MfqKey& key)
{
    MfqTable table;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv(line);
        if (header.empty()) {
            header = cells;
            bool ok = header.size() == 2 + kMfqItems && header[0] == "model_tag" && header[1] == "repetition";
            for (std::size_t i = 0; ok && i < kMfqItems; ++i) ok = header[2 + i] == "item_" + std::to_string(i + 1);
            if (!ok) throw FormatError("MFQ CSV header must be model_tag,repetition,item_1..item_32");
            continue;
        }
        if (cells.size() != header.size()) {
            table.errors.push_back({lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                                std::to_string(cells.size())});
            continue;
        }
        const auto rep = parse_int(cells[1]);
        if (!rep) {
            table.errors.push_back({lineno, "repetition '" + cells[1] + "' is not an integer"});
            continue;
        }
        std::vector<int> answers;
        std::string bad;
        for (std::size_t i = 0; i < kMfqItems; ++i) {
            const auto v = parse_int(cells[2 + i]);
            if (!v) {
                bad = "item_" + std::to_string(i + 1) + " '" + cells[2 + i] + "' is not an integer";
                break;
            }
            answers.push_back(*v);
        }
        if (!bad.empty()) {
            table.errors.push_back({lineno, bad});
            continue;
        }
        try {
            table.sheets.push_back(mfq_score(cells[0], *rep, answers, key));
        } catch (const ValidationError& e) {
            table.errors.push_back({lineno, e.what()});
        }
    }
    if (header.empty()) throw FormatError("MFQ CSV is empty");
    return table;
}

MfqTable load_mfq_csv(const std::filesystem::path& path, const MfqKey& key)
{
    return parse_mfq_csv(io::read_file(path), key);
}

std::string to_mfq_csv(const std::vector<MfqSheet>& sheets)
{
    std::string out = "model_tag,repetition";
    for (std::size_t i = 1; i <= kMfqItems; ++i) out += ",item_" + std::to_string(i);
    out += '\n';
    for (const auto& s : sheets) {
        out += csv_field(s.model_tag) + ',' + std::to_string(s.repetition);
        for (int a : s.answers) out += ',' + std::to_string(a);
        out += '\n';
    }
    return out;
}

std::string to_scores_csv(const std::vector<MfqSheet>& sheets)
{
    std::string out = "model_tag,repetition,catch_flagged";
    for (auto f : kAllFoundations) out += ',' + to_string(f);
    out += '\n';
    char buf[32];
    for (const auto& s : sheets) {
        out += csv_field(s.model_tag) + ',' + std::to_string(s.repetition) + ',' + (s.catch_flagged ? "1" : "0");
        for (double v : s.foundation_scores) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace sara
