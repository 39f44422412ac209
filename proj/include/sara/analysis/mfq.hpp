#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sara/analysis/records.hpp"

namespace sara {

inline constexpr std::size_t kMfqItems = 32;
inline constexpr std::size_t kMfqScoredItems = 30;
inline constexpr std::size_t kFoundations = 5;

enum class Foundation { HarmCare, FairnessReciprocity, IngroupLoyalty, AuthorityRespect, PuritySanctity };

std::string to_string(Foundation f);
inline constexpr std::array<Foundation, kFoundations> kAllFoundations{
    Foundation::HarmCare, Foundation::FairnessReciprocity, Foundation::IngroupLoyalty, Foundation::AuthorityRespect,
    Foundation::PuritySanctity};

/// Item-to-foundation keying (1-based item numbers over the 32-item form)
/// and the catch-item rule.
struct MfqKey {
    std::array<std::array<int, 6>, kFoundations> items{};
    int math_item = 6;      // catch: must be answered low
    int good_item = 22;     // catch: must be answered high
    int math_max = 2;       // flag when math answer > math_max
    int good_min = 3;       // flag when good answer < good_min

    /// The MFQ-30 keying.
    static MfqKey standard();
    static MfqKey from_json_file(const std::filesystem::path& path);

    /// Throws ValidationError unless the key covers 30 distinct items that
    /// exclude both catch items.
    void validate() const;
};

struct MfqSheet {
    std::string model_tag;
    int repetition = 0;
    std::array<int, kMfqItems> answers{};               // raw, item 1..32
    std::array<double, kFoundations> foundation_scores{};
    bool catch_flagged = false;

    /// The 30 scored answers in questionnaire order (catch items removed).
    std::array<int, kMfqScoredItems> item_scores(const MfqKey& key = MfqKey::standard()) const;
};

/// Scores one questionnaire. Accepts either all 32 answers or the 30 scored
/// items (catch items omitted, no catch check). Answers must lie in [0, 5];
/// violations throw ValidationError.
MfqSheet mfq_score(std::string model_tag, int repetition, std::span<const int> answers,
                   const MfqKey& key = MfqKey::standard());

struct MfqRowError {
    std::size_t line = 0;
    std::string message;
};

struct MfqTable {
    std::vector<MfqSheet> sheets;
    std::vector<MfqRowError> errors;
};

/// CSV with header model_tag,repetition,item_1..item_32.
MfqTable parse_mfq_csv(std::string_view text, const MfqKey& key = MfqKey::standard());
MfqTable load_mfq_csv(const std::filesystem::path& path, const MfqKey& key = MfqKey::standard());
std::string to_mfq_csv(const std::vector<MfqSheet>& sheets);
/// model_tag,repetition,catch_flagged,<five foundation columns>
std::string to_scores_csv(const std::vector<MfqSheet>& sheets);

}  // namespace sara
