#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "megacurate/record.hpp"

namespace megacurate {

struct PairingConfig {
    u32 n_contents_per_style = 8;
    u64 seed = 0;
    // 170K styles x 8 draws exceed any realistic content pool, so reuse
    // across styles is the default; contents stay distinct within a style
    // either way.
    bool allow_content_reuse_across_styles = true;

    // Throws ConfigError unless 1 <= n <= content_pool_size.
    void validate(std::size_t content_pool_size) const;
};

// For each style, samples n distinct content prompts and emits one Pending
// work item per (style, content) pair. Per-style draws use substreams keyed
// by style id, so results are independent of style order. Returns exactly
// |styles| * n combinations with no duplicate (style_id, content_id).
std::vector<StyleCombination> make_combinations(const std::vector<PromptRecord>& styles,
                                                const std::vector<PromptRecord>& contents,
                                                const PairingConfig& cfg);

// The line that separates content text from style text in a combined
// generation prompt.
inline constexpr std::string_view kPromptSeparator = "——";

// "content\n--\nstyle" with the separator line above. A line in either text
// that would read as the separator is escaped with a leading backslash
// (warning logged), keeping composition injective and round-trippable.
// Throws Error if either text is empty.
std::string compose_prompt(std::string_view style_text, std::string_view content_text);

struct SplitPrompt {
    std::string content;
    std::string style;
};

// Inverse of compose_prompt: splits on the first unescaped separator line
// and removes one level of escaping from both parts.
SplitPrompt split_prompt(std::string_view combined);

// Resume support for re-running the pairing stage: takes `fresh` as the
// plan but keeps the completed rows (status Done, with their generation
// provenance) from `existing`, matched by combination_id.
std::vector<StyleCombination> merge_combinations(const std::vector<StyleCombination>& existing,
                                                 const std::vector<StyleCombination>& fresh);

} // namespace megacurate
