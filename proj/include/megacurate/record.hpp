#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "megacurate/common.hpp"

namespace megacurate {

// Pipeline stages in forward order; a manifest's stage only ever advances.
enum class Stage { Raw, Deduped, Balanced, Paired, Generated };

enum class PromptKind { Content, Style };

enum class GenStatus { Pending, Done, Failed };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);
std::string_view kind_name(PromptKind k);
PromptKind parse_kind(std::string_view name);
std::string_view status_name(GenStatus s);
GenStatus parse_status(std::string_view name);

// One content or style prompt. `embedding_row` points into the manifest's
// embedding sidecar when one exists.
struct PromptRecord {
    u64 id = 0;
    PromptKind kind = PromptKind::Content;
    std::string text;
    std::string source_tag;
    std::optional<u32> embedding_row;

    bool operator==(const PromptRecord&) const = default;
};

// One (style prompt, content prompt) generation work item. Generation
// provenance (image_ref/steps/cfg_scale, or error) is filled in as the
// item moves Pending → Done/Failed.
struct StyleCombination {
    u64 combination_id = 0;
    u64 style_id = 0;
    u64 content_id = 0;
    u32 generation_seed = 0;
    GenStatus status = GenStatus::Pending;
    std::optional<std::string> image_ref;
    std::optional<u32> steps;
    std::optional<double> cfg_scale;
    std::optional<std::string> error;

    bool operator==(const StyleCombination&) const = default;
};

// Ordered record container for one pipeline stage. Stages up to Balanced
// hold prompts; Paired and later hold combinations.
struct Manifest {
    int schema_version = 1;
    Stage stage = Stage::Raw;
    std::vector<PromptRecord> prompts;
    std::vector<StyleCombination> combinations;

    bool holds_combinations() const { return stage >= Stage::Paired; }
    std::size_t count() const {
        return holds_combinations() ? combinations.size() : prompts.size();
    }
    // Sorts records by id and rejects duplicates (IntegrityError).
    void finalize();

    bool operator==(const Manifest&) const = default;
};

// Stable record identity: FNV-1a over the source tag plus the original
// index, so re-runs over the same inputs assign the same ids.
u64 make_record_id(std::string_view source_tag, u64 index);

// Stable combination identity from the two member ids.
u64 make_combination_id(u64 style_id, u64 content_id);

} // namespace megacurate
