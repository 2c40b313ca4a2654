#include "megacurate/record.hpp"

#include <algorithm>

#include "megacurate/hash.hpp"

namespace megacurate {

std::string_view stage_name(Stage s) {
    switch (s) {
    case Stage::Raw: return "raw";
    case Stage::Deduped: return "deduped";
    case Stage::Balanced: return "balanced";
    case Stage::Paired: return "paired";
    case Stage::Generated: return "generated";
    }
    throw Error("unknown stage value");
}

Stage parse_stage(std::string_view name) {
    if (name == "raw") return Stage::Raw;
    if (name == "deduped") return Stage::Deduped;
    if (name == "balanced") return Stage::Balanced;
    if (name == "paired") return Stage::Paired;
    if (name == "generated") return Stage::Generated;
    throw Error("unknown stage name: " + std::string(name));
}

std::string_view kind_name(PromptKind k) {
    return k == PromptKind::Content ? "content" : "style";
}

PromptKind parse_kind(std::string_view name) {
    if (name == "content") return PromptKind::Content;
    if (name == "style") return PromptKind::Style;
    throw Error("unknown prompt kind: " + std::string(name));
}

std::string_view status_name(GenStatus s) {
    switch (s) {
    case GenStatus::Pending: return "pending";
    case GenStatus::Done: return "done";
    case GenStatus::Failed: return "failed";
    }
    throw Error("unknown status value");
}

GenStatus parse_status(std::string_view name) {
    if (name == "pending") return GenStatus::Pending;
    if (name == "done") return GenStatus::Done;
    if (name == "failed") return GenStatus::Failed;
    throw Error("unknown generation status: " + std::string(name));
}

void Manifest::finalize() {
    if (holds_combinations()) {
        std::sort(combinations.begin(), combinations.end(),
                  [](const StyleCombination& a, const StyleCombination& b) {
                      return a.combination_id < b.combination_id;
                  });
        for (std::size_t i = 1; i < combinations.size(); ++i)
            if (combinations[i].combination_id == combinations[i - 1].combination_id)
                throw IntegrityError("duplicate combination id " +
                                     std::to_string(combinations[i].combination_id));
    } else {
        std::sort(prompts.begin(), prompts.end(),
                  [](const PromptRecord& a, const PromptRecord& b) { return a.id < b.id; });
        for (std::size_t i = 1; i < prompts.size(); ++i)
            if (prompts[i].id == prompts[i - 1].id)
                throw IntegrityError("duplicate record id " +
                                     std::to_string(prompts[i].id));
    }
}

u64 make_record_id(std::string_view source_tag, u64 index) {
    u64 h = fnv1a64(source_tag);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(index >> (8 * i));
    return fnv1a64(bytes, 8, h);
}

u64 make_combination_id(u64 style_id, u64 content_id) {
    u64 h = fnv1a64(std::string_view("pair"));
    unsigned char bytes[16];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(style_id >> (8 * i));
        bytes[8 + i] = static_cast<unsigned char>(content_id >> (8 * i));
    }
    return fnv1a64(bytes, 16, h);
}

} // namespace megacurate
