#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "megacurate/embedding.hpp"
#include "megacurate/record.hpp"

namespace megacurate {

struct DedupConfig {
    u32 shingle_size = 3;       // tokens per shingle
    u32 num_hashes = 256;       // MinHash permutations
    u32 lsh_bands = 32;         // signature bands for candidate proposal
    double jaccard_threshold = 0.8;
    double semantic_threshold = 0.95;
    u64 seed = 0x5eed;          // permutation seed; part of the signature identity

    // Throws ConfigError unless num_hashes divides into lsh_bands evenly
    // and both thresholds lie in (0, 1].
    void validate() const;
};

enum class DedupStage { Exact, Fuzzy, Semantic };

std::string_view dedup_stage_name(DedupStage s);

// One merged component: every member collapsed into the representative.
// The representative is the smallest member id and is itself a member.
struct DuplicateGroup {
    u64 representative_id = 0;
    std::vector<u64> member_ids;
    DedupStage stage = DedupStage::Exact;
};

struct DedupResult {
    std::vector<PromptRecord> survivors;
    std::vector<DuplicateGroup> groups;
};

// Tokenize-and-window shingle extraction over the canonical text key.
// Texts shorter than shingle_size tokens yield one whole-text shingle.
std::vector<std::string> text_shingles(std::string_view text, u32 shingle_size);

// MinHash signature: num_hashes independent permutation minima over the
// FNV-hashed shingle set. Deterministic given (text, config seed).
// Throws Error if the text is empty after normalization.
std::vector<u64> minhash_signature(std::string_view text, const DedupConfig& cfg);

// Fraction of matching signature positions — the Jaccard estimator.
double signature_similarity(const std::vector<u64>& a, const std::vector<u64>& b);

// Stage 1: collapse records whose canonical text keys are identical.
// Records must be sorted by id (manifest order); earliest id survives.
DedupResult exact_dedup(const std::vector<PromptRecord>& records);

// Stage 2: LSH banding proposes candidates; pairs whose estimated
// Jaccard clears the threshold merge via union-find (smallest id wins).
DedupResult fuzzy_dedup(const std::vector<PromptRecord>& records, const DedupConfig& cfg);

// Stage 3: greedy scan in id order; a record is dropped when its cosine
// to any earlier survivor reaches the threshold. Embeddings must be
// unit-norm with one row per record (embedding_row or positional).
DedupResult semantic_dedup(const std::vector<PromptRecord>& records,
                           const EmbeddingMatrix& embeddings, const DedupConfig& cfg);

struct DedupPipelineResult {
    std::vector<PromptRecord> survivors;
    std::vector<DuplicateGroup> groups; // all three stages, in stage order
    std::size_t exact_survivors = 0;
    std::size_t fuzzy_survivors = 0;
    std::size_t semantic_survivors = 0;
};

// Runs exact → fuzzy → semantic. Survivor counts are non-increasing and
// every dropped id lands in exactly one group.
DedupPipelineResult run_dedup(const std::vector<PromptRecord>& records,
                              const EmbeddingMatrix& embeddings, const DedupConfig& cfg);

} // namespace megacurate
