#include "megacurate/dedup.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "megacurate/hash.hpp"
#include "megacurate/kernels.hpp"
#include "megacurate/parallel.hpp"
#include "megacurate/unicode.hpp"

namespace megacurate {

namespace {

// Parameters of one MinHash permutation family: h_i(x) = a_i*x + b_i
// over the 2^64 ring, a_i odd so the map is a bijection.
struct MinHasher {
    std::vector<u64> a, b;
    explicit MinHasher(const DedupConfig& cfg) {
        a.reserve(cfg.num_hashes);
        b.reserve(cfg.num_hashes);
        for (u32 i = 0; i < cfg.num_hashes; ++i) {
            Rng rng = Rng::substream(cfg.seed, i);
            a.push_back(rng.next_u64() | 1);
            b.push_back(rng.next_u64());
        }
    }

    std::vector<u64> signature(const std::vector<u64>& shingle_hashes) const {
        std::vector<u64> sig(a.size(), ~0ull);
        for (u64 x : shingle_hashes)
            for (std::size_t i = 0; i < a.size(); ++i) {
                u64 h = a[i] * x + b[i];
                if (h < sig[i]) sig[i] = h;
            }
        return sig;
    }
};

std::vector<u64> shingle_hashes(std::string_view text, const DedupConfig& cfg) {
    std::vector<std::string> sh = text_shingles(text, cfg.shingle_size);
    if (sh.empty()) throw Error("minhash: text empty after normalization");
    std::vector<u64> xs;
    xs.reserve(sh.size());
    for (const auto& s : sh) xs.push_back(fnv1a64(s));
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return xs;
}

void require_sorted(const std::vector<PromptRecord>& records) {
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].id <= records[i - 1].id)
            throw IntegrityError("dedup input records must be sorted by unique id");
}

// Union-find over record indices with smallest-root wins, which equals
// smallest-id wins because records arrive sorted by id.
struct UnionFind {
    std::vector<u32> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<u32>(i);
    }
    u32 find(u32 x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void merge(u32 x, u32 y) {
        u32 rx = find(x), ry = find(y);
        if (rx == ry) return;
        if (rx < ry)
            parent[ry] = rx;
        else
            parent[rx] = ry;
    }
};

// Collapses union-find components into (survivors, groups).
DedupResult collect_components(const std::vector<PromptRecord>& records, UnionFind& uf,
                               DedupStage stage) {
    DedupResult out;
    std::unordered_map<u32, std::vector<u64>> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
        u32 root = uf.find(static_cast<u32>(i));
        if (root == i) out.survivors.push_back(records[i]);
        members[root].push_back(records[i].id);
    }
    std::vector<u32> roots;
    for (const auto& [root, ids] : members)
        if (ids.size() > 1) roots.push_back(root);
    std::sort(roots.begin(), roots.end());
    for (u32 root : roots) {
        DuplicateGroup g;
        g.stage = stage;
        g.member_ids = members[root];
        g.representative_id = records[root].id; // smallest id: root is min index
        out.groups.push_back(std::move(g));
    }
    return out;
}

} // namespace

void DedupConfig::validate() const {
    if (num_hashes == 0 || lsh_bands == 0 || num_hashes % lsh_bands != 0)
        throw ConfigError("dedup: num_hashes must be a positive multiple of lsh_bands");
    if (shingle_size == 0) throw ConfigError("dedup: shingle_size must be positive");
    if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0))
        throw ConfigError("dedup: jaccard_threshold must lie in (0, 1]");
    if (!(semantic_threshold > 0.0 && semantic_threshold <= 1.0))
        throw ConfigError("dedup: semantic_threshold must lie in (0, 1]");
}

std::string_view dedup_stage_name(DedupStage s) {
    switch (s) {
    case DedupStage::Exact: return "exact";
    case DedupStage::Fuzzy: return "fuzzy";
    case DedupStage::Semantic: return "semantic";
    }
    throw Error("unknown dedup stage");
}

std::vector<std::string> text_shingles(std::string_view text, u32 shingle_size) {
    std::string canon = unicode::normalize_text(text);
    std::vector<std::string_view> tokens;
    std::size_t start = 0;
    while (start < canon.size()) {
        std::size_t space = canon.find(' ', start);
        if (space == std::string::npos) space = canon.size();
        tokens.emplace_back(canon.data() + start, space - start);
        start = space + 1;
    }
    std::vector<std::string> out;
    if (tokens.empty()) return out;
    if (tokens.size() < shingle_size) {
        out.push_back(canon);
        return out;
    }
    out.reserve(tokens.size() - shingle_size + 1);
    for (std::size_t i = 0; i + shingle_size <= tokens.size(); ++i) {
        std::string s(tokens[i]);
        for (u32 k = 1; k < shingle_size; ++k) {
            s.push_back(' ');
            s.append(tokens[i + k]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<u64> minhash_signature(std::string_view text, const DedupConfig& cfg) {
    cfg.validate();
    return MinHasher(cfg).signature(shingle_hashes(text, cfg));
}

double signature_similarity(const std::vector<u64>& a, const std::vector<u64>& b) {
    if (a.size() != b.size() || a.empty())
        throw Error("signature_similarity: size mismatch or empty signatures");
    std::size_t match = 0;
    for (std::size_t i = 0; i < a.size(); ++i) match += (a[i] == b[i]);
    return static_cast<double>(match) / static_cast<double>(a.size());
}

DedupResult exact_dedup(const std::vector<PromptRecord>& records) {
    require_sorted(records);
    DedupResult out;
    std::unordered_map<std::string, std::size_t> first_by_key;
    std::unordered_map<std::size_t, std::vector<u64>> members;
    first_by_key.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        std::string key = unicode::normalize_text(records[i].text);
        auto [it, inserted] = first_by_key.emplace(std::move(key), i);
        if (inserted) {
            out.survivors.push_back(records[i]);
            members[i].push_back(records[i].id);
        } else {
            members[it->second].push_back(records[i].id);
        }
    }
    std::vector<std::size_t> firsts;
    for (const auto& [first, ids] : members)
        if (ids.size() > 1) firsts.push_back(first);
    std::sort(firsts.begin(), firsts.end());
    for (std::size_t first : firsts) {
        DuplicateGroup g;
        g.stage = DedupStage::Exact;
        g.representative_id = records[first].id;
        g.member_ids = members[first];
        out.groups.push_back(std::move(g));
    }
    return out;
}

DedupResult fuzzy_dedup(const std::vector<PromptRecord>& records, const DedupConfig& cfg) {
    cfg.validate();
    require_sorted(records);
    const std::size_t n = records.size();
    UnionFind uf(n);
    if (n == 0) return collect_components(records, uf, DedupStage::Fuzzy);

    // Signatures are independent per record: parallel by fixed blocks.
    MinHasher hasher(cfg);
    std::vector<std::vector<u64>> sigs(n);
    parallel_for_blocks(n, 256, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            sigs[i] = hasher.signature(shingle_hashes(records[i].text, cfg));
    });

    // Band buckets propose candidate pairs; the pair set is order-free.
    const u32 rows_per_band = cfg.num_hashes / cfg.lsh_bands;
    std::unordered_set<u64> seen_pairs;
    for (u32 band = 0; band < cfg.lsh_bands; ++band) {
        std::unordered_map<u64, std::vector<u32>> buckets;
        buckets.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            u64 key = fnv1a64(sigs[i].data() + band * rows_per_band,
                              rows_per_band * sizeof(u64), /*seed=*/band + 1);
            buckets[key].push_back(static_cast<u32>(i));
        }
        for (const auto& [key, bucket] : buckets) {
            for (std::size_t x = 0; x + 1 < bucket.size(); ++x)
                for (std::size_t y = x + 1; y < bucket.size(); ++y) {
                    u32 i = bucket[x], j = bucket[y];
                    u64 pair_key = (static_cast<u64>(i) << 32) | j;
                    if (!seen_pairs.insert(pair_key).second) continue;
                    if (uf.find(i) == uf.find(j)) continue;
                    if (signature_similarity(sigs[i], sigs[j]) >= cfg.jaccard_threshold)
                        uf.merge(i, j);
                }
        }
    }
    return collect_components(records, uf, DedupStage::Fuzzy);
}

DedupResult semantic_dedup(const std::vector<PromptRecord>& records,
                           const EmbeddingMatrix& embeddings, const DedupConfig& cfg) {
    cfg.validate();
    require_sorted(records);
    if (!embeddings.normalized)
        throw Error("semantic dedup requires unit-norm embeddings");

    auto row_of = [&](const PromptRecord& r, std::size_t position) -> const float* {
        std::size_t row = r.embedding_row ? *r.embedding_row : position;
        if (row >= embeddings.rows)
            throw Error("missing embedding row for record id " + std::to_string(r.id));
        return embeddings.row(row);
    };

    DedupResult out;
    const std::size_t dim = embeddings.dim;
    std::vector<float> packed; // survivor rows, contiguous for batch dots
    std::vector<std::size_t> survivor_index; // survivor slot -> records index
    std::unordered_map<std::size_t, std::vector<u64>> dropped_by_survivor;
    std::vector<double> dots;

    constexpr std::size_t kChunk = 1024;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const float* row = row_of(records[i], i);
        std::size_t hit = static_cast<std::size_t>(-1);
        std::size_t nsurv = survivor_index.size();
        for (std::size_t start = 0; start < nsurv && hit == static_cast<std::size_t>(-1);
             start += kChunk) {
            std::size_t len = std::min(kChunk, nsurv - start);
            dots.resize(len);
            kernels::dot_batch(row, packed.data() + start * dim, len, dim, dots.data());
            for (std::size_t k = 0; k < len; ++k)
                if (dots[k] >= cfg.semantic_threshold) {
                    hit = start + k;
                    break;
                }
        }
        if (hit == static_cast<std::size_t>(-1)) {
            survivor_index.push_back(i);
            packed.insert(packed.end(), row, row + dim);
            out.survivors.push_back(records[i]);
        } else {
            dropped_by_survivor[survivor_index[hit]].push_back(records[i].id);
        }
    }

    std::vector<std::size_t> reps;
    for (const auto& [rep, ids] : dropped_by_survivor) reps.push_back(rep);
    std::sort(reps.begin(), reps.end());
    for (std::size_t rep : reps) {
        DuplicateGroup g;
        g.stage = DedupStage::Semantic;
        g.representative_id = records[rep].id;
        g.member_ids.push_back(records[rep].id);
        const auto& dropped = dropped_by_survivor[rep];
        g.member_ids.insert(g.member_ids.end(), dropped.begin(), dropped.end());
        out.groups.push_back(std::move(g));
    }
    return out;
}

DedupPipelineResult run_dedup(const std::vector<PromptRecord>& records,
                              const EmbeddingMatrix& embeddings, const DedupConfig& cfg) {
    cfg.validate();
    // Pin embedding rows to input positions up front so filtering between
    // stages cannot silently shift which row a record points at.
    std::vector<PromptRecord> pinned = records;
    for (std::size_t i = 0; i < pinned.size(); ++i)
        if (!pinned[i].embedding_row) pinned[i].embedding_row = static_cast<u32>(i);

    DedupPipelineResult out;
    DedupResult exact = exact_dedup(pinned);
    out.exact_survivors = exact.survivors.size();
    DedupResult fuzzy = fuzzy_dedup(exact.survivors, cfg);
    out.fuzzy_survivors = fuzzy.survivors.size();
    DedupResult semantic = semantic_dedup(fuzzy.survivors, embeddings, cfg);
    out.semantic_survivors = semantic.survivors.size();

    out.survivors = std::move(semantic.survivors);
    out.groups = std::move(exact.groups);
    out.groups.insert(out.groups.end(), fuzzy.groups.begin(), fuzzy.groups.end());
    out.groups.insert(out.groups.end(), semantic.groups.begin(), semantic.groups.end());
    return out;
}

} // namespace megacurate
