#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "megacurate/dedup.hpp"
#include "megacurate/hash.hpp"
#include "megacurate/parallel.hpp"
#include "oracles.hpp"

using namespace megacurate;

namespace {

std::vector<PromptRecord> make_records(const std::vector<std::string>& texts) {
    std::vector<PromptRecord> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        PromptRecord r;
        r.id = 100 + i; // ascending ids in input order
        r.kind = PromptKind::Content;
        r.text = texts[i];
        r.source_tag = "test";
        out.push_back(r);
    }
    return out;
}

// Independent shingle extraction for oracle Jaccard: whitespace tokens,
// 3-token windows joined by single spaces.
std::set<std::string> oracle_shingles(const std::string& text, std::size_t k = 3) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n') {
            if (!cur.empty()) tokens.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    std::set<std::string> out;
    if (tokens.size() < k) {
        std::string all;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) all.push_back(' ');
            all += tokens[i];
        }
        if (!all.empty()) out.insert(all);
        return out;
    }
    for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
        std::string s = tokens[i];
        for (std::size_t j = 1; j < k; ++j) {
            s.push_back(' ');
            s += tokens[i + j];
        }
        out.insert(s);
    }
    return out;
}

std::string word(Rng& rng) {
    std::string w;
    for (int i = 0; i < 6; ++i) w.push_back(static_cast<char>('a' + rng.next_below(26)));
    return w;
}

std::string sentence(Rng& rng, int words) {
    std::string s;
    for (int i = 0; i < words; ++i) {
        if (i) s.push_back(' ');
        s += word(rng);
    }
    return s;
}

// Unit vector + deterministic rotation toward a perpendicular direction,
// giving an exact target cosine.
std::vector<float> rotate_toward(const std::vector<float>& base, Rng& rng, double cosine) {
    std::size_t dim = base.size();
    std::vector<double> perp(dim);
    for (auto& x : perp) x = rng.next_normal();
    double d = 0;
    for (std::size_t i = 0; i < dim; ++i) d += perp[i] * base[i];
    double n2 = 0;
    for (std::size_t i = 0; i < dim; ++i) {
        perp[i] -= d * base[i];
        n2 += perp[i] * perp[i];
    }
    double inv = 1.0 / std::sqrt(n2);
    double s = std::sqrt(1.0 - cosine * cosine);
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i)
        out[i] = static_cast<float>(cosine * base[i] + s * perp[i] * inv);
    return out;
}

std::vector<float> random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n2 = 0;
    for (auto& x : v) {
        x = rng.next_normal();
        n2 += x * x;
    }
    double inv = 1.0 / std::sqrt(n2);
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

} // namespace

TEST_CASE("exact dedup keeps the earliest id per canonical text") {
    auto recs = make_records({"a cat", "a cat", "a dog"});
    DedupResult r = exact_dedup(recs);
    REQUIRE(r.survivors.size() == 2);
    CHECK(r.survivors[0].id == 100);
    CHECK(r.survivors[1].id == 102);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].representative_id == 100);
    CHECK(r.groups[0].member_ids == std::vector<u64>{100, 101});
    CHECK(r.groups[0].stage == DedupStage::Exact);
}

TEST_CASE("exact dedup collapses whitespace variants") {
    auto recs = make_records({"a  cat", "a cat"});
    CHECK(exact_dedup(recs).survivors.size() == 1);
    // Composed vs decomposed accents collapse too.
    auto recs2 = make_records({"caf\xC3\xA9 scene", "cafe\xCC\x81 scene"});
    CHECK(exact_dedup(recs2).survivors.size() == 1);
}

TEST_CASE("exact dedup over 10k strings with 500 planted duplicates") {
    Rng rng(808);
    std::vector<std::string> texts;
    for (int i = 0; i < 9500; ++i) texts.push_back(sentence(rng, 12));
    // Plant 500 exact duplicates of random originals.
    for (int i = 0; i < 500; ++i)
        texts.push_back(texts[rng.next_below(9500)]);
    auto r = exact_dedup(make_records(texts));
    CHECK(r.survivors.size() == 9500);
    std::size_t dropped = 0;
    for (const auto& g : r.groups) dropped += g.member_ids.size() - 1;
    CHECK(dropped == 500);
}

TEST_CASE("minhash signatures: identity, disjoint vocab, estimator quality") {
    DedupConfig cfg;
    auto s1 = minhash_signature("the quick brown fox jumps over the lazy dog", cfg);
    auto s2 = minhash_signature("the quick  brown fox jumps over the lazy dog", cfg);
    REQUIRE(s1.size() == cfg.num_hashes);
    CHECK(s1 == s2); // normalization-equal texts share a signature
    CHECK(signature_similarity(s1, s2) == 1.0);

    Rng rng(31337);
    std::string a = sentence(rng, 40), b = sentence(rng, 40);
    CHECK(signature_similarity(minhash_signature(a, cfg), minhash_signature(b, cfg)) <= 0.05);
}

TEST_CASE("minhash estimate lands within ±0.1 of true Jaccard 0.5 in ≥95% of trials") {
    // Single-token shingles make the shingle set equal the token set, so
    // the true Jaccard is exactly constructible: 100 shared + 50/50 unique.
    DedupConfig cfg;
    cfg.shingle_size = 1;
    int ok = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::substream(4242, t);
        std::vector<std::string> shared, ua, ub;
        for (int i = 0; i < 100; ++i) shared.push_back(word(rng) + "s");
        for (int i = 0; i < 50; ++i) ua.push_back(word(rng) + "a");
        for (int i = 0; i < 50; ++i) ub.push_back(word(rng) + "b");
        auto join = [](const std::vector<std::string>& xs, const std::vector<std::string>& ys) {
            std::string s;
            for (const auto& x : xs) {
                if (!s.empty()) s.push_back(' ');
                s += x;
            }
            for (const auto& y : ys) {
                s.push_back(' ');
                s += y;
            }
            return s;
        };
        double est = signature_similarity(minhash_signature(join(shared, ua), cfg),
                                          minhash_signature(join(shared, ub), cfg));
        if (std::abs(est - 0.5) <= 0.1) ++ok;
    }
    CHECK(ok >= trials * 95 / 100);
}

TEST_CASE("minhash estimator is unbiased over random pairs") {
    DedupConfig cfg;
    Rng rng(616);
    double sum_est = 0.0, sum_true = 0.0;
    const int pairs = 1000;
    for (int t = 0; t < pairs; ++t) {
        // Random overlap fraction per pair.
        int shared = static_cast<int>(rng.next_below(30));
        std::string common = sentence(rng, shared + 3);
        std::string a = common + " " + sentence(rng, static_cast<int>(rng.next_below(20)) + 3);
        std::string b = common + " " + sentence(rng, static_cast<int>(rng.next_below(20)) + 3);
        sum_est += signature_similarity(minhash_signature(a, cfg), minhash_signature(b, cfg));
        sum_true += oracle::jaccard_exact(oracle_shingles(a), oracle_shingles(b));
    }
    CHECK(std::abs(sum_est / pairs - sum_true / pairs) <= 0.02);
}

TEST_CASE("fuzzy dedup merges a 30-token pair differing in the final token") {
    Rng rng(5150);
    std::string base = sentence(rng, 29);
    std::string a = base + " ending";
    std::string b = base + " different";
    // True Jaccard over 3-shingles: 27 of 29 shared (J ≈ 0.93).
    double tj = oracle::jaccard_exact(oracle_shingles(a), oracle_shingles(b));
    CHECK(tj >= 0.9);
    DedupConfig cfg;
    auto r = fuzzy_dedup(make_records({a, b, sentence(rng, 30)}), cfg);
    CHECK(r.survivors.size() == 2);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].member_ids == std::vector<u64>{100, 101});
}

TEST_CASE("fuzzy dedup leaves an unrelated corpus alone") {
    Rng rng(2718);
    std::vector<std::string> texts;
    for (int i = 0; i < 100; ++i) texts.push_back(sentence(rng, 25));
    auto r = fuzzy_dedup(make_records(texts), DedupConfig{});
    CHECK(r.survivors.size() == 100);
    CHECK(r.groups.empty());
}

TEST_CASE("fuzzy dedup chains transitive merges into one group") {
    Rng rng(1234);
    std::vector<std::string> mid;
    for (int i = 0; i < 28; ++i) mid.push_back(word(rng));
    auto join = [&](const std::string& first, const std::string& last) {
        std::string s = first;
        for (const auto& w : mid) {
            s.push_back(' ');
            s += w;
        }
        s.push_back(' ');
        s += last;
        return s;
    };
    std::string a = join("alpha", "omega");
    std::string b = join("alpha", "psi"); // differs from a in last token
    std::string c = join("beta", "psi");  // differs from b in first token
    DedupConfig cfg;
    auto r = fuzzy_dedup(make_records({a, b, c}), cfg);
    CHECK(r.survivors.size() == 1);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].member_ids == std::vector<u64>{100, 101, 102});
    CHECK(r.groups[0].representative_id == 100);
}

TEST_CASE("fuzzy merges are sound against the exact Jaccard oracle") {
    // 400 mutated copies of 40 bases: merged pairs must have true Jaccard
    // within MinHash estimation slack of the threshold.
    Rng rng(99119);
    std::vector<std::string> texts;
    std::vector<std::vector<std::string>> base_tokens;
    for (int b = 0; b < 40; ++b) {
        std::vector<std::string> tokens;
        for (int i = 0; i < 30; ++i) tokens.push_back(word(rng));
        base_tokens.push_back(tokens);
    }
    for (int i = 0; i < 400; ++i) {
        auto tokens = base_tokens[i % 40];
        if (rng.next_below(2) == 0) tokens[tokens.size() - 1] = word(rng); // light mutation
        std::string s;
        for (const auto& t : tokens) {
            if (!s.empty()) s.push_back(' ');
            s += t;
        }
        texts.push_back(s);
    }
    DedupConfig cfg;
    auto recs = make_records(texts);
    auto r = fuzzy_dedup(recs, cfg);
    for (const auto& g : r.groups)
        for (std::size_t x = 0; x + 1 < g.member_ids.size(); ++x)
            for (std::size_t y = x + 1; y < g.member_ids.size(); ++y) {
                const auto& ta = texts[g.member_ids[x] - 100];
                const auto& tb = texts[g.member_ids[y] - 100];
                double tj = oracle::jaccard_exact(oracle_shingles(ta), oracle_shingles(tb));
                CHECK(tj >= cfg.jaccard_threshold - 0.15);
            }
}

TEST_CASE("semantic dedup trivial cases") {
    auto recs = make_records({"first", "second", "third"});
    EmbeddingMatrix emb(3, 4, true);
    // Rows: e0, e0 (identical), e1 (orthogonal).
    emb.row(0)[0] = 1.0f;
    emb.row(1)[0] = 1.0f;
    emb.row(2)[1] = 1.0f;
    DedupConfig cfg;
    auto r = semantic_dedup(recs, emb, cfg);
    REQUIRE(r.survivors.size() == 2);
    CHECK(r.survivors[0].id == 100);
    CHECK(r.survivors[1].id == 102);
    REQUIRE(r.groups.size() == 1);
    CHECK(r.groups[0].member_ids == std::vector<u64>{100, 101});
}

TEST_CASE("semantic dedup matches the exhaustive oracle on planted near-duplicates") {
    const std::size_t dim = 128;
    Rng rng(7777);
    std::vector<std::vector<float>> rows;
    for (int i = 0; i < 1900; ++i) rows.push_back(random_unit(rng, dim));
    // Plant 100 rotations at cosine 0.972 to random bases, appended after.
    for (int i = 0; i < 100; ++i) {
        const auto& base = rows[rng.next_below(1900)];
        rows.push_back(rotate_toward(base, rng, 0.972));
    }
    EmbeddingMatrix emb(static_cast<u32>(rows.size()), dim, true);
    std::vector<float> flat;
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), emb.row(i));
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < rows.size(); ++i) texts.push_back("t" + std::to_string(i));

    DedupConfig cfg; // semantic_threshold 0.95
    auto r = semantic_dedup(make_records(texts), emb, cfg);
    CHECK(r.survivors.size() == 1900);

    auto dropped_oracle = oracle::semantic_drop_exhaustive(emb.data, dim, cfg.semantic_threshold);
    std::set<u64> dropped_ids;
    for (const auto& g : r.groups)
        for (std::size_t k = 1; k < g.member_ids.size(); ++k) dropped_ids.insert(g.member_ids[k]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CAPTURE(i);
        CHECK(dropped_ids.count(100 + i) == (dropped_oracle[i] ? 1u : 0u));
    }
}

TEST_CASE("semantic dedup reports a missing embedding row") {
    auto recs = make_records({"a", "b"});
    recs[1].embedding_row = 5;
    EmbeddingMatrix emb(2, 4, true);
    emb.row(0)[0] = 1.0f;
    emb.row(1)[1] = 1.0f;
    CHECK_THROWS_WITH_AS(semantic_dedup(recs, emb, DedupConfig{}),
                         doctest::Contains("101"), Error);
    EmbeddingMatrix raw(2, 4, false);
    CHECK_THROWS_AS(semantic_dedup(recs, raw, DedupConfig{}), Error);
}

TEST_CASE("full dedup pipeline: monotone counts, disjoint groups, thread determinism") {
    Rng rng(31415);
    std::vector<std::string> texts;
    for (int i = 0; i < 300; ++i) texts.push_back(sentence(rng, 20));
    for (int i = 0; i < 40; ++i) texts.push_back(texts[rng.next_below(300)]); // exact dups
    for (int i = 0; i < 30; ++i) { // near dups for the fuzzy stage
        std::string t = texts[rng.next_below(300)];
        t += " tail";
        texts.push_back(t);
    }
    auto recs = make_records(texts);
    const std::size_t dim = 32;
    // Embeddings: identical texts share a row direction (hash-seeded),
    // so the semantic stage sees structure consistent with the text.
    EmbeddingMatrix emb(static_cast<u32>(recs.size()), dim);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        Rng vr(fnv1a64(recs[i].text));
        auto v = random_unit(vr, dim);
        std::copy(v.begin(), v.end(), emb.row(i));
    }
    emb = l2_normalize(emb);

    DedupConfig cfg;
    set_thread_count(1);
    auto r1 = run_dedup(recs, emb, cfg);
    set_thread_count(4);
    auto r4 = run_dedup(recs, emb, cfg);
    set_thread_count(0); // back to default

    CHECK(r1.exact_survivors <= recs.size());
    CHECK(r1.fuzzy_survivors <= r1.exact_survivors);
    CHECK(r1.semantic_survivors <= r1.fuzzy_survivors);
    CHECK(r1.survivors.size() == r1.semantic_survivors);

    // Thread count never changes the outcome.
    REQUIRE(r1.survivors.size() == r4.survivors.size());
    for (std::size_t i = 0; i < r1.survivors.size(); ++i)
        CHECK(r1.survivors[i] == r4.survivors[i]);
    REQUIRE(r1.groups.size() == r4.groups.size());
    for (std::size_t i = 0; i < r1.groups.size(); ++i) {
        CHECK(r1.groups[i].representative_id == r4.groups[i].representative_id);
        CHECK(r1.groups[i].member_ids == r4.groups[i].member_ids);
    }

    // Every dropped id appears in exactly one group as a non-representative
    // member (a representative may be absorbed again at a later stage).
    std::set<u64> survivor_ids;
    for (const auto& s : r1.survivors) survivor_ids.insert(s.id);
    std::map<u64, int> drop_count;
    for (const auto& g : r1.groups) {
        CHECK(std::find(g.member_ids.begin(), g.member_ids.end(), g.representative_id) !=
              g.member_ids.end());
        for (u64 id : g.member_ids)
            if (id != g.representative_id) {
                CHECK(!survivor_ids.count(id));
                ++drop_count[id];
            }
    }
    CHECK(drop_count.size() == recs.size() - r1.survivors.size());
    for (const auto& [id, count] : drop_count) CHECK(count == 1);
}
