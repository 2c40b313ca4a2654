#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "megacurate/clients.hpp"
#include "megacurate/embedding.hpp"
#include "megacurate/pairing.hpp"

namespace fs = std::filesystem;
using namespace megacurate;

namespace {

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() /
                     ("megacurate_clients_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> sorted_pixels(const PpmImage& img) {
    std::vector<unsigned char> px = img.pixels;
    // Sort whole RGB triples so the multiset comparison is per-pixel.
    std::vector<std::array<unsigned char, 3>> triples(px.size() / 3);
    for (std::size_t i = 0; i < triples.size(); ++i)
        triples[i] = {px[3 * i], px[3 * i + 1], px[3 * i + 2]};
    std::sort(triples.begin(), triples.end());
    for (std::size_t i = 0; i < triples.size(); ++i)
        for (int c = 0; c < 3; ++c) px[3 * i + c] = triples[i][c];
    return px;
}

double feature_cosine(const std::vector<float>& a, const std::vector<float>& b) {
    return cosine_similarity({a.data(), a.size()}, {b.data(), b.size()});
}

} // namespace

TEST_CASE("templates: content-addressed ids and asset fidelity") {
    const InstructionTemplate& st = style_template();
    const InstructionTemplate& ct = content_template();
    CHECK(st.name == "style_caption");
    CHECK(ct.name == "content_caption");
    CHECK(st.version.size() == 16);
    CHECK(st.id() == st.name + "@" + st.version);
    CHECK(st.id() != ct.id());
    CHECK(&template_by_id(st.id()) == &st);
    CHECK(&template_by_id(ct.id()) == &ct);
    CHECK(&template_for(CaptionMode::Style) == &st);
    CHECK(&template_for(CaptionMode::Content) == &ct);
    CHECK_THROWS_AS(template_by_id("style_caption@0000000000000000"), Error);

    CHECK(st.text.find("In the style of {artistic style}") != std::string::npos);
    CHECK(ct.text.find("Do not include any color descriptions") != std::string::npos);

    // The embedded text is generated from the asset files at configure
    // time; verify the shipped assets are what this binary carries.
    CHECK(slurp(fs::path(MEGACURATE_ASSET_DIR) / "templates/style_caption.txt") == st.text);
    CHECK(slurp(fs::path(MEGACURATE_ASSET_DIR) / "templates/content_caption.txt") == ct.text);
}

TEST_CASE("caption validation: skeleton prefix and banned lexicon") {
    const auto& banned = default_banned_lexicon();
    CHECK(!validate_caption(CaptionMode::Style, "In the style of cubism, slate tones.", banned));
    CHECK(validate_caption(CaptionMode::Style, "A cubist piece.", banned).has_value());
    CHECK(validate_caption(CaptionMode::Style, "", banned).has_value());

    CHECK(!validate_caption(CaptionMode::Content, "a cat sits beside a fence.", banned));
    auto diag = validate_caption(CaptionMode::Content, "a crimson kite over the bay.", banned);
    REQUIRE(diag.has_value());
    CHECK(diag->find("crimson") != std::string::npos);
    CHECK(validate_caption(CaptionMode::Content, "A Crimson kite.", banned).has_value());
    CHECK(validate_caption(CaptionMode::Content, "a watercolor of hills.", banned).has_value());
    // Substrings inside longer words are not matches.
    CHECK(!validate_caption(CaptionMode::Content, "the bluebird nests here.", banned));
}

TEST_CASE("mock pool: layout, parsing, round trip") {
    auto pool = make_mock_pool(3, 4, 5);
    CHECK(pool.size() == 17);
    CHECK(pool[0].image_ref == "mock://style/0/0");
    CHECK(pool[0].target_kind == PromptKind::Style);
    CHECK(pool[11].image_ref == "mock://style/2/3");
    CHECK(pool[12].image_ref == "mock://content/0");
    CHECK(pool[12].target_kind == PromptKind::Content);
    CHECK(mock_style_class("mock://style/7/123") == 7);
    CHECK_THROWS_AS(mock_style_class("mock://content/3"), Error);
    CHECK_THROWS_AS(mock_style_class("mock://style/x/1"), Error);

    fs::path p = scratch_dir() / "pool.jsonl";
    write_pool(p, pool);
    CHECK(read_pool(p) == pool);
    std::ofstream(p, std::ios::app) << "{\"image_ref\": 3}\n";
    CHECK_THROWS_AS(read_pool(p), IoError);
}

TEST_CASE("mock captioner: deterministic template-conformant variants") {
    MockCaptioner cap;
    const auto& banned = default_banned_lexicon();
    std::string tpl_id = style_template().id();

    std::string a = cap.caption({"mock://style/3/0", CaptionMode::Style, tpl_id});
    std::string b = cap.caption({"mock://style/3/0", CaptionMode::Style, tpl_id});
    CHECK(a == b);
    CHECK(a.starts_with("In the style of "));

    // Same class: same style name; bounded variant set; all conformant.
    std::set<std::string> captions;
    std::string base = a.substr(0, a.find(','));
    for (u64 i = 0; i < 40; ++i) {
        std::string ref = "mock://style/3/" + std::to_string(i);
        std::string text = cap.caption({ref, CaptionMode::Style, tpl_id});
        CHECK(!validate_caption(CaptionMode::Style, text, banned));
        CHECK(text.substr(0, text.find(',')) == base);
        captions.insert(text);
    }
    CHECK(captions.size() >= 2);
    CHECK(captions.size() <= 6);

    // Different classes describe different styles (not necessarily all
    // distinct names, but not all equal either).
    std::set<std::string> firsts;
    for (u32 c = 0; c < 12; ++c)
        firsts.insert(cap.caption(
            {"mock://style/" + std::to_string(c) + "/0", CaptionMode::Style, tpl_id}));
    CHECK(firsts.size() >= 8);

    // Style captions always carry color words, so content validation
    // rejects them — the cross-mode leakage guard.
    for (u32 c = 0; c < 8; ++c) {
        std::string text = cap.caption(
            {"mock://style/" + std::to_string(c) + "/1", CaptionMode::Style, tpl_id});
        CHECK(validate_caption(CaptionMode::Content, text, banned).has_value());
    }

    // Content captions are color-free sentences.
    for (u64 i = 0; i < 100; ++i) {
        std::string text = cap.caption(
            {"mock://content/" + std::to_string(i), CaptionMode::Content,
             content_template().id()});
        CHECK(!validate_caption(CaptionMode::Content, text, banned));
    }

    CHECK_THROWS_AS(cap.caption({"mock://content/1", CaptionMode::Style, tpl_id}), Error);
    CHECK_THROWS_AS(cap.caption({"file:///tmp/x.png", CaptionMode::Content, tpl_id}), Error);
}

TEST_CASE("mock generator: style owns the pixel multiset") {
    MockGenerator gen;
    fs::path dir = scratch_dir();
    auto request = [&](const std::string& style, const std::string& content, u32 seed) {
        GenerationRequest req;
        req.combined_prompt = compose_prompt(style, content);
        req.seed = seed;
        req.width = 32;
        req.height = 32;
        return req;
    };

    auto r1 = gen.generate(request("In the style of cubism, slate.", "a cat sits", 7),
                           dir / "g1.ppm");
    auto r2 = gen.generate(request("In the style of cubism, slate.", "a cat sits", 7),
                           dir / "g2.ppm");
    CHECK(r1.status == GenStatus::Done);
    CHECK(slurp(dir / "g1.ppm") == slurp(dir / "g2.ppm")); // byte-identical repeat

    auto r3 = gen.generate(request("In the style of cubism, slate.", "a fox waits", 9),
                           dir / "g3.ppm");
    auto r4 = gen.generate(request("In the style of ukiyo-e, indigo.", "a cat sits", 7),
                           dir / "g4.ppm");
    CHECK(r3.status == GenStatus::Done);
    PpmImage i1 = read_ppm(dir / "g1.ppm"), i3 = read_ppm(dir / "g3.ppm"),
             i4 = read_ppm(dir / "g4.ppm");
    CHECK(i1.pixels != i3.pixels);                    // placement differs
    CHECK(sorted_pixels(i1) == sorted_pixels(i3));    // multiset does not
    CHECK(sorted_pixels(i1) != sorted_pixels(i4));    // other style differs

    auto f1 = mock_image_feature(i1), f3 = mock_image_feature(i3), f4 = mock_image_feature(i4);
    CHECK(f1 == f3); // permutation-invariant features are exactly equal
    CHECK(feature_cosine(f1, f4) < 0.999);

    GenerationRequest bad = request("In the style of cubism, slate.", "a cat sits", 7);
    bad.steps = 0;
    CHECK_THROWS_AS(gen.generate(bad, dir / "g5.ppm"), Error);
    GenerationRequest plain = request("In the style of cubism, slate.", "a cat sits", 7);
    plain.combined_prompt = "no separator";
    CHECK_THROWS_AS(gen.generate(plain, dir / "g6.ppm"), Error);
}

TEST_CASE("mock embeddings: token overlap drives cosine") {
    EmbeddingMatrix m = mock_text_embeddings(
        {"a cat sits beside a fence", "a cat sits beside a wall", "ship engine room"}, 64, 5);
    m.validate();
    CHECK(m.normalized);
    double near_cos = cosine_similarity(m.row_span(0), m.row_span(1), true);
    double far_cos = cosine_similarity(m.row_span(0), m.row_span(2), true);
    CHECK(near_cos > 0.5);
    CHECK(near_cos > far_cos + 0.3);
    EmbeddingMatrix again = mock_text_embeddings(
        {"a cat sits beside a fence", "a cat sits beside a wall", "ship engine room"}, 64, 5);
    CHECK(again.data == m.data);
    CHECK_THROWS_AS(mock_text_embeddings({"!!!"}, 64, 5), Error);
}

namespace {

// Captioner that fails transport for chosen refs and returns junk (then
// optionally valid output) for others; call counts are per-ref.
class FlakyCaptioner : public Captioner {
public:
    std::set<std::string> throw_refs;
    std::set<std::string> junk_once_refs;
    std::string caption(const CaptionRequest& req) override {
        std::lock_guard<std::mutex> lock(mutex_);
        int n = ++calls_[req.image_ref];
        if (throw_refs.count(req.image_ref)) throw Error("transport: boom");
        if (junk_once_refs.count(req.image_ref) && n == 1) return "junk output";
        return inner_.caption(req);
    }
    int calls(const std::string& ref) {
        std::lock_guard<std::mutex> lock(mutex_);
        return calls_[ref];
    }

private:
    MockCaptioner inner_;
    std::mutex mutex_;
    std::map<std::string, int> calls_;
};

} // namespace

TEST_CASE("caption driver: ordered commits, failures persisted, retry policy") {
    auto pool = make_mock_pool(4, 10, 20);
    MockCaptioner mock;
    CaptionOptions opt;
    opt.source_tag = "bench";

    auto style_run = run_captioning(mock, pool, CaptionMode::Style, opt);
    CHECK(style_run.prompts.size() == 40);
    CHECK(style_run.failures.empty());
    CHECK(style_run.template_id == style_template().id());
    std::string tag = "bench#" + style_template().version;
    for (std::size_t i = 0; i < style_run.prompts.size(); ++i) {
        CHECK(style_run.prompts[i].id == make_record_id(tag, i));
        CHECK(style_run.prompts[i].kind == PromptKind::Style);
        CHECK(style_run.prompts[i].source_tag == tag);
    }

    auto content_run = run_captioning(mock, pool, CaptionMode::Content, opt);
    CHECK(content_run.prompts.size() == 20);
    CHECK(content_run.failures.empty());

    // Output is identical at any in-flight width.
    CaptionOptions serial = opt;
    serial.max_in_flight = 1;
    auto one = run_captioning(mock, pool, CaptionMode::Style, serial);
    CHECK(one.prompts == style_run.prompts);

    // Transport failures and validation rejects are recorded, not dropped.
    FlakyCaptioner flaky;
    flaky.throw_refs = {"mock://style/1/3", "mock://style/2/7"};
    flaky.junk_once_refs = {"mock://style/0/5"};
    auto broken = run_captioning(flaky, pool, CaptionMode::Style, opt);
    CHECK(broken.prompts.size() == 37);
    REQUIRE(broken.failures.size() == 3);
    std::set<std::string> failed_refs;
    for (const auto& f : broken.failures) failed_refs.insert(f.image_ref);
    CHECK(failed_refs ==
          std::set<std::string>{"mock://style/0/5", "mock://style/1/3", "mock://style/2/7"});
    for (const auto& f : broken.failures) {
        bool transport = f.error.find("transport") != std::string::npos;
        bool validation = f.error.find("validation") != std::string::npos;
        CHECK((transport || validation));
    }

    // retry_on_invalid re-requests once after a validation reject.
    FlakyCaptioner retry;
    retry.junk_once_refs = {"mock://style/0/5"};
    CaptionOptions with_retry = opt;
    with_retry.retry_on_invalid = true;
    auto fixed = run_captioning(retry, pool, CaptionMode::Style, with_retry);
    CHECK(fixed.prompts.size() == 40);
    CHECK(fixed.failures.empty());
    CHECK(retry.calls("mock://style/0/5") == 2);
    CHECK(retry.calls("mock://style/0/0") == 1);
}

namespace {

class RefusingGenerator : public Generator {
public:
    std::set<u32> fail_seeds;
    GenerationResult generate(const GenerationRequest& req,
                              const std::filesystem::path& out_path) override {
        if (fail_seeds.count(req.seed)) throw Error("transport: flaky");
        return inner_.generate(req, out_path);
    }

private:
    MockGenerator inner_;
};

} // namespace

TEST_CASE("generation driver: provenance, failure isolation, resume") {
    auto pool = make_mock_pool(3, 2, 12);
    MockCaptioner cap;
    CaptionOptions copt;
    auto styles = run_captioning(cap, pool, CaptionMode::Style, copt).prompts;
    auto contents = run_captioning(cap, pool, CaptionMode::Content, copt).prompts;
    PairingConfig pc;
    pc.n_contents_per_style = 3;
    pc.seed = 5;
    auto combos = make_combinations(styles, contents, pc);
    REQUIRE(combos.size() == 18);

    GenerateOptions gopt;
    gopt.out_dir = scratch_dir() / "gen";
    gopt.width = 24;
    gopt.height = 24;
    MockGenerator gen;
    auto summary = run_generation(gen, combos, styles, contents, gopt);
    CHECK(summary.done == 18);
    CHECK(summary.failed == 0);
    CHECK(summary.skipped == 0);
    for (const auto& c : combos) {
        CHECK(c.status == GenStatus::Done);
        REQUIRE(c.image_ref.has_value());
        CHECK(fs::exists(*c.image_ref));
        CHECK(c.steps == 40);
        CHECK(c.cfg_scale == 4.0);
        CHECK(!c.error.has_value());
    }

    // One transport failure poisons only its own row.
    auto combos2 = make_combinations(styles, contents, pc);
    RefusingGenerator flaky;
    flaky.fail_seeds = {combos2[4].generation_seed};
    auto s2 = run_generation(flaky, combos2, styles, contents, gopt);
    CHECK(s2.done == 17);
    CHECK(s2.failed == 1);
    CHECK(combos2[4].status == GenStatus::Failed);
    REQUIRE(combos2[4].error.has_value());
    CHECK(combos2[4].error->find("transport") != std::string::npos);
    CHECK(!combos2[4].image_ref.has_value());

    // Resume touches only the failed row.
    fs::remove_all(gopt.out_dir);
    auto s3 = run_generation(gen, combos2, styles, contents, gopt);
    CHECK(s3.skipped == 17);
    CHECK(s3.done == 1);
    CHECK(combos2[4].status == GenStatus::Done);
    std::size_t files = 0;
    for (auto& e : fs::directory_iterator(gopt.out_dir)) {
        (void)e;
        ++files;
    }
    CHECK(files == 1); // only the replayed row wrote anything

    // Dangling ids abort before any request is issued.
    auto combos3 = make_combinations(styles, contents, pc);
    combos3[0].style_id = 0xdead;
    CHECK_THROWS_AS(run_generation(gen, combos3, styles, contents, gopt), IntegrityError);
}

TEST_CASE("http clients: success, auth, refusal, retry exhaustion") {
    httplib::Server server;
    std::atomic<int> caption_hits{0}, generate_hits{0};
    std::atomic<bool> saw_template_text{false};
    std::mutex seen_mutex;
    std::string seen_auth;
    server.Post("/caption", [&](const httplib::Request& req, httplib::Response& res) {
        ++caption_hits;
        {
            std::lock_guard<std::mutex> lock(seen_mutex);
            seen_auth = req.get_header_value("Authorization");
        }
        saw_template_text = nlohmann::json::parse(req.body).contains("template_text");
        res.set_content(
            nlohmann::json{{"text", "In the style of test art, slate tones, flat light."}}
                .dump(),
            "application/json");
    });
    server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        ++generate_hits;
        auto body = nlohmann::json::parse(req.body);
        if (body.at("prompt").get<std::string>().find("FORBIDDEN") != std::string::npos) {
            res.set_content(nlohmann::json{{"reason", "policy"}}.dump(), "application/json");
            return;
        }
        PpmImage img;
        img.width = 2;
        img.height = 1;
        img.pixels = {1, 2, 3, 4, 5, 6};
        fs::path tmp = scratch_dir() / "server.ppm";
        write_ppm(tmp, img);
        res.set_content(slurp(tmp), "image/x-portable-pixmap");
    });

    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    ServiceEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port);
    ep.timeout_seconds = 5.0;
    ep.max_retries = 1;
    ep.backoff_seconds = 0.01;

    ::setenv("MC_TEST_TOKEN", "sekrit", 1);
    ep.token_env = "MC_TEST_TOKEN";
    HttpCaptioner cap(ep);
    std::string text =
        cap.caption({"img-1", CaptionMode::Style, style_template().id()});
    CHECK(text.starts_with("In the style of"));
    CHECK(saw_template_text);
    {
        std::lock_guard<std::mutex> lock(seen_mutex);
        CHECK(seen_auth == "Bearer sekrit");
    }
    CHECK(caption_hits == 1);

    HttpGenerator gen(ep);
    GenerationRequest greq;
    greq.combined_prompt = compose_prompt("In the style of x, y.", "a cat");
    fs::path out = scratch_dir() / "http_gen.ppm";
    auto res = gen.generate(greq, out);
    CHECK(res.status == GenStatus::Done);
    PpmImage got = read_ppm(out);
    CHECK(got.pixels == std::vector<unsigned char>{1, 2, 3, 4, 5, 6});
    CHECK(generate_hits == 1);

    // A JSON reply from the generation service is a refusal: recorded as
    // Failed with the reason, no retry, nothing written.
    GenerationRequest refused = greq;
    refused.combined_prompt = compose_prompt("In the style of x, y.", "a FORBIDDEN cat");
    fs::path refused_out = scratch_dir() / "http_refused.ppm";
    auto rres = gen.generate(refused, refused_out);
    CHECK(rres.status == GenStatus::Failed);
    CHECK(rres.error.find("refused") != std::string::npos);
    CHECK(rres.error.find("policy") != std::string::npos);
    CHECK(!fs::exists(refused_out));
    CHECK(generate_hits == 2);

    // Unreachable endpoint: retries, then a transport error naming the
    // attempt count.
    ServiceEndpoint dead = ep;
    dead.base_url = "http://127.0.0.1:1"; // nothing listens on port 1
    HttpCaptioner dead_cap(dead);
    try {
        dead_cap.caption({"img-1", CaptionMode::Style, style_template().id()});
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(std::string(e.what()).find("2 attempts") != std::string::npos);
        CHECK(std::string(e.what()).find("transport") != std::string::npos);
    }

    server.stop();
    server_thread.join();
    ::unsetenv("MC_TEST_TOKEN");
}
