#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include "clients_internal.hpp"
#include "megacurate/clients.hpp"
#include "megacurate/pairing.hpp"

namespace megacurate {

namespace {

// Runs fn(i) for i in [0, n) on up to `width` threads. Work items are
// independent and slot-addressed, so output order never depends on
// scheduling; the first captured exception is rethrown after the join.
void for_each_request(std::size_t n, unsigned width, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    width = std::max(1u, std::min<unsigned>(width, static_cast<unsigned>(n)));
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = cursor.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    if (width == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(width);
        for (unsigned t = 0; t < width; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

CaptionRunResult run_captioning(Captioner& captioner, const std::vector<PoolImage>& pool,
                                CaptionMode mode, const CaptionOptions& opt) {
    const InstructionTemplate& tpl = template_for(mode);
    const PromptKind want =
        mode == CaptionMode::Style ? PromptKind::Style : PromptKind::Content;
    const std::string tag = opt.source_tag + "#" + tpl.version;

    std::vector<const PoolImage*> selected;
    for (const auto& img : pool)
        if (img.target_kind == want) selected.push_back(&img);

    struct Slot {
        std::optional<PromptRecord> record;
        std::optional<CaptionFailure> failure;
    };
    std::vector<Slot> slots(selected.size());

    for_each_request(selected.size(), opt.max_in_flight, [&](std::size_t i) {
        const PoolImage& img = *selected[i];
        CaptionRequest req{img.image_ref, mode, tpl.id()};
        auto fail = [&](const std::string& why) {
            slots[i].failure = CaptionFailure{img.image_ref, mode, why};
        };
        std::string text;
        try {
            text = captioner.caption(req);
            auto diag = validate_caption(mode, text, opt.banned_lexicon);
            if (diag && opt.retry_on_invalid) {
                text = captioner.caption(req);
                diag = validate_caption(mode, text, opt.banned_lexicon);
            }
            if (diag) {
                fail("validation: " + *diag);
                return;
            }
        } catch (const Error& e) {
            fail(e.what());
            return;
        }
        PromptRecord rec;
        rec.id = make_record_id(tag, i);
        rec.kind = want;
        rec.text = std::move(text);
        rec.source_tag = tag;
        slots[i].record = std::move(rec);
    });

    // Commit in request-id order: the output is identical for any in-flight
    // width.
    CaptionRunResult out;
    out.template_id = tpl.id();
    for (auto& slot : slots) {
        if (slot.record) out.prompts.push_back(std::move(*slot.record));
        if (slot.failure) out.failures.push_back(std::move(*slot.failure));
    }
    return out;
}

GenerateSummary run_generation(Generator& generator, std::vector<StyleCombination>& combos,
                               const std::vector<PromptRecord>& styles,
                               const std::vector<PromptRecord>& contents,
                               const GenerateOptions& opt) {
    std::unordered_map<u64, const std::string*> style_text, content_text;
    for (const auto& r : styles) style_text.emplace(r.id, &r.text);
    for (const auto& r : contents) content_text.emplace(r.id, &r.text);
    for (const auto& c : combos) {
        if (!style_text.count(c.style_id))
            throw IntegrityError("generation: combination " + detail::hex16(c.combination_id) +
                                 " references unknown style id " + std::to_string(c.style_id));
        if (!content_text.count(c.content_id))
            throw IntegrityError("generation: combination " + detail::hex16(c.combination_id) +
                                 " references unknown content id " +
                                 std::to_string(c.content_id));
    }
    if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

    std::vector<std::size_t> jobs;
    GenerateSummary summary;
    for (std::size_t i = 0; i < combos.size(); ++i) {
        if (opt.resume && combos[i].status == GenStatus::Done)
            ++summary.skipped;
        else
            jobs.push_back(i);
    }

    std::vector<StyleCombination> updated(jobs.size());
    for_each_request(jobs.size(), opt.max_in_flight, [&](std::size_t j) {
        StyleCombination c = combos[jobs[j]];
        GenerationRequest req;
        req.combined_prompt =
            compose_prompt(*style_text.at(c.style_id), *content_text.at(c.content_id));
        req.steps = opt.steps;
        req.cfg_scale = opt.cfg_scale;
        req.seed = c.generation_seed;
        req.width = opt.width;
        req.height = opt.height;
        std::filesystem::path out_path =
            opt.out_dir / ("gen_" + detail::hex16(c.combination_id) + ".ppm");
        GenerationResult res;
        try {
            res = generator.generate(req, out_path);
        } catch (const Error& e) {
            res.status = GenStatus::Failed;
            res.error = e.what();
        }
        if (res.status == GenStatus::Done) {
            c.status = GenStatus::Done;
            c.image_ref = res.image_ref;
            c.steps = opt.steps;
            c.cfg_scale = opt.cfg_scale;
            c.error.reset();
        } else {
            c.status = GenStatus::Failed;
            c.error = res.error.empty() ? "generation failed" : res.error;
            c.image_ref.reset();
            c.steps.reset();
            c.cfg_scale.reset();
        }
        updated[j] = std::move(c);
    });

    for (std::size_t j = 0; j < jobs.size(); ++j) {
        combos[jobs[j]] = std::move(updated[j]);
        if (combos[jobs[j]].status == GenStatus::Done)
            ++summary.done;
        else
            ++summary.failed;
    }
    return summary;
}

} // namespace megacurate
