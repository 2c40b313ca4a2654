#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "megacurate/clients.hpp"

namespace megacurate {

namespace {

using nlohmann::json;

std::optional<ServiceEndpoint> endpoint_from_env(const char* url_var) {
    const char* url = std::getenv(url_var);
    if (!url || !*url) return std::nullopt;
    ServiceEndpoint ep;
    ep.base_url = url;
    if (const char* tok = std::getenv("MEGACURATE_TOKEN_VAR"); tok && *tok) ep.token_env = tok;
    return ep;
}

httplib::Client make_client(const ServiceEndpoint& ep) {
    httplib::Client cli(ep.base_url);
    auto secs = static_cast<time_t>(ep.timeout_seconds);
    auto usecs = static_cast<time_t>((ep.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    if (!ep.token_env.empty())
        if (const char* tok = std::getenv(ep.token_env.c_str()); tok && *tok)
            cli.set_bearer_token_auth(tok);
    return cli;
}

// Runs fn until it succeeds or the retry budget is spent; the final error
// names the attempt count.
template <typename Fn>
auto with_retries(const ServiceEndpoint& ep, const char* what, Fn fn) -> decltype(fn()) {
    const u32 attempts = ep.max_retries + 1;
    double backoff = ep.backoff_seconds;
    for (u32 a = 1;; ++a) {
        try {
            return fn();
        } catch (const Error& e) {
            if (a >= attempts)
                throw StageError(std::string(what) + " failed after " + std::to_string(a) +
                                 " attempts: " + e.what());
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
    }
}

httplib::Result post_json(const ServiceEndpoint& ep, const std::string& path,
                          const json& body) {
    httplib::Client cli = make_client(ep);
    return cli.Post(path, body.dump(), "application/json");
}

} // namespace

std::optional<ServiceEndpoint> caption_endpoint_from_env() {
    return endpoint_from_env("MEGACURATE_CAPTION_URL");
}

std::optional<ServiceEndpoint> generation_endpoint_from_env() {
    return endpoint_from_env("MEGACURATE_GEN_URL");
}

HttpCaptioner::HttpCaptioner(ServiceEndpoint ep) : ep_(std::move(ep)) { ep_.validate(); }

std::string HttpCaptioner::caption(const CaptionRequest& req) {
    const InstructionTemplate& tpl = template_by_id(req.template_id);
    json body = {{"image_ref", req.image_ref},
                 {"mode", std::string(caption_mode_name(req.mode))},
                 {"template_id", tpl.id()},
                 {"template_text", tpl.text}};
    return with_retries(ep_, "caption request", [&]() -> std::string {
        httplib::Result res = post_json(ep_, "/caption", body);
        if (!res)
            throw Error("transport: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error("HTTP " + std::to_string(res->status));
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string() ||
            reply["text"].get<std::string>().empty())
            throw Error("malformed caption response");
        return reply["text"].get<std::string>();
    });
}

HttpGenerator::HttpGenerator(ServiceEndpoint ep) : ep_(std::move(ep)) { ep_.validate(); }

GenerationResult HttpGenerator::generate(const GenerationRequest& req,
                                         const std::filesystem::path& out_path) {
    req.validate();
    json body = {{"prompt", req.combined_prompt}, {"steps", req.steps},
                 {"cfg_scale", req.cfg_scale},    {"seed", req.seed},
                 {"width", req.width},            {"height", req.height}};
    return with_retries(ep_, "generation request", [&]() -> GenerationResult {
        httplib::Result res = post_json(ep_, "/generate", body);
        if (!res)
            throw Error("transport: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error("HTTP " + std::to_string(res->status));
        // A JSON reply is a service-level refusal (no retry); image bytes
        // are a success.
        if (res->get_header_value("Content-Type").starts_with("application/json")) {
            json reply = json::parse(res->body, nullptr, false);
            GenerationResult out;
            out.status = GenStatus::Failed;
            out.error = reply.is_discarded()
                            ? "malformed generation response"
                            : "refused: " + reply.value("reason", "unspecified");
            return out;
        }
        std::ofstream file(out_path, std::ios::binary);
        if (!file) throw Error("cannot open " + out_path.string() + " for writing");
        file.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
        if (!file) throw Error("write failed for " + out_path.string());
        GenerationResult out;
        out.status = GenStatus::Done;
        out.image_ref = out_path.string();
        return out;
    });
}

} // namespace megacurate
