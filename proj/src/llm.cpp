#include "hef/llm.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hef/error.hpp"
#include "hef/random.hpp"

namespace hef {
namespace {

using json = nlohmann::json;

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return out;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

// --- mock ------------------------------------------------------------------

std::optional<MockPolicy> mock_policy_from_name(std::string_view name) {
    if (name == "echo_gold") return MockPolicy::echo_gold;
    if (name == "first_priority") return MockPolicy::first_priority;
    if (name == "uniform_random") return MockPolicy::uniform_random;
    if (name == "fixed_text") return MockPolicy::fixed_text;
    if (name == "judge_random") return MockPolicy::judge_random;
    return std::nullopt;
}

std::string_view to_string(MockPolicy p) {
    switch (p) {
        case MockPolicy::echo_gold: return "echo_gold";
        case MockPolicy::first_priority: return "first_priority";
        case MockPolicy::uniform_random: return "uniform_random";
        case MockPolicy::fixed_text: return "fixed_text";
        case MockPolicy::judge_random: return "judge_random";
    }
    return "unknown";
}

EmotionLabel MockClient::random_label(const LlmRequest& req) const {
    std::uint64_t h = fnv1a(req.dialogue_id, fnv1a(std::to_string(cfg_.seed)));
    h = fnv1a(req.instruction.text, h);
    return EmotionLabel::from_index(Rng(h).below(kNumEmotions));
}

LlmResult MockClient::complete(const LlmRequest& req) {
    LlmResult r;
    r.dialogue_id = req.dialogue_id;
    std::optional<EmotionLabel> label;
    switch (cfg_.policy) {
        case MockPolicy::echo_gold: {
            const auto it = cfg_.golds.find(req.dialogue_id);
            if (it == cfg_.golds.end())
                throw Error(ErrorKind::config, "echo_gold mock has no gold label for " + req.dialogue_id);
            label = it->second;
            break;
        }
        case MockPolicy::first_priority:
            label = req.instruction.priority.empty() ? random_label(req) : req.instruction.priority.front();
            break;
        case MockPolicy::uniform_random:
            label = random_label(req);
            break;
        case MockPolicy::fixed_text:
            r.text = cfg_.canned_response;
            return r;
        case MockPolicy::judge_random: {
            std::uint64_t h = fnv1a(req.instruction.text, fnv1a(std::to_string(cfg_.seed)));
            static constexpr const char* verdicts[] = {"Win", "Lose", "Tie"};
            r.text = verdicts[Rng(h).below(3)];
            return r;
        }
    }
    r.text = "Emotion: " + label->str() + "\nResponse: " + replace_all(cfg_.canned_response, "{emotion}", label->name());
    return r;
}

// --- http ------------------------------------------------------------------

std::string HttpConfig::api_key_from_env() {
    const char* key = std::getenv("HEF_API_KEY");
    if (key == nullptr || *key == '\0') throw Error(ErrorKind::config, "HEF_API_KEY is not set");
    return key;
}

HttpClient::HttpClient(HttpConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.api_key.empty()) throw Error(ErrorKind::config, "HTTP backend needs an API key (HEF_API_KEY)");
    if (cfg_.max_attempts == 0) throw Error(ErrorKind::config, "max_attempts must be positive");
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::config, "endpoint needs a scheme: " + cfg_.endpoint);
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    scheme_host_port_ = cfg_.endpoint.substr(0, path_start);
    base_path_ = path_start == std::string::npos ? "" : cfg_.endpoint.substr(path_start);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
#ifndef HEF_HAS_OPENSSL
    if (cfg_.endpoint.rfind("https://", 0) == 0)
        throw Error(ErrorKind::config, "this build has no TLS support; use an http:// endpoint");
#endif
}

std::string HttpClient::request_body(const LlmRequest& req) {
    json body = {
        {"model", req.model_name},
        {"messages", json::array({{{"role", "user"}, {"content", req.instruction.text}}})},
        {"temperature", req.temperature},
        {"max_tokens", req.max_tokens},
    };
    return body.dump();
}

std::string HttpClient::parse_response_body(const std::string& body) {
    try {
        const json j = json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw Error(ErrorKind::protocol, "message content is not a string");
        return content.get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::protocol, std::string("malformed chat-completions response: ") + e.what());
    }
}

LlmResult HttpClient::complete(const LlmRequest& req) {
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout).count());
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout).count());
    const httplib::Headers headers = {{"Authorization", "Bearer " + cfg_.api_key}};
    const std::string body = request_body(req);
    const std::string path = base_path_ + "/chat/completions";

    const auto started = std::chrono::steady_clock::now();
    std::string last_error;
    auto delay = std::chrono::duration<double, std::milli>(cfg_.backoff_base);
    for (std::size_t attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
        auto res = cli.Post(path, headers, body, "application/json");
        if (res && res->status == 200) {
            LlmResult r;
            r.dialogue_id = req.dialogue_id;
            r.text = parse_response_body(res->body);
            r.attempts = attempt;
            r.latency_ms = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                          std::chrono::steady_clock::now() - started)
                                                          .count());
            return r;
        }
        if (res && !retryable_status(res->status))
            throw Error(ErrorKind::protocol, "chat-completions returned HTTP " + std::to_string(res->status) + ": " +
                                                 res->body.substr(0, 200));
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < cfg_.max_attempts) {
            std::this_thread::sleep_for(delay);
            delay *= cfg_.backoff_factor;
        }
    }
    throw Error(ErrorKind::transport, "request for " + req.dialogue_id + " failed after " +
                                          std::to_string(cfg_.max_attempts) + " attempts (last: " + last_error + ")");
}

// --- cache -----------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    {
        std::ifstream in(path_);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                const json j = json::parse(line);
                entries_.insert_or_assign(j.at("key").get<std::string>(), j.at("text").get<std::string>());
            } catch (const json::exception&) {
                // a torn final line from an interrupted run is ignored
                if (in.peek() != EOF)
                    throw Error(ErrorKind::data, path_.string() + ":" + std::to_string(line_no) + ": corrupt cache entry");
            }
        }
    }
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) throw Error(ErrorKind::data, "cannot open response cache " + path_.string());
}

std::string ResponseCache::key(const std::string& model_name, const std::string& instruction_text) {
    return model_name + ":" + hex64(fnv1a(instruction_text));
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& model_name, const std::string& dialogue_id,
                        const std::string& text) {
    const json j = {{"key", key}, {"model", model_name}, {"dialogue_id", dialogue_id}, {"text", text}};
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
    out_.flush();
    entries_.insert_or_assign(key, text);
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

LlmResult CachingClient::complete(const LlmRequest& req) {
    const auto key = ResponseCache::key(req.model_name, req.instruction.text);
    if (auto hit = cache_->get(key)) {
        LlmResult r;
        r.dialogue_id = req.dialogue_id;
        r.text = std::move(*hit);
        r.cached = true;
        return r;
    }
    LlmResult r = inner_->complete(req);
    cache_->put(key, req.model_name, req.dialogue_id, r.text);
    return r;
}

// --- dispatch --------------------------------------------------------------

std::vector<LlmResult> dispatch(LlmClient& client, std::span<const LlmRequest> requests, std::size_t parallelism) {
    std::vector<LlmResult> results(requests.size());
    if (requests.empty()) return results;
    const std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, requests.size()));

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::string failed_id;
    std::mutex err_mu;

    auto work = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                results[i] = client.complete(requests[i]);
                results[i].dialogue_id = requests[i].dialogue_id;
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) {
                    first_error = std::current_exception();
                    failed_id = requests[i].dialogue_id;
                }
                failed.store(true);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }
    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const Error& e) {
            throw Error(e.kind(), "dialogue " + failed_id + ": " + e.what());
        }
    }
    return results;
}

}  // namespace hef
