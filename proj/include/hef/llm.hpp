#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hef/emotion.hpp"
#include "hef/prompt.hpp"

namespace hef {

struct LlmRequest {
    std::string dialogue_id;
    Instruction instruction;
    std::string model_name;
    double temperature = 0.0;
    std::size_t max_tokens = 256;
};

struct LlmResult {
    std::string dialogue_id;
    std::string text;
    std::uint64_t latency_ms = 0;
    std::size_t attempts = 1;
    bool cached = false;
};

/// The whole backend contract: one request in, one completion out.
/// Implementations must be callable from several threads at once.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual LlmResult complete(const LlmRequest& req) = 0;
};

enum class MockPolicy {
    echo_gold,       // answers with the gold emotion of the dialogue
    first_priority,  // answers with the first priority emotion, or a seeded random label without one
    uniform_random,  // seeded uniform label, keyed on dialogue id and instruction text
    fixed_text,      // returns `canned_response` verbatim
    judge_random,    // seeded Win / Lose / Tie
};

std::optional<MockPolicy> mock_policy_from_name(std::string_view name);
std::string_view to_string(MockPolicy p);

struct MockConfig {
    MockPolicy policy = MockPolicy::first_priority;
    /// Response body; "{emotion}" is replaced with the chosen label.
    std::string canned_response = "I can tell you feel {emotion}. Thank you for sharing that with me.";
    std::uint64_t seed = 13;
    std::unordered_map<std::string, EmotionLabel> golds;  // echo_gold only
};

/// Deterministic offline backend.
class MockClient final : public LlmClient {
public:
    explicit MockClient(MockConfig cfg) : cfg_(std::move(cfg)) {}
    LlmResult complete(const LlmRequest& req) override;

private:
    EmotionLabel random_label(const LlmRequest& req) const;
    MockConfig cfg_;
};

struct HttpConfig {
    std::string endpoint;  // e.g. https://api.openai.com/v1
    std::string api_key;
    std::size_t max_attempts = 5;
    std::chrono::milliseconds backoff_base{1000};
    double backoff_factor = 2.0;
    std::chrono::seconds timeout{120};

    /// Reads the credential from HEF_API_KEY. Throws hef::Error(config) when unset.
    static std::string api_key_from_env();
};

/// OpenAI-compatible chat-completions client. Retries transport failures and
/// 429/5xx responses with exponential backoff.
class HttpClient final : public LlmClient {
public:
    explicit HttpClient(HttpConfig cfg);
    LlmResult complete(const LlmRequest& req) override;

    /// Request body for the chat-completions endpoint.
    static std::string request_body(const LlmRequest& req);
    /// Extracts choices[0].message.content; throws hef::Error(protocol).
    static std::string parse_response_body(const std::string& body);

private:
    HttpConfig cfg_;
    std::string scheme_host_port_;
    std::string base_path_;
};

/// Append-only JSONL ledger of completions keyed by model and instruction
/// hash. Each line: {"key", "model", "dialogue_id", "text"}.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path path);

    static std::string key(const std::string& model_name, const std::string& instruction_text);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& model_name, const std::string& dialogue_id,
             const std::string& text);
    std::size_t size() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::string> entries_;
    std::ofstream out_;
};

/// Persists every fresh completion before returning it; cache hits skip the
/// inner client entirely.
class CachingClient final : public LlmClient {
public:
    CachingClient(std::shared_ptr<LlmClient> inner, std::shared_ptr<ResponseCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)) {}
    LlmResult complete(const LlmRequest& req) override;

private:
    std::shared_ptr<LlmClient> inner_;
    std::shared_ptr<ResponseCache> cache_;
};

/// Runs every request with at most `parallelism` in flight and returns the
/// results in request order. The first failure is rethrown after in-flight
/// work drains, prefixed with the dialogue id.
std::vector<LlmResult> dispatch(LlmClient& client, std::span<const LlmRequest> requests, std::size_t parallelism);

}  // namespace hef
