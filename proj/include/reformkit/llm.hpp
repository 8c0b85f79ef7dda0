#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "reformkit/prompt_bank.hpp"
#include "reformkit/trace.hpp"

namespace reformkit {

struct LLMConfig {
    std::string model;
    double temperature = 1.0;
    int max_tokens = 256;
    std::optional<std::int64_t> seed;
    int n = 1;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::milliseconds timeout{60'000};
    int max_retries = 3;
    int max_concurrency = 4;
    /// First backoff ceiling; doubles per retry, sleep drawn uniformly from [0, ceiling].
    std::chrono::milliseconds backoff_base{1'000};

    /// Throws InvalidParam naming the offending field.
    void validate() const;

    /// Defaults with `base_url` taken from QUERYGYM_BASE_URL when set.
    static LLMConfig from_environment();
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct Completion {
    std::vector<std::string> choices;
    std::optional<Usage> usage;
    CallTrace trace;
};

/// One logical request; identical across every retry attempt.
struct ChatRequest {
    std::vector<Message> messages;
    std::string model;
    double temperature = 1.0;
    int max_tokens = 256;
    std::optional<std::int64_t> seed;
    int n = 1;

    /// OpenAI chat-completions request body.
    nlohmann::ordered_json to_json() const;
};

/// Outcome of a single attempt against a backend. `status` uses HTTP semantics; 0 means a
/// transport failure (connection refused, timeout).
struct AttemptResult {
    int status = 200;
    std::vector<std::string> choices;
    std::optional<Usage> usage;
    std::string detail;
};

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual BackendKind kind() const noexcept = 0;
    /// Performs one attempt. Must be safe to call from several threads at once.
    virtual AttemptResult attempt(const ChatRequest& request, const LLMConfig& config) = 0;
};

/// OpenAI-compatible `POST {base_url}/chat/completions`.
class HttpChatBackend final : public ChatBackend {
  public:
    BackendKind kind() const noexcept override { return BackendKind::http; }
    AttemptResult attempt(const ChatRequest& request, const LLMConfig& config) override;
};

/// One scripted response. `match` entries are consulted first (substring of any message
/// body) and are reusable; entries without `match` are consumed in order.
struct MockResponse {
    std::optional<std::string> match;
    std::vector<std::string> texts;
    /// Non-200 simulates a failed attempt with that HTTP status.
    int status = 200;
    std::chrono::milliseconds delay{0};
};

struct RecordedRequest {
    ChatRequest request;
    std::string matched;  // empty for ordered entries
};

class MockChatBackend final : public ChatBackend {
  public:
    using LatencyFn = std::function<std::chrono::milliseconds(const ChatRequest&)>;

    explicit MockChatBackend(std::vector<MockResponse> script, LatencyFn latency = {});

    /// Parses a JSON array of `{ "match"?: str, "texts": [str], "status"?: int, "delay_ms"?: int }`;
    /// `"error": str` is shorthand for status 500.
    static std::vector<MockResponse> parse_script(const nlohmann::json& script);
    static std::shared_ptr<MockChatBackend> from_file(const std::filesystem::path& path);

    BackendKind kind() const noexcept override { return BackendKind::mock; }
    AttemptResult attempt(const ChatRequest& request, const LLMConfig& config) override;

    std::vector<RecordedRequest> requests() const;
    std::size_t call_count() const;
    /// Number of ordered (unmatched) entries not yet consumed.
    std::size_t remaining() const;

  private:
    std::vector<MockResponse> matched_;
    std::vector<MockResponse> ordered_;
    LatencyFn latency_;
    mutable std::mutex mutex_;
    std::size_t next_ = 0;
    std::vector<RecordedRequest> log_;
};

/// Retrying, concurrency-bounded front end over a ChatBackend. Shareable across threads.
class LlmGateway {
  public:
    LlmGateway(std::shared_ptr<ChatBackend> backend, int max_concurrency);

    Completion complete(const RenderedPrompt& prompt, const LLMConfig& config);
    Completion complete(const std::vector<Message>& messages, const LLMConfig& config);

    BackendKind backend_kind() const noexcept { return backend_->kind(); }
    const std::shared_ptr<ChatBackend>& backend() const noexcept { return backend_; }
    int max_concurrency() const noexcept { return max_concurrency_; }

  private:
    std::shared_ptr<ChatBackend> backend_;
    int max_concurrency_;
    std::counting_semaphore<> slots_;
};

/// Convenience: validated gateway over the HTTP backend.
std::shared_ptr<LlmGateway> make_http_gateway(const LLMConfig& config);
/// Convenience: gateway over a scripted mock.
std::shared_ptr<LlmGateway> make_mock_gateway(std::vector<MockResponse> script, int max_concurrency = 4);

}  // namespace reformkit
