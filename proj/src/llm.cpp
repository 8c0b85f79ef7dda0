#include "reformkit/llm.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "reformkit/errors.hpp"

namespace reformkit {
namespace {

bool is_transient(int status) { return status == 0 || status == 429 || status >= 500; }

std::chrono::milliseconds jittered_backoff(std::chrono::milliseconds base, int retry_index) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const auto ceiling = base.count() << std::min(retry_index, 20);
    if (ceiling <= 0) return std::chrono::milliseconds{0};
    std::uniform_int_distribution<std::int64_t> dist(0, ceiling);
    return std::chrono::milliseconds{dist(rng)};
}

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidParam("base_url '" + url + "' has no scheme");
    auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    if (path_start == std::string::npos) {
        out.scheme_host_port = url;
    } else {
        out.scheme_host_port = url.substr(0, path_start);
        out.path_prefix = url.substr(path_start);
    }
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    return out;
}

std::string concat_bodies(const std::vector<Message>& messages) {
    std::string all;
    for (const auto& m : messages) {
        all += m.body;
        all.push_back('\n');
    }
    return all;
}

}  // namespace

const char* to_string(BackendKind kind) noexcept { return kind == BackendKind::http ? "http" : "mock"; }

void LLMConfig::validate() const {
    if (model.empty()) throw InvalidParam("llm.model: must be non-empty");
    if (!(temperature >= 0.0)) throw InvalidParam("llm.temperature: must be >= 0");
    if (max_tokens < 1) throw InvalidParam("llm.max_tokens: must be >= 1");
    if (n < 1) throw InvalidParam("llm.n: must be >= 1");
    if (max_retries < 0) throw InvalidParam("llm.max_retries: must be >= 0");
    if (max_concurrency < 1) throw InvalidParam("llm.max_concurrency: must be >= 1");
    if (timeout.count() <= 0) throw InvalidParam("llm.timeout: must be positive");
    if (backoff_base.count() < 0) throw InvalidParam("llm.backoff_base: must be >= 0");
}

LLMConfig LLMConfig::from_environment() {
    LLMConfig c;
    if (const char* url = std::getenv("QUERYGYM_BASE_URL"); url && *url) c.base_url = url;
    return c;
}

nlohmann::ordered_json ChatRequest::to_json() const {
    nlohmann::ordered_json body;
    body["model"] = model;
    auto msgs = nlohmann::ordered_json::array();
    for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.body}});
    body["messages"] = std::move(msgs);
    body["temperature"] = temperature;
    body["max_tokens"] = max_tokens;
    body["n"] = n;
    if (seed) body["seed"] = *seed;
    return body;
}

AttemptResult HttpChatBackend::attempt(const ChatRequest& request, const LLMConfig& config) {
    const auto url = split_url(config.base_url);
    std::string key;
    if (const char* env = std::getenv(config.api_key_env.c_str())) key = env;

    httplib::Client client(url.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

    const auto body = request.to_json().dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    auto res = client.Post(url.path_prefix + "/chat/completions", headers, body, "application/json");
    AttemptResult out;
    if (!res) {
        out.status = 0;
        out.detail = httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    if (res->status != 200) {
        out.detail = res->body.substr(0, 512);
        return out;
    }
    try {
        auto json = nlohmann::json::parse(res->body);
        for (const auto& choice : json.at("choices")) {
            const auto& content = choice.at("message").at("content");
            out.choices.push_back(content.is_string() ? content.get<std::string>() : std::string());
        }
        if (auto it = json.find("usage"); it != json.end() && it->is_object()) {
            out.usage = Usage{it->value("prompt_tokens", std::int64_t{0}), it->value("completion_tokens", std::int64_t{0})};
        }
    } catch (const nlohmann::json::exception& e) {
        // A 200 with an unreadable body is treated like a server fault.
        out.status = 502;
        out.detail = std::string("unparseable response: ") + e.what();
        out.choices.clear();
    }
    return out;
}

MockChatBackend::MockChatBackend(std::vector<MockResponse> script, LatencyFn latency) : latency_(std::move(latency)) {
    for (auto& r : script) {
        (r.match ? matched_ : ordered_).push_back(std::move(r));
    }
}

std::vector<MockResponse> MockChatBackend::parse_script(const nlohmann::json& script) {
    if (!script.is_array()) throw SchemaError("mock script", "expected a JSON array of response entries");
    std::vector<MockResponse> out;
    for (std::size_t i = 0; i < script.size(); ++i) {
        const auto& e = script[i];
        const auto where = "mock script[" + std::to_string(i) + "]";
        MockResponse r;
        if (e.is_array()) {
            r.texts = e.get<std::vector<std::string>>();
            out.push_back(std::move(r));
            continue;
        }
        if (!e.is_object()) throw SchemaError(where, "expected an object or a list of strings");
        try {
            if (e.contains("match")) r.match = e.at("match").get<std::string>();
            if (e.contains("texts")) r.texts = e.at("texts").get<std::vector<std::string>>();
            if (e.contains("status")) r.status = e.at("status").get<int>();
            if (e.contains("error")) r.status = 500;
            if (e.contains("delay_ms")) r.delay = std::chrono::milliseconds{e.at("delay_ms").get<int>()};
        } catch (const nlohmann::json::exception& ex) {
            throw SchemaError(where, ex.what());
        }
        if (r.status == 200 && !e.contains("texts")) throw SchemaError(where, "missing 'texts'");
        out.push_back(std::move(r));
    }
    return out;
}

std::shared_ptr<MockChatBackend> MockChatBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mock script '" + path.string() + "'");
    nlohmann::json script;
    try {
        script = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string(), e.what());
    }
    try {
        return std::make_shared<MockChatBackend>(parse_script(script));
    } catch (const SchemaError& e) {
        throw SchemaError(path.string(), e.what());
    }
}

AttemptResult MockChatBackend::attempt(const ChatRequest& request, const LLMConfig&) {
    const auto haystack = concat_bodies(request.messages);
    const MockResponse* chosen = nullptr;
    {
        std::lock_guard lock(mutex_);
        for (const auto& r : matched_) {
            if (haystack.find(*r.match) != std::string::npos) {
                chosen = &r;
                break;
            }
        }
        if (!chosen) {
            if (next_ >= ordered_.size()) {
                log_.push_back(RecordedRequest{request, {}});
                throw ScriptExhausted("mock script exhausted after " + std::to_string(ordered_.size()) +
                                      " ordered responses");
            }
            chosen = &ordered_[next_++];
        }
        log_.push_back(RecordedRequest{request, chosen->match.value_or("")});
    }
    auto delay = chosen->delay;
    if (latency_) delay += latency_(request);
    if (delay.count() > 0) std::this_thread::sleep_for(delay);

    AttemptResult out;
    out.status = chosen->status;
    if (chosen->status == 200) {
        out.choices = chosen->texts;
    } else {
        out.detail = "scripted failure (status " + std::to_string(chosen->status) + ")";
    }
    return out;
}

std::vector<RecordedRequest> MockChatBackend::requests() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t MockChatBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

std::size_t MockChatBackend::remaining() const {
    std::lock_guard lock(mutex_);
    return ordered_.size() - next_;
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, int max_concurrency)
    : backend_(std::move(backend)), max_concurrency_(max_concurrency), slots_(max_concurrency) {
    if (!backend_) throw InvalidParam("llm gateway: backend is null");
    if (max_concurrency < 1) throw InvalidParam("llm.max_concurrency: must be >= 1");
}

Completion LlmGateway::complete(const RenderedPrompt& prompt, const LLMConfig& config) {
    auto c = complete(prompt.messages, config);
    c.trace.prompt = prompt.template_id + "@" + std::to_string(prompt.template_version);
    return c;
}

Completion LlmGateway::complete(const std::vector<Message>& messages, const LLMConfig& config) {
    config.validate();
    const ChatRequest request{messages, config.model, config.temperature, config.max_tokens, config.seed, config.n};

    Completion out;
    auto& trace = out.trace;
    trace.request_fingerprint = messages_fingerprint(messages);
    trace.model = config.model;
    trace.temperature = config.temperature;
    trace.max_tokens = config.max_tokens;
    trace.seed = config.seed;
    trace.n = config.n;
    trace.backend = backend_->kind();

    const auto started = std::chrono::steady_clock::now();
    AttemptResult result;
    for (int attempt = 0;; ++attempt) {
        {
            slots_.acquire();
            struct Release {
                std::counting_semaphore<>& s;
                ~Release() { s.release(); }
            } release{slots_};
            result = backend_->attempt(request, config);
        }
        trace.attempt_count = attempt + 1;
        if (result.status == 200) break;
        const auto what = "chat completion failed with status " + std::to_string(result.status) +
                          (result.detail.empty() ? "" : ": " + result.detail);
        if (result.status == 401 || result.status == 403) throw AuthError(what);
        if (!is_transient(result.status)) throw BadRequest(what);
        if (attempt >= config.max_retries) {
            throw ExhaustedRetries(what + " (after " + std::to_string(attempt + 1) + " attempts)", result.status);
        }
        std::this_thread::sleep_for(jittered_backoff(config.backoff_base, attempt));
    }
    trace.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started);
    if (result.choices.empty()) throw EmptyResponse("backend returned zero choices");
    trace.choices_returned = static_cast<int>(result.choices.size());
    out.choices = std::move(result.choices);
    out.usage = result.usage;
    return out;
}

std::shared_ptr<LlmGateway> make_http_gateway(const LLMConfig& config) {
    config.validate();
    return std::make_shared<LlmGateway>(std::make_shared<HttpChatBackend>(), config.max_concurrency);
}

std::shared_ptr<LlmGateway> make_mock_gateway(std::vector<MockResponse> script, int max_concurrency) {
    return std::make_shared<LlmGateway>(std::make_shared<MockChatBackend>(std::move(script)), max_concurrency);
}

}  // namespace reformkit
