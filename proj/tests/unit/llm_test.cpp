#include <doctest.h>

#include <cstdlib>
#include <future>
#include <set>

#include "reformkit/errors.hpp"
#include "reformkit/llm.hpp"
#include "support/fake_servers.hpp"
#include "support/temp_dir.hpp"

using namespace reformkit;
using namespace std::chrono_literals;
using reformkit::testing::FakeOpenAI;

namespace {

LLMConfig http_config(const FakeOpenAI& server) {
    LLMConfig c;
    c.model = "test-model";
    c.base_url = server.base_url_v1();
    c.api_key_env = "REFORMKIT_TEST_KEY";
    c.backoff_base = 5ms;
    c.timeout = 5000ms;
    return c;
}

std::vector<Message> hello() { return {{Role::system, "be brief"}, {Role::user, "hello"}}; }

}  // namespace

TEST_SUITE("llm-gateway") {
    TEST_CASE("mock returns scripted choices then runs out") {
        auto gw = make_mock_gateway({MockResponse{std::nullopt, {"x"}}});
        LLMConfig c;
        c.model = "m";
        auto r = gw->complete(hello(), c);
        CHECK(r.choices == std::vector<std::string>{"x"});
        CHECK(r.trace.backend == BackendKind::mock);
        CHECK(r.trace.attempt_count == 1);
        CHECK_THROWS_AS(gw->complete(hello(), c), ScriptExhausted);
    }

    TEST_CASE("mock match entries route by substring and are reusable") {
        auto backend = std::make_shared<MockChatBackend>(std::vector<MockResponse>{
            MockResponse{"extract", {"s1. s2."}},
            MockResponse{std::nullopt, {"first"}},
        });
        LlmGateway gw(backend, 2);
        LLMConfig c;
        c.model = "m";
        CHECK(gw.complete({{Role::user, "please extract it"}}, c).choices[0] == "s1. s2.");
        CHECK(gw.complete({{Role::user, "generate"}}, c).choices[0] == "first");
        CHECK(gw.complete({{Role::user, "extract again"}}, c).choices[0] == "s1. s2.");
        CHECK(backend->remaining() == 0);
        auto log = backend->requests();
        REQUIRE(log.size() == 3);
        CHECK(log[0].request.messages == std::vector<Message>{{Role::user, "please extract it"}});
        CHECK(log[0].matched == "extract");
        CHECK(log[1].matched.empty());
    }

    TEST_CASE("trace echoes the configuration") {
        auto gw = make_mock_gateway({MockResponse{std::nullopt, {"a", "b"}}});
        LLMConfig c;
        c.model = "gpt-x";
        c.temperature = 0.8;
        c.max_tokens = 256;
        c.seed = 42;
        c.n = 3;
        auto r = gw->complete(hello(), c);
        CHECK(r.trace.model == "gpt-x");
        CHECK(r.trace.temperature == doctest::Approx(0.8));
        CHECK(r.trace.max_tokens == 256);
        CHECK(r.trace.seed == 42);
        CHECK(r.trace.n == 3);
        CHECK(r.trace.choices_returned == 2);
        CHECK(r.trace.request_fingerprint == messages_fingerprint(hello()));
    }

    TEST_CASE("mock script parsing") {
        auto script = MockChatBackend::parse_script(nlohmann::json::parse(
            R"([{"texts":["a"]},{"match":"q","texts":["b"],"delay_ms":3},{"error":"boom"},{"status":429,"texts":[]}])"));
        REQUIRE(script.size() == 4);
        CHECK(script[1].match == "q");
        CHECK(script[1].delay == 3ms);
        CHECK(script[2].status == 500);
        CHECK(script[3].status == 429);
        CHECK_THROWS_AS(MockChatBackend::parse_script(nlohmann::json::parse(R"([{"texts":"a"}])")), SchemaError);
    }

    TEST_CASE("mock failures go through the retry policy") {
        LLMConfig c;
        c.model = "m";
        c.backoff_base = 1ms;
        auto gw = make_mock_gateway({MockResponse{std::nullopt, {}, 503}, MockResponse{std::nullopt, {"ok"}}});
        auto r = gw->complete(hello(), c);
        CHECK(r.trace.attempt_count == 2);
        auto empty = make_mock_gateway({MockResponse{std::nullopt, {}}});
        CHECK_THROWS_AS(empty->complete(hello(), c), EmptyResponse);
        auto bad = make_mock_gateway({MockResponse{std::nullopt, {}, 400}});
        CHECK_THROWS_AS(bad->complete(hello(), c), BadRequest);
    }

    TEST_CASE("config validation") {
        LLMConfig c;
        c.model = "m";
        CHECK_NOTHROW(c.validate());
        c.temperature = -0.1;
        CHECK_THROWS_AS(c.validate(), InvalidParam);
        c = {};
        c.model = "m";
        c.n = 0;
        CHECK_THROWS_AS(c.validate(), InvalidParam);
        c = {};
        c.model = "m";
        c.max_tokens = 0;
        CHECK_THROWS_AS(c.validate(), InvalidParam);
        c = {};
        c.model = "m";
        c.max_concurrency = 0;
        CHECK_THROWS_AS(c.validate(), InvalidParam);
    }

    TEST_CASE("http: two 500s then success takes three attempts") {
        ::setenv("REFORMKIT_TEST_KEY", "sk-test", 1);
        FakeOpenAI server({{500, {}}, {500, {}}, {200, {"a passage"}}});
        auto c = http_config(server);
        auto gw = make_http_gateway(c);
        auto r = gw->complete(hello(), c);
        CHECK(r.choices == std::vector<std::string>{"a passage"});
        CHECK(r.trace.attempt_count == 3);
        CHECK(r.trace.backend == BackendKind::http);
        REQUIRE(r.usage.has_value());
        CHECK(r.usage->prompt_tokens == 11);
        CHECK(server.request_count() == 3);
        auto bodies = server.bodies();
        CHECK(bodies[0] == bodies[1]);
        CHECK(bodies[1] == bodies[2]);
        auto body = nlohmann::json::parse(bodies[0]);
        CHECK(body["model"] == "test-model");
        CHECK(body["messages"][1]["content"] == "hello");
        CHECK(body["messages"][0]["role"] == "system");
        CHECK_FALSE(body.contains("seed"));
        CHECK(server.auth_headers()[0] == "Bearer sk-test");
    }

    TEST_CASE("http: 401 is not retried") {
        ::setenv("REFORMKIT_TEST_KEY", "sk-test", 1);
        FakeOpenAI server(std::vector<FakeOpenAI::Reply>{{401, {}}});
        auto c = http_config(server);
        CHECK_THROWS_AS(make_http_gateway(c)->complete(hello(), c), AuthError);
        CHECK(server.request_count() == 1);
    }

    TEST_CASE("http: other 4xx is a bad request without retry") {
        ::setenv("REFORMKIT_TEST_KEY", "sk-test", 1);
        FakeOpenAI server(std::vector<FakeOpenAI::Reply>{{422, {}}});
        auto c = http_config(server);
        CHECK_THROWS_AS(make_http_gateway(c)->complete(hello(), c), BadRequest);
        CHECK(server.request_count() == 1);
    }

    TEST_CASE("http: persistent 429 exhausts retries") {
        ::setenv("REFORMKIT_TEST_KEY", "sk-test", 1);
        FakeOpenAI server({}, {429, {}});
        auto c = http_config(server);
        c.max_retries = 2;
        try {
            make_http_gateway(c)->complete(hello(), c);
            FAIL("expected ExhaustedRetries");
        } catch (const ExhaustedRetries& e) {
            CHECK(e.last_status() == 429);
        }
        CHECK(server.request_count() == 3);
    }

    TEST_CASE("http: seed is sent when set and empty key omits the header") {
        ::setenv("REFORMKIT_TEST_KEY", "", 1);
        FakeOpenAI server(std::vector<FakeOpenAI::Reply>{{200, {"a", "b"}}});
        auto c = http_config(server);
        c.seed = 42;
        c.n = 2;
        auto r = make_http_gateway(c)->complete(hello(), c);
        CHECK(r.choices.size() == 2);
        auto body = nlohmann::json::parse(server.bodies()[0]);
        CHECK(body["seed"] == 42);
        CHECK(body["n"] == 2);
        CHECK(server.auth_headers()[0].empty());
    }

    TEST_CASE("http: connection refused is transient and exhausts") {
        LLMConfig c;
        c.model = "m";
        c.base_url = "http://127.0.0.1:1/v1";
        c.api_key_env = "REFORMKIT_TEST_KEY";
        c.max_retries = 1;
        c.backoff_base = 1ms;
        c.timeout = 500ms;
        try {
            make_http_gateway(c)->complete(hello(), c);
            FAIL("expected ExhaustedRetries");
        } catch (const ExhaustedRetries& e) {
            CHECK(e.last_status() == 0);
        }
    }

    TEST_CASE("http: in-flight requests never exceed max_concurrency") {
        ::setenv("REFORMKIT_TEST_KEY", "sk-test", 1);
        FakeOpenAI server({}, {200, {"ok"}}, 20ms);
        auto c = http_config(server);
        c.max_concurrency = 3;
        auto gw = make_http_gateway(c);
        std::vector<std::future<void>> jobs;
        for (int i = 0; i < 24; ++i) {
            jobs.push_back(std::async(std::launch::async, [&] { gw->complete(hello(), c); }));
        }
        for (auto& j : jobs) j.get();
        CHECK(server.request_count() == 24);
        CHECK(server.high_water() <= 3);
        CHECK(server.high_water() >= 2);
    }

    TEST_CASE("base url override from the environment") {
        ::setenv("QUERYGYM_BASE_URL", "http://localhost:9999/v1", 1);
        CHECK(LLMConfig::from_environment().base_url == "http://localhost:9999/v1");
        ::unsetenv("QUERYGYM_BASE_URL");
        CHECK(LLMConfig::from_environment().base_url == "https://api.openai.com/v1");
    }
}
