#include <doctest.h>

#include <algorithm>
#include <random>

#include "reformkit/errors.hpp"
#include "reformkit/reform.hpp"
#include "support/scripted.hpp"

using namespace reformkit;
using namespace std::chrono_literals;
using namespace reformkit::testing;

namespace {

struct Rig {
    std::shared_ptr<MockChatBackend> backend;
    std::unique_ptr<Reformulator> reformulator;
};

Rig make(const std::string& method, std::vector<MockResponse> script, MethodParams params = {}, int concurrency = 1,
         MockChatBackend::LatencyFn latency = {}) {
    Rig rig;
    rig.backend = std::make_shared<MockChatBackend>(std::move(script), std::move(latency));
    LLMConfig llm;
    llm.max_concurrency = concurrency;
    llm.backoff_base = 1ms;
    llm.max_retries = 1;
    ReformulatorOptions options;
    options.gateway = std::make_shared<LlmGateway>(rig.backend, concurrency);
    rig.reformulator = create_reformulator(method, "mock-model", std::move(params), llm, 42, options);
    return rig;
}

const std::vector<std::string>& strings(const Metadata& m, const std::string& key) {
    return std::get<std::vector<std::string>>(m.at(key));
}

}  // namespace

TEST_SUITE("reform-engine") {
    TEST_CASE("concat strategies") {
        CHECK(concat("a", {"b", "c"}, ConcatStrategy::append, 5) == "a b c");
        CHECK(concat("q", {"d"}, ConcatStrategy::repeat_query, 3) == "q q q d");
        CHECK(concat("blue sky", {"sky color azure color"}, ConcatStrategy::unique_terms, 5) == "blue sky color azure");
        CHECK(concat("  spaced   out ", {" x\t\ty "}, ConcatStrategy::append, 1) == "spaced out x y");
        CHECK(concat("q", {"d"}, ConcatStrategy::repeat_query, 0) == "d");
        CHECK(concat("Sky", {"SKY Blue blue"}, ConcatStrategy::unique_terms, 1) == "Sky Blue");
    }

    TEST_CASE("param literals") {
        CHECK(std::get<std::int64_t>(parse_param_literal("10")) == 10);
        CHECK(std::get<double>(parse_param_literal("0.3")) == doctest::Approx(0.3));
        CHECK(std::get<bool>(parse_param_literal("true")) == true);
        CHECK(std::get<std::string>(parse_param_literal("append")) == "append");
    }

    TEST_CASE("parsers") {
        CHECK(parse::keywords("blue, azure\nnavy") == std::vector<std::string>{"blue", "azure", "navy"});
        CHECK(parse::keywords(" , \n").empty());
        CHECK(parse::keywords("one two three four five six seven eight nine ten eleven, ok") ==
              std::vector<std::string>{"ok"});
        CHECK(parse::lines("1. first\n2) second\n- third\n* fourth\n\n  plain  ") ==
              std::vector<std::string>{"first", "second", "third", "fourth", "plain"});
        CHECK(parse::lines("\xE2\x80\xA2 bullet") == std::vector<std::string>{"bullet"});
        CHECK(parse::passages("one\ntwo\n\n\nthree") == std::vector<std::string>{"one\ntwo", "three"});
        CHECK(parse::passages("single block") == std::vector<std::string>{"single block"});
        CHECK(format_passages({"x", "y"}) == "[1] x\n[2] y");
        CHECK(format_passages({}) == "(no passages retrieved)");
    }

    TEST_CASE("registry lists the eight built-ins") {
        std::vector<std::string> names;
        for (const auto& m : MethodRegistry::instance().list()) names.push_back(m.name);
        for (const char* n : {"csqe", "genqr", "genqr_ensemble", "lamer", "mugi", "qa_expand", "query2doc", "query2e"}) {
            CHECK(std::find(names.begin(), names.end(), n) != names.end());
        }
        CHECK(std::is_sorted(names.begin(), names.end()));
        CHECK_THROWS_AS(register_method("query2doc", [](MethodSetup) { return nullptr; }, false), DuplicateRegistration);
        CHECK_THROWS_AS(register_method("Bad-Name", [](MethodSetup) { return nullptr; }, false), InvalidParam);
    }

    TEST_CASE("create_reformulator errors") {
        CHECK_THROWS_AS(make("nope", {}), UnknownMethod);
        CHECK_THROWS_AS(make("csqe", {}), MissingSearcher);
        CHECK_THROWS_AS(make("lamer", {}), MissingSearcher);
        CHECK_THROWS_AS(make("query2doc", {}, MethodParams{}.set("bogus", std::int64_t{1})), InvalidParam);
        CHECK_THROWS_AS(make("query2doc", {}, MethodParams{}.set("concat_strategy", std::string("zigzag"))), InvalidParam);
        CHECK_THROWS_AS(make("qa_expand", {}, MethodParams{}.set("num_questions", std::int64_t{0})), InvalidParam);
        CHECK_THROWS_AS(make("query2doc", {}, MethodParams{}.set("prompt_version", std::int64_t{9})), UnknownVersion);
    }

    TEST_CASE("query2doc repeats the query five times") {
        auto rig = make("query2doc", {next({"paris is the capital of france"})});
        auto r = rig.reformulator->reformulate({"q1", "capital of france"});
        std::string expected;
        for (int i = 0; i < 5; ++i) expected += "capital of france ";
        expected += "paris is the capital of france";
        CHECK(r.reformulated == expected);
        CHECK_FALSE(r.failed());
        CHECK(rig.backend->call_count() == 1);
        CHECK(r.qid == "q1");
        CHECK(r.original == "capital of france");
        CHECK(strings(r.metadata, "generations") == std::vector<std::string>{"paris is the capital of france"});
        CHECK(strings(r.metadata, "prompt_templates").size() == 1);
        CHECK(strings(r.metadata, "prompt_templates")[0].rfind("query2doc.passage_gen@1:", 0) == 0);
        CHECK(std::get<std::int64_t>(r.metadata.at("query_weight")) == 5);
        REQUIRE(r.traces.size() == 1);
        CHECK(r.traces[0].seed == 42);
        CHECK(r.traces[0].prompt == "query2doc.passage_gen@1");
        auto req = rig.backend->requests()[0].request;
        CHECK(req.messages.back().body.find("capital of france") != std::string::npos);
    }

    TEST_CASE("query2doc keeps extra choices as unused") {
        auto rig = make("query2doc", {next({"first doc", "second doc"})});
        auto r = rig.reformulator->reformulate({"q1", "x"});
        CHECK(r.reformulated == "x x x x x first doc");
        CHECK(strings(r.metadata, "unused_choices") == std::vector<std::string>{"second doc"});
    }

    TEST_CASE("fallback on empty generation and on failure") {
        auto empty = make("query2doc", {next({"   "})});
        auto r = empty.reformulator->reformulate({"q1", "orig text"});
        CHECK(r.reformulated == "orig text");
        CHECK(r.failed());

        auto broken = make("query2doc", {fail_on("")});
        auto r2 = broken.reformulator->reformulate({"q1", "orig text"});
        CHECK(r2.reformulated == "orig text");
        CHECK(r2.failed());
        CHECK(broken.backend->call_count() == 2);  // one retry
    }

    TEST_CASE("genqr parses keywords and deduplicates") {
        auto rig = make("genqr", {next({"blue, azure\nnavy"})});
        auto r = rig.reformulator->reformulate({"q1", "dark blue"});
        CHECK(strings(r.metadata, "expansions") == std::vector<std::string>{"blue", "azure", "navy"});
        CHECK(r.reformulated == "dark blue azure navy");
        CHECK(rig.backend->call_count() == 1);

        auto echo = make("genqr", {next({"dark blue"})});
        CHECK(echo.reformulator->reformulate({"q1", "dark blue"}).reformulated == "dark blue");

        auto none = make("genqr", {next({" ,, "})});
        CHECK(none.reformulator->reformulate({"q1", "dark blue"}).failed());
    }

    TEST_CASE("query2e uses its own template with one call") {
        auto rig = make("query2e", {on(marker::query2e, {"eiffel tower, louvre"})});
        auto r = rig.reformulator->reformulate({"q1", "paris"});
        CHECK(r.reformulated == "paris eiffel tower louvre");
        CHECK(rig.backend->call_count() == 1);
    }

    TEST_CASE("genqr_ensemble: one call per variant, union in order, failures isolated") {
        auto rig = make("genqr_ensemble", {next({"a, b"}), next({"b, c"})},
                        MethodParams{}.set("n_instructions", std::int64_t{2}));
        auto r = rig.reformulator->reformulate({"q1", "query"});
        CHECK(r.reformulated == "query a b c");
        CHECK(rig.backend->call_count() == 2);

        auto full = make("genqr_ensemble", {on(marker::keywords_list, {"k"})});
        full.reformulator->reformulate({"q1", "query"});
        CHECK(full.backend->call_count() == 10);

        MockResponse bad{std::nullopt, {}};
        bad.status = 400;
        auto partial = make("genqr_ensemble", {next({"a"}), bad, next({"c"})},
                            MethodParams{}.set("num_keywords_sets", std::int64_t{3}));
        auto r3 = partial.reformulator->reformulate({"q1", "query"});
        CHECK_FALSE(r3.failed());
        CHECK(r3.reformulated == "query a c");
        CHECK(strings(r3.metadata, "failed_variants").size() == 1);
    }

    TEST_CASE("qa_expand: one call plus one per question") {
        auto rig = make("qa_expand", {on(marker::qa_questions, {"1. who?\n2. when?"}),
                                      on("Question: who?", {"answer one"}),
                                      on("Question: when?", {"answer two"})});
        auto r = rig.reformulator->reformulate({"q1", "history"});
        CHECK(rig.backend->call_count() == 3);
        CHECK(r.reformulated == "history answer one answer two");

        auto single = make("qa_expand", {on(marker::qa_questions, {"a?\nb?\nc?"}), on(marker::qa_answer, {"ans"})},
                           MethodParams{}.set("num_questions", std::int64_t{1}));
        single.reformulator->reformulate({"q1", "x"});
        CHECK(single.backend->call_count() == 2);

        auto none = make("qa_expand", {next({"\n\n"})});
        CHECK(none.reformulator->reformulate({"q1", "x"}).failed());
    }

    TEST_CASE("mugi adaptive weight") {
        std::vector<std::string> docs{"w w w w w w w w w w w w w w w w w w w w", "w w w w w w w w w w w w w w w w w w w w"};
        CHECK(methods::mugi_adaptive_weight("a b c d", docs, 0.3) == 3);
        CHECK(methods::mugi_adaptive_weight("a b c d", docs, 0.0) == 1);
    }

    TEST_CASE("mugi: n=num_docs in one call, top-up when fewer choices return") {
        auto rig = make("mugi", {next({"d1 text", "d2 text", "d3 text"})});
        auto r = rig.reformulator->reformulate({"q1", "query"});
        CHECK(rig.backend->call_count() == 1);
        CHECK(rig.backend->requests()[0].request.n == 3);
        CHECK(strings(r.metadata, "expansions").size() == 3);

        auto topup = make("mugi", {on(marker::mugi, {"only one"})});
        auto r2 = topup.reformulator->reformulate({"q1", "query"});
        CHECK(topup.backend->call_count() == 3);
        CHECK(strings(r2.metadata, "expansions").size() == 3);

        auto one = make("mugi", {next({"solo"})}, MethodParams{}.set("num_docs", std::int64_t{1}));
        CHECK(one.reformulator->reformulate({"q1", "query"}).reformulated == "query solo");

        auto fixed = make("mugi", {next({"a", "b", "c"})}, MethodParams{}.set("query_weight", std::int64_t{2}));
        CHECK(fixed.reformulator->reformulate({"q1", "query"}).reformulated == "query query a b c");
    }

    TEST_CASE("lamer: passages rendered in rank order, answers appended") {
        auto searcher = ScriptedSearcher::numbered(3);
        MethodParams params;
        params.searcher = searcher;
        auto rig = make("lamer", {on(marker::lamer, {"ans a\n\nans b\n\nans c\n\nans d"})}, params);
        auto r = rig.reformulator->reformulate({"q1", "query"});
        CHECK(searcher->calls() == 1);
        CHECK(searcher->last_k() == 10);
        CHECK(rig.backend->call_count() == 1);
        const auto body = rig.backend->requests()[0].request.messages.back().body;
        auto p1 = body.find("[1] passage text 1");
        auto p2 = body.find("[2] passage text 2");
        auto p3 = body.find("[3] passage text 3");
        CHECK(p1 != std::string::npos);
        CHECK(p1 < p2);
        CHECK(p2 < p3);
        CHECK(r.reformulated == "query ans a ans b ans c");
        CHECK(strings(r.metadata, "retrieved_docids") == std::vector<std::string>{"p1", "p2", "p3"});

        MethodParams empty_params;
        empty_params.searcher = ScriptedSearcher::numbered(0);
        auto empty = make("lamer", {on(marker::lamer, {"answer"})}, empty_params);
        CHECK_FALSE(empty.reformulator->reformulate({"q1", "query"}).failed());
        CHECK(empty.backend->requests()[0].request.messages.back().body.find("(no passages retrieved)") !=
              std::string::npos);

        MethodParams failing;
        failing.searcher = ScriptedSearcher::numbered(3, "boom");
        auto broken = make("lamer", {on(marker::lamer, {"answer"})}, failing);
        auto r3 = broken.reformulator->reformulate({"q1", "boom query"});
        CHECK(r3.failed());
        CHECK(r3.reformulated == "boom query");
        CHECK(broken.backend->call_count() == 0);
    }

    TEST_CASE("csqe: one search, two calls, ten passages in the extraction prompt") {
        auto searcher = ScriptedSearcher::numbered(12);
        MethodParams params;
        params.searcher = searcher;
        auto rig = make("csqe",
                        {on(marker::csqe_extract, {"s1.\ns2."}),
                         on(marker::csqe_generate, {"g1\n\ng2\n\ng3\n\ng4\n\ng5"})},
                        params);
        auto r = rig.reformulator->reformulate({"q1", "q"});
        CHECK(searcher->calls() == 1);
        CHECK(searcher->last_k() == 10);
        CHECK(rig.backend->call_count() == 2);
        CHECK(strings(r.metadata, "generated_passages").size() == 5);
        CHECK(r.reformulated == "q q q q q s1. s2. g1 g2 g3 g4 g5");
        std::string extract_body;
        for (const auto& rec : rig.backend->requests()) {
            if (rec.matched == marker::csqe_extract) extract_body = rec.request.messages.back().body;
        }
        for (int i = 1; i <= 10; ++i) {
            CHECK(extract_body.find("[" + std::to_string(i) + "] passage text " + std::to_string(i)) != std::string::npos);
        }
        CHECK(extract_body.find("passage text 11") == std::string::npos);

        auto gen_only = make("csqe", {on(marker::csqe_extract, {""}), on(marker::csqe_generate, {"g1"})}, params);
        auto r2 = gen_only.reformulator->reformulate({"q1", "q"});
        CHECK_FALSE(r2.failed());
        CHECK(r2.reformulated == "q q q q q g1");

        auto neither = make("csqe", {on(marker::csqe_extract, {""}), on(marker::csqe_generate, {" "})}, params);
        CHECK(neither.reformulator->reformulate({"q1", "q"}).failed());
    }

    TEST_CASE("batch: order preserved under concurrency with progress") {
        std::mt19937 rng(99);
        std::mutex m;
        auto latency = [&](const ChatRequest&) {
            std::lock_guard lock(m);
            return std::chrono::milliseconds(std::uniform_int_distribution<int>(0, 4)(rng));
        };
        auto rig = make("query2doc", {on("Query:", {"doc"})}, {}, 4, latency);
        std::vector<QueryItem> queries;
        for (int i = 0; i < 40; ++i) queries.push_back({"q" + std::to_string(i), "text " + std::to_string(i)});
        std::size_t last = 0;
        auto results = rig.reformulator->reformulate_batch(queries, [&](std::size_t done, std::size_t total) {
            CHECK(total == 40);
            CHECK(done == last + 1);
            last = done;
        });
        REQUIRE(results.size() == 40);
        for (std::size_t i = 0; i < results.size(); ++i) {
            CHECK(results[i].qid == queries[i].qid);
            CHECK(results[i].reformulated.find(queries[i].text) != std::string::npos);
        }
        CHECK(last == 40);
        CHECK(rig.reformulator->reformulate_batch({}).empty());
    }
}
