#include <doctest.h>

#include "reformkit/digest.hpp"
#include "reformkit/errors.hpp"
#include "reformkit/prompt_bank.hpp"
#include "support/temp_dir.hpp"

using namespace reformkit;
using reformkit::testing::TempDir;

namespace {

const char* kTwoVersions = R"(id: demo.expand
version: 1
method: demo
variables: [query]
metadata:
  description: "first"
messages:
  - role: system
    body: "You expand queries."
  - role: user
    body: "Expand: {query}"
---
id: demo.expand
version: 3
method: demo
variables: [query]
metadata:
  description: "third"
  source: "local"
messages:
  - role: user
    body: "Expand this: {query} {{literal}}"
)";

std::string expected_digest(const std::string& id, int version, const std::vector<Message>& messages) {
    std::string canon = id + '\x1e' + std::to_string(version);
    for (const auto& m : messages) canon += std::string("\x1e") + to_string(m.role) + '\x1f' + m.body;
    return sha256_hex(canon);
}

}  // namespace

TEST_SUITE("prompt-bank") {
    TEST_CASE("get without version returns the greatest") {
        auto bank = PromptBank::from_yaml(kTwoVersions, "inline");
        CHECK(bank.size() == 2);
        CHECK(bank.get("demo.expand").version == 3);
        CHECK(bank.get("demo.expand", 1).metadata.at("description") == "first");
        CHECK(bank.versions("demo.expand") == std::vector<int>{1, 3});
        CHECK_THROWS_AS(bank.get("demo.expand", 2), UnknownVersion);
        CHECK_THROWS_AS(bank.get("nope"), UnknownTemplate);
        CHECK(bank.contains("demo.expand"));
        CHECK_FALSE(bank.contains("demo"));
    }

    TEST_CASE("render substitutes and unescapes braces") {
        auto bank = PromptBank::from_yaml(kTwoVersions, "inline");
        auto r = render(bank.get("demo.expand"), {{"query", "cats"}, {"extra", "x"}});
        REQUIRE(r.messages.size() == 1);
        CHECK(r.messages[0].body == "Expand this: cats {literal}");
        CHECK(r.template_id == "demo.expand");
        CHECK(r.template_version == 3);
        CHECK(r.ignored_variables == std::vector<std::string>{"extra"});
        CHECK(r.fingerprint == expected_digest("demo.expand", 3, r.messages));
    }

    TEST_CASE("render is deterministic and sensitive to variable values") {
        auto bank = PromptBank::from_yaml(kTwoVersions, "inline");
        const auto& t = bank.get("demo.expand", 1);
        auto a = render(t, {{"query", "cats"}});
        auto b = render(t, {{"query", "cats"}});
        auto c = render(t, {{"query", "cat"}});
        CHECK(a.fingerprint == b.fingerprint);
        CHECK(a.messages == b.messages);
        CHECK(a.fingerprint != c.fingerprint);
    }

    TEST_CASE("missing variable is raised") {
        auto bank = PromptBank::from_yaml(kTwoVersions, "inline");
        try {
            render(bank.get("demo.expand"), {});
            FAIL("expected MissingVariable");
        } catch (const MissingVariable& e) {
            CHECK(e.name() == "query");
        }
    }

    TEST_CASE("fingerprint covers id, version and roles") {
        std::vector<Message> m{{Role::user, "hi"}};
        const auto base = prompt_fingerprint("x", 1, m);
        CHECK(base != prompt_fingerprint("y", 1, m));
        CHECK(base != prompt_fingerprint("x", 2, m));
        CHECK(base != prompt_fingerprint("x", 1, {{Role::system, "hi"}}));
        CHECK(base == expected_digest("x", 1, m));
        CHECK(base.size() == 64);
    }

    TEST_CASE("placeholder scanning") {
        CHECK(placeholders_in("a {x} b {y_2} {x}") == std::vector<std::string>{"x", "y_2"});
        CHECK(placeholders_in("{{not}} a var").empty());
        CHECK_THROWS_AS(placeholders_in("bad {Upper}"), SchemaError);
        CHECK_THROWS_AS(placeholders_in("dangling {"), SchemaError);
        CHECK_THROWS_AS(placeholders_in("stray } brace"), SchemaError);
    }

    TEST_CASE("schema errors at load") {
        auto bad = [](const std::string& yaml) { return PromptBank::from_yaml(yaml, "bad.yaml"); };
        const std::string ok_tail = "metadata:\n  description: d\nmessages:\n  - role: user\n    body: \"{query}\"\n";
        CHECK_NOTHROW(bad("id: a\nversion: 1\nmethod: m\nvariables: [query]\n" + ok_tail));
        CHECK_THROWS_AS(bad("version: 1\nmethod: m\nvariables: [query]\n" + ok_tail), SchemaError);
        CHECK_THROWS_AS(bad("id: a\nversion: x\nmethod: m\nvariables: [query]\n" + ok_tail), SchemaError);
        CHECK_THROWS_AS(bad("id: a\nversion: 1\nmethod: m\nvariables: [query]\nmetadata: {}\nmessages:\n  - role: user\n    body: \"{query}\"\n"),
                        SchemaError);
        CHECK_THROWS_AS(bad("id: a\nversion: 1\nmethod: m\nvariables: [query]\nmetadata:\n  description: d\nmessages:\n  - role: robot\n    body: \"{query}\"\n"),
                        SchemaError);
        CHECK_THROWS_AS(bad("id: a\nversion: 1\nmethod: m\nvariables: []\n" + ok_tail), UndeclaredPlaceholder);
        CHECK_THROWS_AS(bad("id: a\nversion: 1\nmethod: m\nvariables: [query, other]\n" + ok_tail), SchemaError);
        const std::string one = "id: a\nversion: 1\nmethod: m\nvariables: [query]\n" + ok_tail;
        CHECK_THROWS_AS(bad(one + "---\n" + one), DuplicateVersion);
    }

    TEST_CASE("load scans a directory recursively") {
        TempDir dir;
        const std::string tail = "method: m\nvariables: [query]\nmetadata:\n  description: d\nmessages:\n  - role: user\n    body: \"{query}\"\n";
        dir.write("a.yaml", "id: one\nversion: 1\n" + tail);
        dir.write("nested/deeper/b.yml", "id: two\nversion: 2\n" + tail);
        dir.write("nested/ignored.txt", "not yaml: [");
        auto bank = PromptBank::load(dir.path());
        CHECK(bank.size() == 2);
        CHECK(bank.get("two").version == 2);
        auto single = PromptBank::load(dir / "a.yaml");
        CHECK(single.size() == 1);
        CHECK_THROWS_AS(PromptBank::load(dir / "missing"), IoError);
    }

    TEST_CASE("list_templates filters by method") {
        auto bank = PromptBank::from_yaml(kTwoVersions, "inline");
        auto all = bank.list_templates();
        REQUIRE(all.size() == 2);
        CHECK(all[0].description == "first");
        CHECK(bank.list_templates(std::string_view("demo")).size() == 2);
        CHECK(bank.list_templates(std::string_view("other")).empty());
    }

    TEST_CASE("builtin bank covers every shipped method") {
        const auto& bank = PromptBank::builtin();
        for (const char* method : {"query2doc", "genqr", "genqr_ensemble", "query2e", "qa_expand", "mugi", "lamer", "csqe"}) {
            CAPTURE(method);
            CHECK_FALSE(bank.list_templates(std::string_view(method)).empty());
        }
        CHECK(bank.list_templates(std::string_view("genqr_ensemble")).size() == 10);
    }

    TEST_CASE("template fingerprint ignores rendering") {
        auto bank = PromptBank::from_yaml(kTwoVersions, "inline");
        const auto& t = bank.get("demo.expand", 1);
        CHECK(template_fingerprint(t) == expected_digest("demo.expand", 1, t.messages));
    }
}
