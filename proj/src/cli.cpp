#include "reformkit/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <yaml-cpp/yaml.h>

#include "reformkit/bench.hpp"
#include "reformkit/data.hpp"
#include "reformkit/errors.hpp"
#include "reformkit/llm.hpp"
#include "reformkit/prompt_bank.hpp"
#include "reformkit/reform.hpp"
#include "reformkit/retrieval.hpp"
#include "reformkit/version.hpp"

namespace reformkit {
namespace {

namespace fs = std::filesystem;

// Splits `k=v` flags; the flag name is used in error messages.
std::map<std::string, std::string> parse_pairs(const std::vector<std::string>& pairs, const std::string& flag) {
    std::map<std::string, std::string> out;
    for (const auto& p : pairs) {
        auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError(flag + ": expected key=value, got '" + p + "'");
        out[p.substr(0, eq)] = p.substr(eq + 1);
    }
    return out;
}

std::shared_ptr<const PromptBank> open_bank(const std::string& path) {
    if (path.empty()) return std::shared_ptr<const PromptBank>(&PromptBank::builtin(), [](const PromptBank*) {});
    return std::make_shared<const PromptBank>(PromptBank::load(path));
}

void print_template(std::ostream& out, const PromptTemplate& t) {
    YAML::Emitter y;
    y << YAML::BeginMap;
    y << YAML::Key << "id" << YAML::Value << t.id;
    y << YAML::Key << "version" << YAML::Value << t.version;
    y << YAML::Key << "method" << YAML::Value << t.method;
    y << YAML::Key << "variables" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& v : t.variables) y << v;
    y << YAML::EndSeq;
    y << YAML::Key << "metadata" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : t.metadata) y << YAML::Key << k << YAML::Value << v;
    y << YAML::EndMap;
    y << YAML::Key << "messages" << YAML::Value << YAML::BeginSeq;
    for (const auto& m : t.messages) {
        y << YAML::BeginMap << YAML::Key << "role" << YAML::Value << to_string(m.role);
        y << YAML::Key << "body" << YAML::Value;
        if (m.body.find('\n') != std::string::npos) y << YAML::Literal;
        y << m.body << YAML::EndMap;
    }
    y << YAML::EndSeq;
    y << YAML::Key << "fingerprint" << YAML::Value << template_fingerprint(t);
    y << YAML::EndMap;
    out << y.c_str() << '\n';
}

struct ReformulateArgs {
    std::string method;
    std::string queries;
    std::string model;
    std::optional<int> prompt_version;
    std::vector<std::string> params;
    std::string out;
    std::string out_jsonl;
    std::string base_url;
    std::string mock;
    std::string bank;
    std::string searcher;
    std::vector<std::string> searcher_config;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    std::optional<std::int64_t> seed;
    std::optional<int> max_concurrency;
    std::optional<int> max_retries;
};

int cmd_reformulate(const ReformulateArgs& a, std::ostream& out, std::ostream& err) {
    // Validate everything that is a usage problem before touching files.
    const auto& info = MethodRegistry::instance().get(a.method);
    if (info.requires_searcher && a.searcher.empty()) {
        err << "error: --method " << a.method
            << " needs retrieved context; pass --searcher NAME --searcher-config key=value (e.g. --searcher bm25_local "
               "--searcher-config index=PATH)\n";
        return kExitUsage;
    }
    MethodParams params;
    for (const auto& [k, v] : parse_pairs(a.params, "--params")) params.set(k, parse_param_literal(v));
    if (a.prompt_version) params.set("prompt_version", static_cast<std::int64_t>(*a.prompt_version));

    auto llm = LLMConfig::from_environment();
    if (!a.base_url.empty()) llm.base_url = a.base_url;
    if (a.temperature) llm.temperature = *a.temperature;
    if (a.max_tokens) llm.max_tokens = *a.max_tokens;
    if (a.max_concurrency) llm.max_concurrency = *a.max_concurrency;
    if (a.max_retries) llm.max_retries = *a.max_retries;
    llm.model = a.model;

    auto queries = load_queries(a.queries);
    if (!a.searcher.empty()) {
        params.searcher = create_searcher(a.searcher, parse_pairs(a.searcher_config, "--searcher-config"));
    }
    ReformulatorOptions options;
    options.bank = open_bank(a.bank);
    if (!a.mock.empty()) {
        options.gateway = std::make_shared<LlmGateway>(MockChatBackend::from_file(a.mock), llm.max_concurrency);
    }
    auto reformulator = create_reformulator(a.method, a.model, std::move(params), llm, a.seed, std::move(options));
    auto results = reformulator->reformulate_batch(queries);

    std::vector<QueryItem> items;
    std::size_t failures = 0;
    for (const auto& r : results) {
        items.push_back(QueryItem{r.qid, r.reformulated});
        if (r.failed()) {
            ++failures;
            err << "warning: " << r.qid << ": " << std::get<std::string>(r.metadata.at("error")) << '\n';
        }
    }
    if (!a.out.empty()) {
        save_queries_tsv(items, a.out);
    } else if (a.out_jsonl.empty()) {
        write_queries_tsv(out, items);
    }
    if (!a.out_jsonl.empty()) save_results_jsonl(results, a.out_jsonl);
    if (!results.empty() && failures == results.size()) {
        err << "error: every query fell back to its original text\n";
        return kExitBackend;
    }
    return kExitOk;
}

int cmd_search(const std::string& index_path, const std::string& queries_path, int k, const std::string& out_run,
               const std::string& tag, std::optional<double> k1, std::optional<double> b, std::ostream& out) {
    if (k < 1) throw UsageError("--k must be >= 1");
    auto index = std::make_shared<const BM25Index>(BM25Index::load(index_path));
    BM25Params params = index->default_params();
    if (k1) params.k1 = *k1;
    if (b) params.b = *b;
    params.validate();
    Bm25Searcher searcher(index, params);
    auto queries = load_queries(queries_path);
    auto outcomes = batch_search(searcher, queries, static_cast<std::size_t>(k));
    std::vector<std::pair<std::string, std::vector<SearchHit>>> run;
    for (const auto& q : queries) run.emplace_back(q.qid, std::move(outcomes[q.qid].hits));
    if (out_run.empty()) {
        write_run_lines(out, run, tag);
    } else {
        write_run_file(run, out_run, tag);
    }
    return kExitOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const BackendError*>(&e)) return kExitBackend;
    if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
    return kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LLM-based query reformulation toolkit", "reformkit"};
    app.set_version_flag("--version", kToolkitVersion);
    app.require_subcommand(1);

    auto* methods = app.add_subcommand("methods", "List registered reformulation methods");

    auto* prompts = app.add_subcommand("prompts", "Inspect the prompt bank");
    prompts->require_subcommand(1);
    std::string bank_path;
    std::string method_filter;
    auto* prompts_list = prompts->add_subcommand("list", "List templates");
    prompts_list->add_option("--method", method_filter, "Only templates owned by this method");
    prompts_list->add_option("--bank", bank_path, "Prompt bank directory or file (default: built-in)");
    std::string show_id;
    std::optional<int> show_version;
    auto* prompts_show = prompts->add_subcommand("show", "Print one template");
    prompts_show->add_option("id", show_id, "Template id")->required();
    prompts_show->add_option("--version", show_version, "Template version (default: latest)");
    prompts_show->add_option("--bank", bank_path, "Prompt bank directory or file (default: built-in)");

    ReformulateArgs ra;
    auto* reformulate = app.add_subcommand("reformulate", "Reformulate a query file");
    reformulate->add_option("--method", ra.method, "Method name")->required();
    reformulate->add_option("--queries", ra.queries, "Query file (TSV or JSONL)")->required();
    reformulate->add_option("--model", ra.model, "Model name")->required();
    reformulate->add_option("--prompt-version", ra.prompt_version, "Prompt version for every template");
    reformulate->add_option("--params", ra.params, "Method parameters key=value")->expected(0, -1);
    reformulate->add_option("--out", ra.out, "Retrieval-ready TSV output (default: stdout)");
    reformulate->add_option("--out-jsonl", ra.out_jsonl, "Structured JSONL output");
    reformulate->add_option("--base-url", ra.base_url, "OpenAI-compatible endpoint");
    reformulate->add_option("--mock", ra.mock, "Scripted mock backend (JSON)");
    reformulate->add_option("--bank", ra.bank, "Prompt bank directory or file (default: built-in)");
    reformulate->add_option("--searcher", ra.searcher, "Registered searcher for context methods");
    reformulate->add_option("--searcher-config", ra.searcher_config, "Searcher settings key=value")->expected(0, -1);
    reformulate->add_option("--temperature", ra.temperature, "Sampling temperature");
    reformulate->add_option("--max-tokens", ra.max_tokens, "Completion token limit");
    reformulate->add_option("--seed", ra.seed, "Sampling seed passed to the backend");
    reformulate->add_option("--max-concurrency", ra.max_concurrency, "In-flight LLM requests");
    reformulate->add_option("--max-retries", ra.max_retries, "Retries for transient failures");

    auto* index = app.add_subcommand("index", "Build a BM25 index");
    index->require_subcommand(1);
    std::string corpus_path, index_out;
    double build_k1 = 0.9, build_b = 0.4;
    auto* index_build = index->add_subcommand("build", "Index a corpus file (TSV or JSONL)");
    index_build->add_option("--corpus", corpus_path, "Corpus file")->required();
    index_build->add_option("--out", index_out, "Index output path")->required();
    index_build->add_option("--k1", build_k1, "Default BM25 k1")->capture_default_str();
    index_build->add_option("--b", build_b, "Default BM25 b")->capture_default_str();

    auto* search = app.add_subcommand("search", "Search a BM25 index and print TREC run lines");
    std::string search_index, search_queries, search_out, search_tag = "reformkit";
    int search_k = 1000;
    std::optional<double> search_k1, search_b;
    search->add_option("--index", search_index, "Index file")->required();
    search->add_option("--queries", search_queries, "Query file (TSV or JSONL)")->required();
    search->add_option("--k", search_k, "Hits per query")->capture_default_str();
    search->add_option("--out-run", search_out, "Run file path (default: stdout)");
    search->add_option("--tag", search_tag, "Run tag")->capture_default_str();
    search->add_option("--k1", search_k1, "Override BM25 k1");
    search->add_option("--b", search_b, "Override BM25 b");

    auto* benchmark = app.add_subcommand("benchmark", "Run a benchmark configuration");
    std::string config_path, bench_mock;
    benchmark->add_option("--config", config_path, "Benchmark YAML")->required();
    benchmark->add_option("--mock", bench_mock, "Scripted mock backend (JSON)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolkitVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*methods) {
            for (const auto& m : MethodRegistry::instance().list()) {
                out << m.name << "  " << (m.requires_searcher ? "yes" : "no") << "  " << to_string(m.default_concat)
                    << '\n';
            }
            return kExitOk;
        }
        if (*prompts_list) {
            auto bank = open_bank(bank_path);
            std::optional<std::string_view> filter;
            if (!method_filter.empty()) filter = method_filter;
            for (const auto& row : bank->list_templates(filter)) {
                out << row.id << '\t' << row.version << '\t' << row.method << '\t' << row.description << '\n';
            }
            return kExitOk;
        }
        if (*prompts_show) {
            auto bank = open_bank(bank_path);
            print_template(out, bank->get(show_id, show_version));
            return kExitOk;
        }
        if (*reformulate) {
            try {
                return cmd_reformulate(ra, out, err);
            } catch (const MissingSearcher& e) {
                err << "error: " << e.what() << " (use --searcher and --searcher-config)\n";
                return kExitUsage;
            }
        }
        if (*index_build) {
            BM25Params params{build_k1, build_b};
            params.validate();
            auto idx = BM25Index::build(load_corpus(corpus_path), params);
            idx.save(index_out);
            out << "indexed " << idx.doc_count() << " documents (" << idx.vocabulary_size() << " terms) into "
                << index_out << '\n';
            return kExitOk;
        }
        if (*search) {
            return cmd_search(search_index, search_queries, search_k, search_out, search_tag, search_k1, search_b,
                              out);
        }
        if (*benchmark) {
            BenchmarkConfig config;
            try {
                config = load_config(config_path);
            } catch (const Error& e) {
                err << "error: " << config_path << ": " << e.what() << '\n';
                return kExitData;
            }
            BenchmarkOptions options;
            if (!bench_mock.empty()) options.backend = MockChatBackend::from_file(bench_mock);
            options.on_pair = [&](const PairRecord& p) {
                out << "[" << p.dataset << "/" << p.method << "] " << p.status << ": " << p.query_count
                    << " queries, " << p.failure_count << " fallbacks, " << p.duration.count() << " ms";
                if (!p.error.empty()) out << " (" << p.error << ")";
                out << '\n';
            };
            try {
                auto manifest = run_benchmark(config, options);
                out << "manifest: " << manifest.path.string() << '\n';
            } catch (const BackendError& e) {
                err << "error: " << e.what() << '\n';
                return kExitBackend;
            } catch (const Error& e) {
                err << "error: " << e.what() << '\n';
                return kExitData;
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace reformkit
