#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "reformkit/llm.hpp"
#include "reformkit/reform.hpp"
#include "reformkit/retrieval.hpp"

namespace reformkit {

struct DatasetSpec {
    std::string name;
    std::filesystem::path queries;
    std::optional<std::filesystem::path> qrels;
};

struct RetrievalSpec {
    std::string searcher;
    /// Everything in the `retrieval` section besides `searcher` and `retrieval_k`.
    SearcherConfig config;
    int retrieval_k = 10;
};

struct BenchmarkConfig {
    std::vector<DatasetSpec> datasets;
    std::vector<std::string> methods;
    std::set<std::string> context_methods{"lamer", "csqe"};
    LLMConfig llm;
    std::optional<RetrievalSpec> retrieval;
    std::optional<std::filesystem::path> prompt_bank;
    std::map<std::string, int> prompt_versions;
    /// Optional extra method parameters: `params: { mugi: { num_docs: 2 } }`.
    std::map<std::string, std::map<std::string, ParamValue>> method_params;
    std::filesystem::path output_dir = "benchmark";
    bool emit_run_files = false;
    int run_k = 1000;
    std::string run_tag = "reformkit";

    /// Throws SchemaError (field path), UnknownMethod, MissingRetrievalConfig.
    void validate() const;
    /// Snapshot for the manifest. Holds no secrets: only the API-key variable name.
    nlohmann::ordered_json to_json() const;
};

/// Parses and validates the YAML config, filling defaults.
BenchmarkConfig load_config(const std::filesystem::path& path);
BenchmarkConfig parse_config(std::string_view yaml, const std::string& origin);

struct PairRecord {
    std::string dataset;
    std::string method;
    std::string status = "ok";  // ok | failed
    std::string error;
    std::size_t query_count = 0;
    std::size_t failure_count = 0;
    std::chrono::milliseconds duration{0};
    /// "id@version" → template fingerprint.
    std::map<std::string, std::string> prompt_fingerprints;
    nlohmann::ordered_json llm_echo = nlohmann::ordered_json::object();
    /// Per-query call-trace summaries.
    nlohmann::ordered_json traces = nlohmann::ordered_json::array();
    std::vector<std::string> outputs;
};

struct RunManifest {
    std::string run_id;
    std::string toolkit_version;
    std::string started_at;
    std::string finished_at;
    nlohmann::ordered_json config;
    std::map<std::string, std::string> input_digests;
    std::vector<PairRecord> pairs;
    std::vector<std::string> warnings;
    std::filesystem::path path;

    nlohmann::ordered_json to_json() const;
};

struct BenchmarkOptions {
    /// Replaces the HTTP backend (e.g. a scripted mock).
    std::shared_ptr<ChatBackend> backend;
    std::function<void(const PairRecord&)> on_pair;
};

/// Runs every (dataset, method) pair in config order and writes the manifest last.
/// Throws only for an unusable output directory or an invalid config.
RunManifest run_benchmark(const BenchmarkConfig& config, const BenchmarkOptions& options = {});

/// TREC run lines `qid Q0 docid rank score tag`, queries in the given order.
void write_run_file(const std::vector<std::pair<std::string, std::vector<SearchHit>>>& results,
                    const std::filesystem::path& path, const std::string& tag);
void write_run_lines(std::ostream& out, const std::vector<std::pair<std::string, std::vector<SearchHit>>>& results,
                     const std::string& tag);

}  // namespace reformkit
