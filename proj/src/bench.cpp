#include "reformkit/bench.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "reformkit/digest.hpp"
#include "reformkit/errors.hpp"
#include "reformkit/version.hpp"

namespace reformkit {
namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

const std::set<std::string> kTopLevelKeys = {"datasets", "methods",        "context_methods", "llm",    "retrieval",
                                             "prompts",  "params",         "output_dir",      "run_k",  "run_tag",
                                             "emit_run_files"};

template <typename T>
T scalar(const YAML::Node& node, const std::string& where) {
    if (!node.IsScalar()) throw SchemaError(where, "expected a scalar value");
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw SchemaError(where, "value '" + node.Scalar() + "' has the wrong type");
    }
}

ParamValue yaml_param(const YAML::Node& node, const std::string& where) {
    if (!node.IsScalar()) throw SchemaError(where, "expected a scalar value");
    if (node.Tag() == "!") return node.Scalar();  // quoted
    return parse_param_literal(node.Scalar());
}

LLMConfig parse_llm(const YAML::Node& node) {
    if (!node || !node.IsMap()) throw SchemaError("llm", "section is required and must be a mapping");
    auto cfg = LLMConfig::from_environment();
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        const auto where = "llm." + key;
        const auto& v = kv.second;
        if (key == "model") {
            cfg.model = scalar<std::string>(v, where);
        } else if (key == "temperature") {
            cfg.temperature = scalar<double>(v, where);
        } else if (key == "max_tokens") {
            cfg.max_tokens = scalar<int>(v, where);
        } else if (key == "seed") {
            if (!v.IsNull()) cfg.seed = scalar<std::int64_t>(v, where);
        } else if (key == "n") {
            cfg.n = scalar<int>(v, where);
        } else if (key == "base_url") {
            cfg.base_url = scalar<std::string>(v, where);
        } else if (key == "api_key_env") {
            cfg.api_key_env = scalar<std::string>(v, where);
        } else if (key == "timeout") {
            cfg.timeout = std::chrono::milliseconds{static_cast<std::int64_t>(scalar<double>(v, where) * 1000.0)};
        } else if (key == "max_retries") {
            cfg.max_retries = scalar<int>(v, where);
        } else if (key == "max_concurrency") {
            cfg.max_concurrency = scalar<int>(v, where);
        } else if (key == "backoff_base") {
            cfg.backoff_base = std::chrono::milliseconds{static_cast<std::int64_t>(scalar<double>(v, where) * 1000.0)};
        } else {
            throw SchemaError(where, "unknown key");
        }
    }
    try {
        cfg.validate();
    } catch (const InvalidParam& e) {
        // validate() messages start with the field path.
        std::string what = e.what();
        auto colon = what.find(':');
        throw SchemaError(what.substr(0, colon), colon == std::string::npos ? what : what.substr(colon + 2));
    }
    return cfg;
}

std::string utc_timestamp(std::chrono::system_clock::time_point tp, const char* fmt) {
    const auto t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::strftime(buf, sizeof buf, fmt, &tm);
    return buf;
}

std::string make_run_id(std::chrono::system_clock::time_point now) {
    std::random_device rd;
    std::ostringstream suffix;
    suffix << std::hex << std::setw(8) << std::setfill('0') << rd();
    return utc_timestamp(now, "%Y%m%dT%H%M%SZ") + "-" + suffix.str();
}

ordered_json trace_json(const CallTrace& t) {
    ordered_json j;
    j["prompt"] = t.prompt;
    j["request_fingerprint"] = t.request_fingerprint;
    j["model"] = t.model;
    j["temperature"] = t.temperature;
    j["max_tokens"] = t.max_tokens;
    j["seed"] = t.seed ? ordered_json(*t.seed) : ordered_json(nullptr);
    j["n"] = t.n;
    j["attempts"] = t.attempt_count;
    j["choices"] = t.choices_returned;
    j["latency_ms"] = static_cast<double>(t.latency.count()) / 1000.0;
    j["backend"] = to_string(t.backend);
    return j;
}

ordered_json llm_echo(const LLMConfig& c) {
    ordered_json j;
    j["model"] = c.model;
    j["temperature"] = c.temperature;
    j["max_tokens"] = c.max_tokens;
    j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);
    return j;
}

// Single-writer guard over the output directory.
class OutputLock {
  public:
    OutputLock(const fs::path& dir, std::vector<std::string>& warnings) : path_(dir / ".lock") {
        std::error_code ec;
        if (fs::exists(path_, ec)) {
            const auto age = fs::file_time_type::clock::now() - fs::last_write_time(path_, ec);
            if (!ec && age > std::chrono::hours(24)) {
                warnings.push_back("overrode stale lock file " + path_.string());
                fs::remove(path_, ec);
            } else {
                throw IoError("output directory '" + dir.string() + "' is locked by another run (" + path_.string() +
                              ")");
            }
        }
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw IoError("cannot create lock file '" + path_.string() + "'");
        std::fprintf(f, "%s\n", utc_timestamp(std::chrono::system_clock::now(), "%Y-%m-%dT%H:%M:%SZ").c_str());
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

  private:
    fs::path path_;
};

}  // namespace

void BenchmarkConfig::validate() const {
    if (datasets.empty()) throw SchemaError("datasets", "at least one dataset is required");
    std::set<std::string> names;
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto where = "datasets[" + std::to_string(i) + "]";
        if (datasets[i].name.empty()) throw SchemaError(where + ".name", "must be non-empty");
        if (datasets[i].name.find_first_of("/\\") != std::string::npos || datasets[i].name == ".." ||
            datasets[i].name == ".") {
            throw SchemaError(where + ".name", "must be a plain directory name");
        }
        if (!names.insert(datasets[i].name).second) {
            throw SchemaError(where + ".name", "duplicate dataset name '" + datasets[i].name + "'");
        }
        if (datasets[i].queries.empty()) throw SchemaError(where + ".queries", "missing");
    }
    if (methods.empty()) throw SchemaError("methods", "at least one method is required");
    std::set<std::string> seen;
    for (const auto& m : methods) {
        if (!seen.insert(m).second) throw SchemaError("methods", "duplicate method '" + m + "'");
        MethodRegistry::instance().get(m);
    }
    for (const auto& m : methods) {
        const bool needs = context_methods.contains(m) || MethodRegistry::instance().get(m).requires_searcher;
        if (needs && !retrieval) {
            throw MissingRetrievalConfig("method '" + m + "' needs a searcher but the config has no retrieval section");
        }
    }
    if (emit_run_files && !retrieval) {
        throw MissingRetrievalConfig("emit_run_files needs a retrieval section");
    }
    if (retrieval && retrieval->retrieval_k < 1) throw SchemaError("retrieval.retrieval_k", "must be >= 1");
    if (run_k < 1) throw SchemaError("run_k", "must be >= 1");
    if (run_tag.empty() || run_tag.find_first_of(" \t\n") != std::string::npos) {
        throw SchemaError("run_tag", "must be a non-empty token without whitespace");
    }
    if (output_dir.empty()) throw SchemaError("output_dir", "must be non-empty");
    try {
        llm.validate();
    } catch (const InvalidParam& e) {
        throw SchemaError("llm", e.what());
    }
}

ordered_json BenchmarkConfig::to_json() const {
    ordered_json j;
    auto ds = ordered_json::array();
    for (const auto& d : datasets) {
        ordered_json e{{"name", d.name}, {"queries", d.queries.string()}};
        if (d.qrels) e["qrels"] = d.qrels->string();
        ds.push_back(std::move(e));
    }
    j["datasets"] = std::move(ds);
    j["methods"] = methods;
    j["context_methods"] = std::vector<std::string>(context_methods.begin(), context_methods.end());
    ordered_json l = llm_echo(llm);
    l["n"] = llm.n;
    l["base_url"] = llm.base_url;
    l["api_key_env"] = llm.api_key_env;
    l["timeout_s"] = static_cast<double>(llm.timeout.count()) / 1000.0;
    l["max_retries"] = llm.max_retries;
    l["max_concurrency"] = llm.max_concurrency;
    l["backoff_base_s"] = static_cast<double>(llm.backoff_base.count()) / 1000.0;
    j["llm"] = std::move(l);
    if (retrieval) {
        ordered_json r{{"searcher", retrieval->searcher}, {"retrieval_k", retrieval->retrieval_k}};
        for (const auto& [k, v] : retrieval->config) r[k] = v;
        j["retrieval"] = std::move(r);
    } else {
        j["retrieval"] = nullptr;
    }
    ordered_json p;
    p["bank"] = prompt_bank ? ordered_json(prompt_bank->string()) : ordered_json("builtin");
    p["versions"] = ordered_json::object();
    for (const auto& [id, v] : prompt_versions) p["versions"][id] = v;
    j["prompts"] = std::move(p);
    ordered_json params = ordered_json::object();
    for (const auto& [method, values] : method_params) {
        for (const auto& [k, v] : values) {
            std::visit([&](const auto& x) { params[method][k] = x; }, v);
        }
    }
    j["params"] = std::move(params);
    j["output_dir"] = output_dir.string();
    j["emit_run_files"] = emit_run_files;
    j["run_k"] = run_k;
    j["run_tag"] = run_tag;
    return j;
}

BenchmarkConfig parse_config(std::string_view yaml, const std::string& origin) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml));
    } catch (const YAML::Exception& e) {
        throw SchemaError(origin, e.what());
    }
    if (!root.IsMap()) throw SchemaError(origin, "config must be a YAML mapping");
    for (const auto& kv : root) {
        auto key = kv.first.as<std::string>();
        if (!kTopLevelKeys.contains(key)) throw SchemaError(key, "unknown key");
    }

    BenchmarkConfig cfg;
    const auto datasets = root["datasets"];
    if (!datasets || !datasets.IsSequence()) throw SchemaError("datasets", "must be a list");
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto where = "datasets[" + std::to_string(i) + "]";
        const auto& d = datasets[i];
        if (!d.IsMap()) throw SchemaError(where, "must be a mapping");
        DatasetSpec spec;
        if (!d["name"]) throw SchemaError(where + ".name", "missing");
        spec.name = scalar<std::string>(d["name"], where + ".name");
        if (!d["queries"]) throw SchemaError(where + ".queries", "missing");
        spec.queries = scalar<std::string>(d["queries"], where + ".queries");
        if (d["qrels"] && !d["qrels"].IsNull()) spec.qrels = scalar<std::string>(d["qrels"], where + ".qrels");
        cfg.datasets.push_back(std::move(spec));
    }

    const auto methods = root["methods"];
    if (!methods || !methods.IsSequence()) throw SchemaError("methods", "must be a list of method names");
    for (std::size_t i = 0; i < methods.size(); ++i) {
        cfg.methods.push_back(scalar<std::string>(methods[i], "methods[" + std::to_string(i) + "]"));
    }
    if (const auto ctx = root["context_methods"]) {
        if (!ctx.IsSequence()) throw SchemaError("context_methods", "must be a list");
        cfg.context_methods.clear();
        for (const auto& m : ctx) cfg.context_methods.insert(scalar<std::string>(m, "context_methods"));
    }

    cfg.llm = parse_llm(root["llm"]);

    if (const auto r = root["retrieval"]; r && !r.IsNull()) {
        if (!r.IsMap()) throw SchemaError("retrieval", "must be a mapping");
        RetrievalSpec spec;
        for (const auto& kv : r) {
            const auto key = kv.first.as<std::string>();
            if (key == "searcher") {
                spec.searcher = scalar<std::string>(kv.second, "retrieval.searcher");
            } else if (key == "retrieval_k") {
                spec.retrieval_k = scalar<int>(kv.second, "retrieval.retrieval_k");
            } else {
                spec.config[key] = scalar<std::string>(kv.second, "retrieval." + key);
            }
        }
        if (spec.searcher.empty()) throw SchemaError("retrieval.searcher", "missing");
        cfg.retrieval = std::move(spec);
    }

    if (const auto p = root["prompts"]; p && !p.IsNull()) {
        if (!p.IsMap()) throw SchemaError("prompts", "must be a mapping");
        for (const auto& kv : p) {
            const auto key = kv.first.as<std::string>();
            if (key == "bank") {
                cfg.prompt_bank = scalar<std::string>(kv.second, "prompts.bank");
            } else if (key == "versions") {
                if (!kv.second.IsMap()) throw SchemaError("prompts.versions", "must be a mapping of id to version");
                for (const auto& pin : kv.second) {
                    const auto id = pin.first.as<std::string>();
                    const auto v = scalar<int>(pin.second, "prompts.versions." + id);
                    if (v < 1) throw SchemaError("prompts.versions." + id, "must be a positive integer");
                    cfg.prompt_versions[id] = v;
                }
            } else {
                throw SchemaError("prompts." + key, "unknown key");
            }
        }
    }

    if (const auto params = root["params"]; params && !params.IsNull()) {
        if (!params.IsMap()) throw SchemaError("params", "must map method names to parameter mappings");
        for (const auto& m : params) {
            const auto method = m.first.as<std::string>();
            if (!m.second.IsMap()) throw SchemaError("params." + method, "must be a mapping");
            for (const auto& kv : m.second) {
                const auto key = kv.first.as<std::string>();
                cfg.method_params[method][key] = yaml_param(kv.second, "params." + method + "." + key);
            }
        }
    }

    if (const auto o = root["output_dir"]) cfg.output_dir = scalar<std::string>(o, "output_dir");
    if (const auto e = root["emit_run_files"]) cfg.emit_run_files = scalar<bool>(e, "emit_run_files");
    if (const auto k = root["run_k"]) cfg.run_k = scalar<int>(k, "run_k");
    if (const auto t = root["run_tag"]) cfg.run_tag = scalar<std::string>(t, "run_tag");

    cfg.validate();
    return cfg;
}

BenchmarkConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

ordered_json RunManifest::to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["toolkit_version"] = toolkit_version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["config"] = config;
    j["input_digests"] = input_digests;
    auto pairs_json = ordered_json::array();
    for (const auto& p : pairs) {
        ordered_json e;
        e["dataset"] = p.dataset;
        e["method"] = p.method;
        e["status"] = p.status;
        if (!p.error.empty()) e["error"] = p.error;
        e["query_count"] = p.query_count;
        e["failure_count"] = p.failure_count;
        e["duration_ms"] = p.duration.count();
        e["prompt_fingerprints"] = p.prompt_fingerprints;
        e["llm"] = p.llm_echo;
        e["outputs"] = p.outputs;
        e["traces"] = p.traces;
        pairs_json.push_back(std::move(e));
    }
    j["pairs"] = std::move(pairs_json);
    j["warnings"] = warnings;
    return j;
}

void write_run_lines(std::ostream& out, const std::vector<std::pair<std::string, std::vector<SearchHit>>>& results,
                     const std::string& tag) {
    char score[64];
    for (const auto& [qid, hits] : results) {
        for (std::size_t i = 0; i < hits.size(); ++i) {
            std::snprintf(score, sizeof score, "%.6f", hits[i].score);
            out << qid << " Q0 " << hits[i].docid << ' ' << (i + 1) << ' ' << score << ' ' << tag << '\n';
        }
    }
}

void write_run_file(const std::vector<std::pair<std::string, std::vector<SearchHit>>>& results, const fs::path& path,
                    const std::string& tag) {
    auto out = open_for_write(path);
    write_run_lines(out, results, tag);
    out.flush();
    if (!out) throw IoError("write error on '" + path.string() + "'");
}

RunManifest run_benchmark(const BenchmarkConfig& config, const BenchmarkOptions& options) {
    config.validate();

    RunManifest manifest;
    const auto started = std::chrono::system_clock::now();
    manifest.run_id = make_run_id(started);
    manifest.toolkit_version = kToolkitVersion;
    manifest.started_at = utc_timestamp(started, "%Y-%m-%dT%H:%M:%SZ");
    manifest.config = config.to_json();

    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec || !fs::is_directory(config.output_dir)) {
        throw IoError("cannot create output directory '" + config.output_dir.string() + "'" +
                      (ec ? ": " + ec.message() : ""));
    }
    OutputLock lock(config.output_dir, manifest.warnings);

    std::shared_ptr<const PromptBank> bank;
    if (config.prompt_bank) {
        bank = std::make_shared<const PromptBank>(PromptBank::load(*config.prompt_bank));
    } else {
        bank = std::shared_ptr<const PromptBank>(&PromptBank::builtin(), [](const PromptBank*) {});
    }

    std::shared_ptr<ChatBackend> backend = options.backend;
    if (!backend) backend = std::make_shared<HttpChatBackend>();
    auto gateway = std::make_shared<LlmGateway>(backend, config.llm.max_concurrency);

    std::shared_ptr<const Searcher> searcher;
    std::string searcher_error;
    if (config.retrieval) {
        try {
            searcher = create_searcher(config.retrieval->searcher, config.retrieval->config);
            for (const auto& key : {"index", "corpus"}) {
                if (auto it = config.retrieval->config.find(key); it != config.retrieval->config.end()) {
                    manifest.input_digests[std::string("retrieval/") + key] = file_sha256_hex(it->second);
                }
            }
        } catch (const std::exception& e) {
            searcher_error = e.what();
            manifest.warnings.push_back("searcher unavailable: " + searcher_error);
        }
    }

    for (const auto& dataset : config.datasets) {
        std::vector<QueryItem> queries;
        std::string dataset_error;
        try {
            queries = load_queries(dataset.queries);
            manifest.input_digests[dataset.name + "/queries"] = file_sha256_hex(dataset.queries);
            if (dataset.qrels) {
                load_qrels_tsv(*dataset.qrels);
                manifest.input_digests[dataset.name + "/qrels"] = file_sha256_hex(*dataset.qrels);
            }
        } catch (const std::exception& e) {
            dataset_error = e.what();
        }

        for (const auto& method : config.methods) {
            PairRecord pair;
            pair.dataset = dataset.name;
            pair.method = method;
            pair.llm_echo = llm_echo(config.llm);
            const auto pair_started = std::chrono::steady_clock::now();
            try {
                if (!dataset_error.empty()) throw DataError("dataset '" + dataset.name + "': " + dataset_error);
                const bool needs_searcher =
                    config.context_methods.contains(method) || MethodRegistry::instance().get(method).requires_searcher;

                MethodParams params;
                if (auto it = config.method_params.find(method); it != config.method_params.end()) {
                    params.values = it->second;
                }
                if (needs_searcher) {
                    if (!searcher) throw MissingSearcher("searcher unavailable: " + searcher_error);
                    params.searcher = searcher;
                    params.set("retrieval_k", static_cast<std::int64_t>(config.retrieval->retrieval_k));
                }
                auto reformulator = create_reformulator(method, config.llm.model, std::move(params), config.llm,
                                                        config.llm.seed,
                                                        ReformulatorOptions{bank, gateway, config.prompt_versions});
                for (const auto& [id, tmpl] : reformulator->templates()) {
                    pair.prompt_fingerprints[tmpl.key()] = template_fingerprint(tmpl);
                }

                auto results = reformulator->reformulate_batch(queries);
                pair.query_count = results.size();
                std::vector<QueryItem> reformulated;
                reformulated.reserve(results.size());
                for (const auto& r : results) {
                    if (r.failed()) ++pair.failure_count;
                    reformulated.push_back(QueryItem{r.qid, r.reformulated});
                    ordered_json q;
                    q["qid"] = r.qid;
                    if (r.failed()) q["error"] = std::get<std::string>(r.metadata.at("error"));
                    auto calls = ordered_json::array();
                    for (const auto& t : r.traces) calls.push_back(trace_json(t));
                    q["calls"] = std::move(calls);
                    pair.traces.push_back(std::move(q));
                }

                const auto base = config.output_dir / dataset.name;
                save_queries_tsv(reformulated, base / (method + ".tsv"));
                pair.outputs.push_back((base / (method + ".tsv")).string());
                save_results_jsonl(results, base / (method + ".jsonl"));
                pair.outputs.push_back((base / (method + ".jsonl")).string());

                if (config.emit_run_files) {
                    if (!searcher) throw MissingSearcher("run files requested but searcher unavailable: " + searcher_error);
                    auto outcomes = batch_search(*searcher, reformulated, static_cast<std::size_t>(config.run_k));
                    std::vector<std::pair<std::string, std::vector<SearchHit>>> run;
                    for (const auto& q : reformulated) {
                        auto& o = outcomes[q.qid];
                        if (o.error) manifest.warnings.push_back(dataset.name + "/" + method + " run search failed for " +
                                                                 q.qid + ": " + *o.error);
                        run.emplace_back(q.qid, std::move(o.hits));
                    }
                    write_run_file(run, base / (method + ".run"), config.run_tag);
                    pair.outputs.push_back((base / (method + ".run")).string());
                }
            } catch (const std::exception& e) {
                pair.status = "failed";
                pair.error = e.what();
            }
            pair.duration = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                                 pair_started);
            if (options.on_pair) options.on_pair(pair);
            manifest.pairs.push_back(std::move(pair));
        }
    }

    manifest.finished_at = utc_timestamp(std::chrono::system_clock::now(), "%Y-%m-%dT%H:%M:%SZ");
    manifest.path = config.output_dir / "manifest.json";
    auto out = open_for_write(manifest.path);
    out << manifest.to_json().dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    out.flush();
    if (!out) throw IoError("write error on '" + manifest.path.string() + "'");
    return manifest;
}

}  // namespace reformkit
