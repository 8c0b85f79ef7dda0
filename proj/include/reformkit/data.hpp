#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "reformkit/trace.hpp"

namespace reformkit {

struct QueryItem {
    std::string qid;
    std::string text;

    bool operator==(const QueryItem&) const = default;
};

struct QrelEntry {
    std::string qid;
    std::string docid;
    int relevance = 0;

    bool operator==(const QrelEntry&) const = default;
};

struct CorpusDocument {
    std::string docid;
    std::optional<std::string> title;
    std::string text;

    bool operator==(const CorpusDocument&) const = default;
};

using MetadataValue = std::variant<std::string, std::int64_t, double, std::vector<std::string>>;
using Metadata = std::map<std::string, MetadataValue>;

struct ReformulationResult {
    std::string qid;
    std::string original;
    std::string reformulated;
    std::string method;
    Metadata metadata;
    /// Per-call traces. Not part of the structured results file; the benchmark manifest
    /// consumes them because latencies are not reproducible.
    std::vector<CallTrace> traces;

    bool failed() const { return metadata.contains("error"); }
};

/// Strips a leading UTF-8 byte-order mark and a trailing carriage return. Exposed for tests.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::vector<QueryItem> load_queries_tsv(const std::filesystem::path& path);
std::vector<QueryItem> load_queries_jsonl(const std::filesystem::path& path);
/// Dispatches on extension: `.jsonl`/`.json` loads JSONL, anything else TSV.
std::vector<QueryItem> load_queries(const std::filesystem::path& path);

/// Replaces every run of tab, newline and carriage-return characters by one space.
std::string sanitize_tsv_field(std::string_view text);

/// Writes `qid\tsanitized-text` lines; the body of save_queries_tsv.
void write_queries_tsv(std::ostream& out, const std::vector<QueryItem>& items);
void save_queries_tsv(const std::vector<QueryItem>& items, const std::filesystem::path& path);

std::vector<CorpusDocument> load_corpus_jsonl(const std::filesystem::path& path);
std::vector<CorpusDocument> load_corpus_tsv(const std::filesystem::path& path);
std::vector<CorpusDocument> load_corpus(const std::filesystem::path& path);

/// Accepts TREC `qid 0 docid rel` or BEIR `qid\tdocid\trel` (optional header); the first data
/// line fixes the layout for the whole file.
std::vector<QrelEntry> load_qrels_tsv(const std::filesystem::path& path);

void save_results_jsonl(const std::vector<ReformulationResult>& results, const std::filesystem::path& path);
std::vector<ReformulationResult> load_results_jsonl(const std::filesystem::path& path);

/// One JSON line (no trailing newline) as written by save_results_jsonl.
std::string result_to_json_line(const ReformulationResult& result);

/// Opens `path` for binary writing, creating parent directories. Throws IoError.
std::ofstream open_for_write(const std::filesystem::path& path);

}  // namespace reformkit
