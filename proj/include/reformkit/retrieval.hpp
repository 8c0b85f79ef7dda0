#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "reformkit/data.hpp"

namespace reformkit {

struct SearchHit {
    std::string docid;
    double score = 0.0;
    int rank = 0;
    std::map<std::string, std::string> fields;

    bool operator==(const SearchHit&) const = default;
};

struct BM25Params {
    double k1 = 0.9;
    double b = 0.4;

    /// Throws InvalidParam unless k1 > 0 and 0 <= b <= 1.
    void validate() const;
};

/// Lowercases ASCII and splits on runs of ASCII non-alphanumerics. Bytes >= 0x80 are kept
/// as token characters so UTF-8 words stay intact. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// Immutable in-memory inverted index with BM25 statistics and stored fields.
class BM25Index {
  public:
    static constexpr std::uint8_t kFormatVersion = 1;

    /// Indexes tokenize(title + " " + text), or tokenize(text) without a title.
    /// Throws EmptyCorpus, DuplicateDocid.
    static BM25Index build(const std::vector<CorpusDocument>& corpus, BM25Params defaults = {});

    /// `QGIX` magic, format version byte, payload, SHA-256 trailer.
    void save(const std::filesystem::path& path) const;
    /// Throws IndexFormatError on bad magic, version, checksum or structure.
    static BM25Index load(const std::filesystem::path& path);

    std::size_t doc_count() const noexcept { return docids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    std::uint32_t doc_length(std::uint32_t ordinal) const { return doc_lengths_.at(ordinal); }
    const std::string& docid(std::uint32_t ordinal) const { return docids_.at(ordinal); }
    std::optional<std::uint32_t> ordinal(std::string_view docid) const;
    /// Stored `contents` and, when present, `title`.
    std::map<std::string, std::string> fields(std::uint32_t ordinal) const;
    std::size_t document_frequency(std::string_view term) const;
    /// Empty span for out-of-vocabulary terms.
    const std::vector<Posting>& postings(std::string_view term) const;
    std::size_t vocabulary_size() const noexcept { return postings_.size(); }
    /// Parameters recorded at build time; searchers may override them.
    const BM25Params& default_params() const noexcept { return defaults_; }

  private:
    struct StringHash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
    };

    std::vector<std::string> docids_;
    std::vector<std::optional<std::string>> titles_;
    std::vector<std::string> contents_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>> ordinals_;
    std::unordered_map<std::string, std::vector<Posting>, StringHash, std::equal_to<>> postings_;
    double avg_doc_length_ = 0.0;
    BM25Params defaults_;
};

/// Top-k documents by BM25 score, ties by docid ascending. Zero-score documents are never returned.
std::vector<SearchHit> bm25_search(const BM25Index& index, const BM25Params& params, std::string_view query,
                                   std::size_t k);

struct SearcherBinding {
    std::string name;
    std::string answer_key = "contents";
    std::size_t k_default = 10;
};

/// Retrieval-agnostic search contract. Implementations must be safe for concurrent search().
class Searcher {
  public:
    explicit Searcher(SearcherBinding binding) : binding_(std::move(binding)) {}
    virtual ~Searcher() = default;

    virtual std::vector<SearchHit> search(std::string_view query, std::size_t k) const = 0;
    std::vector<SearchHit> search(std::string_view query) const { return search(query, binding_.k_default); }

    const SearcherBinding& binding() const noexcept { return binding_; }
    /// Searcher settings for the run manifest.
    virtual std::map<std::string, std::string> describe() const { return {}; }

  private:
    SearcherBinding binding_;
};

class Bm25Searcher final : public Searcher {
  public:
    Bm25Searcher(std::shared_ptr<const BM25Index> index, BM25Params params,
                 SearcherBinding binding = {"bm25_local", "contents", 10});

    std::vector<SearchHit> search(std::string_view query, std::size_t k) const override;
    std::map<std::string, std::string> describe() const override;

    const BM25Index& index() const noexcept { return *index_; }
    const BM25Params& params() const noexcept { return params_; }

  private:
    std::shared_ptr<const BM25Index> index_;
    BM25Params params_;
};

/// POST `{endpoint}/search` with `{"query", "k"}`; reply `{"hits": [{docid, score, fields}]}`.
class HttpRemoteSearcher final : public Searcher {
  public:
    HttpRemoteSearcher(std::string endpoint, SearcherBinding binding, std::chrono::milliseconds timeout,
                       int max_concurrency = 8);

    /// Throws RemoteError on transport, status or payload failure.
    std::vector<SearchHit> search(std::string_view query, std::size_t k) const override;
    std::map<std::string, std::string> describe() const override;

  private:
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
    mutable std::counting_semaphore<> slots_;
};

struct SearchOutcome {
    std::vector<SearchHit> hits;
    std::optional<std::string> error;
};

/// Per-query search; a failing query yields an error entry instead of aborting the batch.
std::map<std::string, SearchOutcome> batch_search(const Searcher& searcher, const std::vector<QueryItem>& queries,
                                                  std::size_t k);

struct ExtractedAnswers {
    std::vector<std::string> texts;
    std::size_t skipped = 0;
};

/// Values of `answer_key` in rank order. Throws AllMissing when no hit carries the field.
ExtractedAnswers extract_answers(const std::vector<SearchHit>& hits, std::string_view answer_key);

using SearcherConfig = std::map<std::string, std::string>;
using SearcherFactory = std::function<std::shared_ptr<Searcher>(const SearcherConfig&)>;

/// Name → factory map. Built-ins `bm25_local` and `http_remote` are present from first use.
class SearcherRegistry {
  public:
    static SearcherRegistry& instance();

    /// Throws DuplicateRegistration.
    void register_searcher(const std::string& name, SearcherFactory factory);
    /// Throws UnknownSearcher; factories throw InvalidParam / DataError for bad config.
    std::shared_ptr<Searcher> create(const std::string& name, const SearcherConfig& config) const;
    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;

  private:
    SearcherRegistry();

    mutable std::mutex mutex_;
    std::map<std::string, SearcherFactory> factories_;
};

inline void register_searcher(const std::string& name, SearcherFactory factory) {
    SearcherRegistry::instance().register_searcher(name, std::move(factory));
}

inline std::shared_ptr<Searcher> create_searcher(const std::string& name, const SearcherConfig& config) {
    return SearcherRegistry::instance().create(name, config);
}

}  // namespace reformkit
