#include "reformkit/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "reformkit/digest.hpp"
#include "reformkit/errors.hpp"

namespace reformkit {
namespace {

constexpr char kMagic[4] = {'Q', 'G', 'I', 'X'};
constexpr std::size_t kDigestHexLen = 64;

bool is_token_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void str(std::string_view s) {
        u64(s.size());
        buf_.append(s);
    }
    const std::string& bytes() const noexcept { return buf_; }

  private:
    std::string buf_;
};

class ByteReader {
  public:
    ByteReader(std::string_view bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }
    double f64() {
        auto bits = u64();
        double v = 0;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        auto n = u64();
        return std::string(take(n));
    }
    /// Guards element counts against the bytes actually left.
    std::uint64_t count(std::size_t min_element_size) {
        auto n = u64();
        if (min_element_size > 0 && n > remaining() / min_element_size) fail("element count exceeds file size");
        return n;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    [[noreturn]] void fail(const std::string& what) const {
        throw IndexFormatError("index '" + origin_ + "': " + what + " at byte " + std::to_string(pos_));
    }

  private:
    std::string_view take(std::size_t n) {
        if (n > remaining()) fail("truncated");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
    std::string origin_;
};

double parse_double(const SearcherConfig& config, const std::string& key, double fallback) {
    auto it = config.find(key);
    if (it == config.end()) return fallback;
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw InvalidParam("searcher config '" + key + "': '" + it->second + "' is not a number");
    }
}

std::size_t parse_size(const SearcherConfig& config, const std::string& key, std::size_t fallback) {
    auto it = config.find(key);
    if (it == config.end()) return fallback;
    try {
        std::size_t used = 0;
        long long v = std::stoll(it->second, &used);
        if (used != it->second.size() || v < 1) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw InvalidParam("searcher config '" + key + "': '" + it->second + "' is not a positive integer");
    }
}

std::string get_or(const SearcherConfig& config, const std::string& key, std::string fallback) {
    auto it = config.find(key);
    return it == config.end() ? fallback : it->second;
}

void reject_unknown_keys(const std::string& searcher, const SearcherConfig& config,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : config) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw InvalidParam(searcher + ": unknown config key '" + key + "'");
        }
    }
}

std::shared_ptr<Searcher> make_bm25_local(const SearcherConfig& config) {
    reject_unknown_keys("bm25_local", config, {"corpus", "index", "k1", "b", "answer_key", "k"});
    const auto corpus = config.find("corpus");
    const auto index_path = config.find("index");
    if ((corpus == config.end()) == (index_path == config.end())) {
        throw InvalidParam("bm25_local: exactly one of 'corpus' or 'index' must be configured");
    }
    std::shared_ptr<const BM25Index> index;
    if (index_path != config.end()) {
        index = std::make_shared<const BM25Index>(BM25Index::load(index_path->second));
    } else {
        index = std::make_shared<const BM25Index>(BM25Index::build(load_corpus(corpus->second)));
    }
    BM25Params params{parse_double(config, "k1", index->default_params().k1),
                      parse_double(config, "b", index->default_params().b)};
    SearcherBinding binding{"bm25_local", get_or(config, "answer_key", "contents"), parse_size(config, "k", 10)};
    return std::make_shared<Bm25Searcher>(std::move(index), params, std::move(binding));
}

std::shared_ptr<Searcher> make_http_remote(const SearcherConfig& config) {
    reject_unknown_keys("http_remote", config, {"endpoint", "answer_key", "timeout", "k", "max_concurrency"});
    auto endpoint = config.find("endpoint");
    if (endpoint == config.end() || endpoint->second.empty()) {
        throw InvalidParam("http_remote: 'endpoint' must be configured");
    }
    const auto timeout_s = parse_double(config, "timeout", 30.0);
    if (!(timeout_s > 0)) throw InvalidParam("http_remote: 'timeout' must be positive");
    SearcherBinding binding{"http_remote", get_or(config, "answer_key", "contents"), parse_size(config, "k", 10)};
    return std::make_shared<HttpRemoteSearcher>(
        endpoint->second, std::move(binding),
        std::chrono::milliseconds{static_cast<std::int64_t>(timeout_s * 1000.0)},
        static_cast<int>(parse_size(config, "max_concurrency", 8)));
}

}  // namespace

void BM25Params::validate() const {
    if (!(k1 > 0.0)) throw InvalidParam("bm25 k1 must be > 0");
    if (!(b >= 0.0 && b <= 1.0)) throw InvalidParam("bm25 b must be in [0, 1]");
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (is_token_char(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

BM25Index BM25Index::build(const std::vector<CorpusDocument>& corpus, BM25Params defaults) {
    defaults.validate();
    if (corpus.empty()) throw EmptyCorpus("cannot build an index over an empty corpus");
    BM25Index idx;
    idx.defaults_ = defaults;
    const auto n = corpus.size();
    idx.docids_.reserve(n);
    idx.titles_.reserve(n);
    idx.contents_.reserve(n);
    idx.doc_lengths_.reserve(n);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& doc = corpus[i];
        const auto ordinal = static_cast<std::uint32_t>(i);
        if (doc.docid.empty()) throw DataError("document " + std::to_string(i + 1) + " has an empty docid");
        if (auto [it, inserted] = idx.ordinals_.emplace(doc.docid, ordinal); !inserted) {
            throw DuplicateDocid(doc.docid, it->second + 1, i + 1);
        }
        auto terms = doc.title ? tokenize(*doc.title + " " + doc.text) : tokenize(doc.text);
        std::sort(terms.begin(), terms.end());
        for (std::size_t j = 0; j < terms.size();) {
            std::size_t k = j;
            while (k < terms.size() && terms[k] == terms[j]) ++k;
            idx.postings_[terms[j]].push_back(Posting{ordinal, static_cast<std::uint32_t>(k - j)});
            j = k;
        }
        idx.docids_.push_back(doc.docid);
        idx.titles_.push_back(doc.title);
        idx.contents_.push_back(doc.text);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
        total += terms.size();
    }
    idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(n);
    return idx;
}

void BM25Index::save(const std::filesystem::path& path) const {
    ByteWriter w;
    w.u64(docids_.size());
    for (std::size_t i = 0; i < docids_.size(); ++i) {
        w.str(docids_[i]);
        w.u8(titles_[i] ? 1 : 0);
        if (titles_[i]) w.str(*titles_[i]);
        w.str(contents_[i]);
        w.u32(doc_lengths_[i]);
    }
    w.f64(defaults_.k1);
    w.f64(defaults_.b);
    std::vector<std::string_view> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, _] : postings_) terms.push_back(term);
    std::sort(terms.begin(), terms.end());
    w.u64(terms.size());
    for (auto term : terms) {
        const auto& list = postings_.find(term)->second;
        w.str(term);
        w.u64(list.size());
        for (const auto& p : list) {
            w.u32(p.doc);
            w.u32(p.tf);
        }
    }
    auto out = open_for_write(path);
    out.write(kMagic, sizeof kMagic);
    out.put(static_cast<char>(kFormatVersion));
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    out << sha256_hex(w.bytes());
    out.flush();
    if (!out) throw IoError("write error on '" + path.string() + "'");
}

BM25Index BM25Index::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open index '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    const auto origin = path.string();

    if (data.size() < sizeof kMagic + 1 + kDigestHexLen || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
        throw IndexFormatError("'" + origin + "' is not a QGIX index (bad magic)");
    }
    const auto version = static_cast<std::uint8_t>(data[sizeof kMagic]);
    if (version != kFormatVersion) {
        throw IndexFormatError("'" + origin + "' has index format version " + std::to_string(version) +
                               ", expected " + std::to_string(kFormatVersion));
    }
    const std::string_view payload(data.data() + sizeof kMagic + 1, data.size() - sizeof kMagic - 1 - kDigestHexLen);
    const std::string_view digest(data.data() + data.size() - kDigestHexLen, kDigestHexLen);
    if (sha256_hex(payload) != digest) throw IndexFormatError("'" + origin + "' failed its checksum (corrupted)");

    ByteReader r(payload, origin);
    BM25Index idx;
    const auto n = r.count(8 + 1 + 8 + 4);
    if (n == 0) r.fail("empty document table");
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        auto docid = r.str();
        std::optional<std::string> title;
        if (r.u8() != 0) title = r.str();
        auto contents = r.str();
        auto len = r.u32();
        if (!idx.ordinals_.emplace(docid, static_cast<std::uint32_t>(i)).second) r.fail("duplicate docid");
        idx.docids_.push_back(std::move(docid));
        idx.titles_.push_back(std::move(title));
        idx.contents_.push_back(std::move(contents));
        idx.doc_lengths_.push_back(len);
        total += len;
    }
    idx.defaults_.k1 = r.f64();
    idx.defaults_.b = r.f64();
    const auto terms = r.count(8 + 8);
    for (std::uint64_t t = 0; t < terms; ++t) {
        auto term = r.str();
        const auto count = r.count(8);
        std::vector<Posting> list;
        list.reserve(count);
        for (std::uint64_t j = 0; j < count; ++j) {
            Posting p{r.u32(), r.u32()};
            if (p.doc >= n || p.tf == 0) r.fail("invalid posting");
            list.push_back(p);
        }
        idx.postings_.emplace(std::move(term), std::move(list));
    }
    if (r.remaining() != 0) r.fail("trailing bytes");
    idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(n);
    return idx;
}

std::optional<std::uint32_t> BM25Index::ordinal(std::string_view docid) const {
    auto it = ordinals_.find(docid);
    if (it == ordinals_.end()) return std::nullopt;
    return it->second;
}

std::map<std::string, std::string> BM25Index::fields(std::uint32_t ordinal) const {
    std::map<std::string, std::string> out{{"contents", contents_.at(ordinal)}};
    if (titles_.at(ordinal)) out.emplace("title", *titles_[ordinal]);
    return out;
}

std::size_t BM25Index::document_frequency(std::string_view term) const { return postings(term).size(); }

const std::vector<Posting>& BM25Index::postings(std::string_view term) const {
    static const std::vector<Posting> kEmpty;
    auto it = postings_.find(term);
    return it == postings_.end() ? kEmpty : it->second;
}

std::vector<SearchHit> bm25_search(const BM25Index& index, const BM25Params& params, std::string_view query,
                                   std::size_t k) {
    params.validate();
    if (k == 0) return {};
    // Distinct terms in lexicographic order with their query multiplicity.
    std::map<std::string, int> query_terms;
    for (auto& t : tokenize(query)) ++query_terms[t];

    const auto n = static_cast<double>(index.doc_count());
    const double avgdl = index.avg_doc_length();
    std::vector<double> scores(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& [term, multiplicity] : query_terms) {
        const auto& list = index.postings(term);
        if (list.empty()) continue;
        const auto df = static_cast<double>(list.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const auto& p : list) {
            const double tf = p.tf;
            const double len = index.doc_length(p.doc);
            if (scores[p.doc] == 0.0) touched.push_back(p.doc);
            scores[p.doc] += multiplicity * idf * tf * (params.k1 + 1.0) /
                             (tf + params.k1 * (1.0 - params.b + params.b * len / avgdl));
        }
    }

    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return index.docid(a) < index.docid(b);
    };
    touched.erase(std::remove_if(touched.begin(), touched.end(), [&](auto d) { return !(scores[d] > 0.0); }),
                  touched.end());
    const auto take = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);

    std::vector<SearchHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto d = touched[i];
        hits.push_back(SearchHit{index.docid(d), scores[d], static_cast<int>(i + 1), index.fields(d)});
    }
    return hits;
}

Bm25Searcher::Bm25Searcher(std::shared_ptr<const BM25Index> index, BM25Params params, SearcherBinding binding)
    : Searcher(std::move(binding)), index_(std::move(index)), params_(params) {
    if (!index_) throw InvalidParam("bm25 searcher: index is null");
    params_.validate();
}

std::vector<SearchHit> Bm25Searcher::search(std::string_view query, std::size_t k) const {
    return bm25_search(*index_, params_, query, k);
}

std::map<std::string, std::string> Bm25Searcher::describe() const {
    std::ostringstream k1, b;
    k1 << params_.k1;
    b << params_.b;
    return {{"searcher", binding().name},
            {"k1", k1.str()},
            {"b", b.str()},
            {"doc_count", std::to_string(index_->doc_count())},
            {"answer_key", binding().answer_key}};
}

HttpRemoteSearcher::HttpRemoteSearcher(std::string endpoint, SearcherBinding binding,
                                       std::chrono::milliseconds timeout, int max_concurrency)
    : Searcher(std::move(binding)), endpoint_(std::move(endpoint)), timeout_(timeout), slots_(max_concurrency) {
    while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
    if (endpoint_.find("://") == std::string::npos) throw InvalidParam("http_remote: endpoint needs a scheme");
}

std::vector<SearchHit> HttpRemoteSearcher::search(std::string_view query, std::size_t k) const {
    const auto scheme_end = endpoint_.find("://");
    const auto path_start = endpoint_.find('/', scheme_end + 3);
    const auto host = endpoint_.substr(0, path_start);
    const auto prefix = path_start == std::string::npos ? std::string() : endpoint_.substr(path_start);

    httplib::Client client(host);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());

    const nlohmann::json body{{"query", std::string(query)}, {"k", k}};
    httplib::Result res;
    {
        slots_.acquire();
        res = client.Post(prefix + "/search", body.dump(), "application/json");
        slots_.release();
    }
    if (!res) throw RemoteError("search request to '" + endpoint_ + "' failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw RemoteError("search request to '" + endpoint_ + "' returned status " + std::to_string(res->status));
    }
    std::vector<SearchHit> hits;
    try {
        auto json = nlohmann::json::parse(res->body);
        for (const auto& h : json.at("hits")) {
            SearchHit hit;
            hit.docid = h.at("docid").get<std::string>();
            hit.score = h.at("score").get<double>();
            if (auto f = h.find("fields"); f != h.end() && f->is_object()) {
                for (const auto& [key, value] : f->items()) {
                    hit.fields[key] = value.is_string() ? value.get<std::string>() : value.dump();
                }
            }
            hits.push_back(std::move(hit));
        }
    } catch (const nlohmann::json::exception& e) {
        throw RemoteError("search response from '" + endpoint_ + "' is malformed: " + e.what());
    }
    // Normalise to the hit-list invariants: unique docids, non-increasing scores, 1-based ranks.
    std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.docid < b.docid;
    });
    std::vector<SearchHit> out;
    std::map<std::string, bool> seen;
    for (auto& h : hits) {
        if (out.size() >= k) break;
        if (!seen.emplace(h.docid, true).second) continue;
        h.rank = static_cast<int>(out.size() + 1);
        out.push_back(std::move(h));
    }
    return out;
}

std::map<std::string, std::string> HttpRemoteSearcher::describe() const {
    return {{"searcher", binding().name}, {"endpoint", endpoint_}, {"answer_key", binding().answer_key}};
}

std::map<std::string, SearchOutcome> batch_search(const Searcher& searcher, const std::vector<QueryItem>& queries,
                                                  std::size_t k) {
    std::map<std::string, SearchOutcome> out;
    for (const auto& q : queries) {
        SearchOutcome outcome;
        try {
            outcome.hits = searcher.search(q.text, k);
        } catch (const std::exception& e) {
            outcome.error = e.what();
        }
        out[q.qid] = std::move(outcome);
    }
    return out;
}

ExtractedAnswers extract_answers(const std::vector<SearchHit>& hits, std::string_view answer_key) {
    ExtractedAnswers out;
    std::vector<const SearchHit*> ordered;
    for (const auto& h : hits) ordered.push_back(&h);
    std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    for (const auto* h : ordered) {
        auto it = h->fields.find(std::string(answer_key));
        if (it == h->fields.end()) {
            ++out.skipped;
        } else {
            out.texts.push_back(it->second);
        }
    }
    if (!hits.empty() && out.texts.empty()) {
        throw AllMissing("no search hit carries the field '" + std::string(answer_key) + "' (check answer_key)");
    }
    return out;
}

SearcherRegistry::SearcherRegistry() {
    factories_.emplace("bm25_local", make_bm25_local);
    factories_.emplace("http_remote", make_http_remote);
}

SearcherRegistry& SearcherRegistry::instance() {
    static SearcherRegistry registry;
    return registry;
}

void SearcherRegistry::register_searcher(const std::string& name, SearcherFactory factory) {
    std::lock_guard lock(mutex_);
    if (!factories_.emplace(name, std::move(factory)).second) {
        throw DuplicateRegistration("searcher '" + name + "' is already registered");
    }
}

std::shared_ptr<Searcher> SearcherRegistry::create(const std::string& name, const SearcherConfig& config) const {
    SearcherFactory factory;
    {
        std::lock_guard lock(mutex_);
        auto it = factories_.find(name);
        if (it == factories_.end()) throw UnknownSearcher("unknown searcher '" + name + "'");
        factory = it->second;
    }
    return factory(config);
}

bool SearcherRegistry::contains(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return factories_.contains(name);
}

std::vector<std::string> SearcherRegistry::names() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, _] : factories_) out.push_back(name);
    return out;
}

}  // namespace reformkit
