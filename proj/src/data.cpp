#include "reformkit/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "reformkit/errors.hpp"

namespace reformkit {
namespace {

using ordered_json = nlohmann::ordered_json;

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        auto start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

bool valid_id(std::string_view id) {
    return !id.empty() && id.find_first_of("\t\n\r") == std::string_view::npos;
}

// Tracks first-seen line per id; throws the given duplicate error type on a repeat.
template <typename DuplicateError>
class UniqueIds {
  public:
    void insert(const std::string& id, std::size_t line) {
        auto [it, inserted] = seen_.emplace(id, line);
        if (!inserted) throw DuplicateError(id, it->second, line);
    }

  private:
    std::unordered_map<std::string, std::size_t> seen_;
};

QueryItem make_query(const std::string& path, std::size_t line_no, std::string_view qid, std::string_view text) {
    if (!valid_id(qid)) throw MalformedLine(path, line_no, "empty or invalid qid");
    if (is_blank(text)) throw MalformedLine(path, line_no, "empty query text");
    return QueryItem{std::string(qid), std::string(text)};
}

ordered_json parse_json_line(const std::string& path, std::size_t line_no, const std::string& line) {
    ordered_json obj;
    try {
        obj = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw MalformedLine(path, line_no, e.what());
    }
    if (!obj.is_object()) throw MalformedLine(path, line_no, "expected a JSON object");
    return obj;
}

std::string string_field(const ordered_json& obj, const char* key, const std::string& path, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) throw MalformedLine(path, line_no, std::string("missing field '") + key + "'");
    if (!it->is_string()) throw MalformedLine(path, line_no, std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
}

int parse_relevance(const std::string& path, std::size_t line_no, std::string_view field) {
    int value = 0;
    std::string s(field);
    std::size_t used = 0;
    try {
        value = std::stoi(s, &used);
    } catch (const std::exception&) {
        throw MalformedLine(path, line_no, "relevance '" + s + "' is not an integer");
    }
    if (used != s.size()) throw MalformedLine(path, line_no, "relevance '" + s + "' is not an integer");
    if (value < 0) throw MalformedLine(path, line_no, "negative relevance");
    return value;
}

ordered_json metadata_to_json(const Metadata& metadata) {
    ordered_json out = ordered_json::object();
    for (const auto& [key, value] : metadata) {
        std::visit([&](const auto& v) { out[key] = v; }, value);
    }
    return out;
}

Metadata metadata_from_json(const ordered_json& obj, const std::string& path, std::size_t line_no) {
    if (!obj.is_object()) throw MalformedLine(path, line_no, "metadata is not an object");
    Metadata out;
    for (const auto& [key, value] : obj.items()) {
        if (value.is_string()) {
            out[key] = value.get<std::string>();
        } else if (value.is_number_integer()) {
            out[key] = value.get<std::int64_t>();
        } else if (value.is_number()) {
            out[key] = value.get<double>();
        } else if (value.is_array() &&
                   std::all_of(value.begin(), value.end(), [](const auto& v) { return v.is_string(); })) {
            out[key] = value.get<std::vector<std::string>>();
        } else {
            throw MalformedLine(path, line_no, "metadata '" + key + "' has an unsupported type");
        }
    }
    return out;
}

}  // namespace

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        first = false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    if (in.bad()) throw IoError("read error on '" + path.string() + "'");
    return lines;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::vector<QueryItem> load_queries_tsv(const std::filesystem::path& path) {
    const auto name = path.string();
    const auto lines = read_lines(path);
    std::vector<QueryItem> items;
    UniqueIds<DuplicateQid> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (is_blank(lines[i])) continue;
        auto fields = split_tabs(lines[i]);
        if (fields.size() != 2) {
            throw MalformedLine(name, line_no, "expected 2 tab-separated fields, got " + std::to_string(fields.size()));
        }
        auto item = make_query(name, line_no, fields[0], fields[1]);
        ids.insert(item.qid, line_no);
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<QueryItem> load_queries_jsonl(const std::filesystem::path& path) {
    const auto name = path.string();
    const auto lines = read_lines(path);
    std::vector<QueryItem> items;
    UniqueIds<DuplicateQid> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (is_blank(lines[i])) continue;
        auto obj = parse_json_line(name, line_no, lines[i]);
        auto item = make_query(name, line_no, string_field(obj, "_id", name, line_no),
                               string_field(obj, "text", name, line_no));
        ids.insert(item.qid, line_no);
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<QueryItem> load_queries(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".json") return load_queries_jsonl(path);
    return load_queries_tsv(path);
}

std::string sanitize_tsv_field(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_run = false;
    for (char c : text) {
        if (c == '\t' || c == '\n' || c == '\r') {
            if (!in_run) out.push_back(' ');
            in_run = true;
        } else {
            out.push_back(c);
            in_run = false;
        }
    }
    return out;
}

void write_queries_tsv(std::ostream& out, const std::vector<QueryItem>& items) {
    for (const auto& item : items) {
        if (!valid_id(item.qid)) throw DataError("cannot save query with invalid qid '" + item.qid + "'");
    }
    for (const auto& item : items) {
        out << item.qid << '\t' << sanitize_tsv_field(item.text) << '\n';
    }
}

void save_queries_tsv(const std::vector<QueryItem>& items, const std::filesystem::path& path) {
    for (const auto& item : items) {
        if (!valid_id(item.qid)) throw DataError("cannot save query with invalid qid '" + item.qid + "'");
    }
    auto out = open_for_write(path);
    write_queries_tsv(out, items);
    out.flush();
    if (!out) throw IoError("write error on '" + path.string() + "'");
}

std::vector<CorpusDocument> load_corpus_jsonl(const std::filesystem::path& path) {
    const auto name = path.string();
    const auto lines = read_lines(path);
    std::vector<CorpusDocument> docs;
    UniqueIds<DuplicateDocid> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (is_blank(lines[i])) continue;
        auto obj = parse_json_line(name, line_no, lines[i]);
        CorpusDocument doc;
        doc.docid = string_field(obj, "_id", name, line_no);
        if (!valid_id(doc.docid)) throw MalformedLine(name, line_no, "empty or invalid docid");
        doc.text = string_field(obj, "text", name, line_no);
        if (auto it = obj.find("title"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) throw MalformedLine(name, line_no, "field 'title' is not a string");
            doc.title = it->get<std::string>();
        }
        ids.insert(doc.docid, line_no);
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<CorpusDocument> load_corpus_tsv(const std::filesystem::path& path) {
    const auto name = path.string();
    const auto lines = read_lines(path);
    std::vector<CorpusDocument> docs;
    UniqueIds<DuplicateDocid> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (is_blank(lines[i])) continue;
        auto fields = split_tabs(lines[i]);
        if (fields.size() != 2) {
            throw MalformedLine(name, line_no, "expected 2 tab-separated fields, got " + std::to_string(fields.size()));
        }
        if (!valid_id(fields[0])) throw MalformedLine(name, line_no, "empty docid");
        CorpusDocument doc{std::string(fields[0]), std::nullopt, std::string(fields[1])};
        ids.insert(doc.docid, line_no);
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<CorpusDocument> load_corpus(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".json") return load_corpus_jsonl(path);
    return load_corpus_tsv(path);
}

std::vector<QrelEntry> load_qrels_tsv(const std::filesystem::path& path) {
    enum class Layout { unknown, trec, beir };
    const auto name = path.string();
    const auto lines = read_lines(path);
    std::vector<QrelEntry> out;
    Layout layout = Layout::unknown;
    bool header_allowed = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        const std::string_view line = lines[i];
        if (is_blank(line)) continue;
        if (header_allowed) {
            header_allowed = false;
            auto ws = split_whitespace(line);
            if (ws.size() == 3 && ws[0] == "query-id" && ws[1] == "corpus-id" && ws[2] == "score") continue;
        }
        auto tabs = split_tabs(line);
        auto ws = split_whitespace(line);
        const bool looks_beir = tabs.size() == 3;
        const bool looks_trec = ws.size() == 4;
        if (layout == Layout::unknown) {
            if (looks_beir) {
                layout = Layout::beir;
            } else if (looks_trec) {
                layout = Layout::trec;
            } else {
                throw MalformedLine(name, line_no, "expected 'qid 0 docid rel' or 'qid<TAB>docid<TAB>rel'");
            }
        }
        QrelEntry entry;
        if (layout == Layout::beir) {
            if (!looks_beir) {
                if (looks_trec) {
                    throw MixedLayout(name + ":" + std::to_string(line_no) + ": TREC line in a BEIR-layout qrels file");
                }
                throw MalformedLine(name, line_no, "expected 3 tab-separated fields");
            }
            entry = QrelEntry{std::string(tabs[0]), std::string(tabs[1]), parse_relevance(name, line_no, tabs[2])};
        } else {
            if (!looks_trec) {
                if (looks_beir) {
                    throw MixedLayout(name + ":" + std::to_string(line_no) + ": BEIR line in a TREC-layout qrels file");
                }
                throw MalformedLine(name, line_no, "expected 4 whitespace-separated fields");
            }
            entry = QrelEntry{std::string(ws[0]), std::string(ws[2]), parse_relevance(name, line_no, ws[3])};
        }
        if (entry.qid.empty() || entry.docid.empty()) throw MalformedLine(name, line_no, "empty qid or docid");
        out.push_back(std::move(entry));
    }
    return out;
}

std::string result_to_json_line(const ReformulationResult& result) {
    ordered_json obj;
    obj["qid"] = result.qid;
    obj["original"] = result.original;
    obj["reformulated"] = result.reformulated;
    obj["method"] = result.method;
    obj["metadata"] = metadata_to_json(result.metadata);
    return obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void save_results_jsonl(const std::vector<ReformulationResult>& results, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    for (const auto& r : results) out << result_to_json_line(r) << '\n';
    out.flush();
    if (!out) throw IoError("write error on '" + path.string() + "'");
}

std::vector<ReformulationResult> load_results_jsonl(const std::filesystem::path& path) {
    const auto name = path.string();
    const auto lines = read_lines(path);
    std::vector<ReformulationResult> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = i + 1;
        if (is_blank(lines[i])) continue;
        auto obj = parse_json_line(name, line_no, lines[i]);
        ReformulationResult r;
        r.qid = string_field(obj, "qid", name, line_no);
        r.original = string_field(obj, "original", name, line_no);
        r.reformulated = string_field(obj, "reformulated", name, line_no);
        r.method = string_field(obj, "method", name, line_no);
        if (auto it = obj.find("metadata"); it != obj.end()) r.metadata = metadata_from_json(*it, name, line_no);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace reformkit
