#include "reformkit/reform.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "reformkit/errors.hpp"
#include "methods/builtin.hpp"

namespace reformkit {
namespace {

const std::set<std::string> kCommonParams = {"prompt_version", "concat_strategy", "query_weight"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_any(std::string_view text, std::string_view delims) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto pos = text.find_first_of(delims, start);
        if (pos == std::string_view::npos) pos = text.size();
        out.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

// Tokens with their original casing; same boundaries as tokenize().
std::vector<std::string> raw_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) != 0 || c >= 0x80) {
            cur.push_back(ch);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string lower_ascii(std::string s) {
    for (auto& c : s) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

std::string short_fp(const std::string& fp) { return fp.substr(0, 16); }

}  // namespace

const char* to_string(ConcatStrategy strategy) noexcept {
    switch (strategy) {
        case ConcatStrategy::append: return "append";
        case ConcatStrategy::repeat_query: return "repeat_query";
        case ConcatStrategy::unique_terms: return "unique_terms";
    }
    return "append";
}

std::optional<ConcatStrategy> parse_concat_strategy(std::string_view text) noexcept {
    if (text == "append") return ConcatStrategy::append;
    if (text == "repeat_query") return ConcatStrategy::repeat_query;
    if (text == "unique_terms") return ConcatStrategy::unique_terms;
    return std::nullopt;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::string concat(std::string_view original, const std::vector<std::string>& expansions, ConcatStrategy strategy,
                   int query_weight) {
    std::string joined;
    switch (strategy) {
        case ConcatStrategy::append: {
            joined = std::string(original);
            for (const auto& e : expansions) joined += " " + e;
            break;
        }
        case ConcatStrategy::repeat_query: {
            for (int i = 0; i < query_weight; ++i) {
                if (i > 0) joined.push_back(' ');
                joined += original;
            }
            for (const auto& e : expansions) joined += " " + e;
            break;
        }
        case ConcatStrategy::unique_terms: {
            std::set<std::string> seen;
            for (auto& t : raw_tokens(original)) seen.insert(lower_ascii(t));
            joined = std::string(original);
            for (const auto& e : expansions) {
                for (auto& t : raw_tokens(e)) {
                    if (seen.insert(lower_ascii(t)).second) joined += " " + t;
                }
            }
            break;
        }
    }
    return normalize_whitespace(joined);
}

ParamValue parse_param_literal(std::string_view text) {
    const std::string s(text);
    if (s == "true") return true;
    if (s == "false") return false;
    static const std::regex kInt(R"([+-]?\d+)");
    static const std::regex kFloat(R"([+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)");
    try {
        if (std::regex_match(s, kInt)) return static_cast<std::int64_t>(std::stoll(s));
        if (std::regex_match(s, kFloat)) return std::stod(s);
    } catch (const std::out_of_range&) {
    }
    return s;
}

std::string param_to_string(const ParamValue& value) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::string>) {
                return v;
            } else {
                std::ostringstream os;
                os << v;
                return os.str();
            }
        },
        value);
}

std::int64_t MethodParams::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
    throw InvalidParam("parameter '" + key + "' must be an integer, got '" + param_to_string(it->second) + "'");
}

double MethodParams::get_double(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (auto* d = std::get_if<double>(&it->second)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
    throw InvalidParam("parameter '" + key + "' must be a number, got '" + param_to_string(it->second) + "'");
}

std::string MethodParams::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (auto* s = std::get_if<std::string>(&it->second)) return *s;
    throw InvalidParam("parameter '" + key + "' must be a string, got '" + param_to_string(it->second) + "'");
}

void PipelineTrace::append(const std::string& key, std::string value) {
    auto& slot = metadata_[key];
    if (!std::holds_alternative<std::vector<std::string>>(slot)) slot = std::vector<std::string>{};
    std::get<std::vector<std::string>>(slot).push_back(std::move(value));
}

void PipelineTrace::record_prompt(const PromptTemplate& tmpl, const RenderedPrompt& rendered) {
    const auto entry = tmpl.key() + ":" + template_fingerprint(tmpl);
    auto& slot = metadata_["prompt_templates"];
    if (!std::holds_alternative<std::vector<std::string>>(slot)) slot = std::vector<std::string>{};
    auto& list = std::get<std::vector<std::string>>(slot);
    if (std::find(list.begin(), list.end(), entry) == list.end()) list.push_back(entry);
    append("rendered_prompts", tmpl.key() + ":" + rendered.fingerprint);
}

void PipelineTrace::record_call(const Completion& completion) {
    const auto& t = completion.trace;
    std::ostringstream summary;
    summary << "prompt=" << t.prompt << " request=" << short_fp(t.request_fingerprint) << " attempts=" << t.attempt_count
            << " choices=" << t.choices_returned << "/" << t.n << " backend=" << to_string(t.backend);
    append("call_traces", summary.str());
    for (const auto& choice : completion.choices) append("generations", choice);
    traces_.push_back(t);
}

Reformulator::Reformulator(MethodSetup setup) : setup_(std::move(setup)) {
    if (!setup_.bank) setup_.bank = std::shared_ptr<const PromptBank>(&PromptBank::builtin(), [](const PromptBank*) {});
    if (!setup_.gateway) throw InvalidParam("reformulator '" + setup_.method + "': no LLM gateway");

    auto strategy = setup_.params.get_string("concat_strategy", to_string(setup_.default_concat));
    auto parsed = parse_concat_strategy(strategy);
    if (!parsed) throw InvalidParam("parameter 'concat_strategy': unknown strategy '" + strategy + "'");
    concat_ = *parsed;
    auto w = setup_.params.get_int("query_weight", 5);
    if (w < 0) throw InvalidParam("parameter 'query_weight' must be >= 0");
    query_weight_ = static_cast<int>(w);
}

void Reformulator::use_template(const std::string& id) {
    std::optional<int> version;
    if (setup_.params.has("prompt_version")) {
        auto v = setup_.params.get_int("prompt_version", 1);
        if (v < 1) throw InvalidParam("parameter 'prompt_version' must be >= 1");
        version = static_cast<int>(v);
    }
    if (auto pin = setup_.prompt_pins.find(id); pin != setup_.prompt_pins.end()) version = pin->second;
    templates_.insert_or_assign(id, setup_.bank->get(id, version));
}

const PromptTemplate& Reformulator::prompt(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw UnknownTemplate("template '" + id + "' was not resolved by " + setup_.method);
    return it->second;
}

Completion Reformulator::generate(PipelineTrace& trace, const std::string& template_id,
                                  const std::map<std::string, std::string>& vars, std::optional<int> n) const {
    const auto& tmpl = prompt(template_id);
    auto rendered = render(tmpl, vars);
    trace.record_prompt(tmpl, rendered);
    auto config = setup_.llm;
    if (n) config.n = *n;
    auto completion = setup_.gateway->complete(rendered, config);
    trace.record_call(completion);
    return completion;
}

const Searcher& Reformulator::searcher() const {
    if (!setup_.params.searcher) throw MissingSearcher("method '" + setup_.method + "' requires a searcher");
    return *setup_.params.searcher;
}

std::vector<SearchHit> Reformulator::retrieve(PipelineTrace& trace, std::string_view text, std::size_t k) const {
    auto hits = searcher().search(text, k);
    std::vector<std::string> docids;
    for (const auto& h : hits) docids.push_back(h.docid);
    trace.note("retrieved_docids", std::move(docids));
    trace.note("retrieval_k", static_cast<std::int64_t>(k));
    return hits;
}

ReformulationResult Reformulator::reformulate(const QueryItem& query) const {
    ReformulationResult result;
    result.qid = query.qid;
    result.original = query.text;
    result.method = setup_.method;
    PipelineTrace trace;
    try {
        auto expansion = expand(query, trace);
        std::string text;
        if (expansion.rewritten) {
            text = normalize_whitespace(*expansion.rewritten);
        } else {
            if (expansion.expansions.empty()) throw EmptyResponse("no usable expansions were generated");
            const int w = expansion.query_weight.value_or(query_weight_);
            trace.note("expansions", expansion.expansions);
            trace.note("concat_strategy", std::string(to_string(concat_)));
            trace.note("query_weight", static_cast<std::int64_t>(w));
            text = concat(query.text, expansion.expansions, concat_, w);
        }
        if (text.empty()) throw EmptyResponse("reformulated query is empty");
        result.reformulated = std::move(text);
    } catch (const std::exception& e) {
        result.reformulated = query.text;
        trace.note("error", std::string(e.what()));
    }
    result.metadata = std::move(trace.metadata());
    result.traces = std::move(trace.traces());
    return result;
}

std::vector<ReformulationResult> Reformulator::reformulate_batch(const std::vector<QueryItem>& queries,
                                                                 const ProgressFn& progress) const {
    std::vector<ReformulationResult> results(queries.size());
    if (queries.empty()) return results;

    std::atomic<std::size_t> next{0};
    std::size_t completed = 0;
    std::mutex progress_mutex;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < queries.size(); i = next.fetch_add(1)) {
            results[i] = reformulate(queries[i]);
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(++completed, queries.size());
            }
        }
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, setup_.llm.max_concurrency)),
                                               queries.size());
    if (workers == 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    pool.clear();
    return results;
}

MethodRegistry& MethodRegistry::instance() {
    static MethodRegistry& registry = []() -> MethodRegistry& {
        static MethodRegistry r;
        methods::register_builtin_methods(r);
        return r;
    }();
    return registry;
}

void MethodRegistry::register_method(MethodInfo info) {
    static const std::regex kName("[a-z][a-z0-9_]*");
    if (!std::regex_match(info.name, kName)) {
        throw InvalidParam("method name '" + info.name + "' must match [a-z][a-z0-9_]*");
    }
    if (!info.factory) throw InvalidParam("method '" + info.name + "' has no factory");
    std::lock_guard lock(mutex_);
    if (methods_.contains(info.name)) throw DuplicateRegistration("method '" + info.name + "' is already registered");
    auto name = info.name;
    methods_.emplace(std::move(name), std::move(info));
}

const MethodInfo& MethodRegistry::get(std::string_view name) const {
    std::lock_guard lock(mutex_);
    auto it = methods_.find(name);
    if (it == methods_.end()) throw UnknownMethod("unknown reformulation method '" + std::string(name) + "'");
    return it->second;
}

bool MethodRegistry::contains(std::string_view name) const {
    std::lock_guard lock(mutex_);
    return methods_.find(name) != methods_.end();
}

std::vector<MethodInfo> MethodRegistry::list() const {
    std::lock_guard lock(mutex_);
    std::vector<MethodInfo> out;
    for (const auto& [_, info] : methods_) out.push_back(info);
    return out;
}

void register_method(const std::string& name, MethodFactory factory, bool requires_searcher,
                     ConcatStrategy default_concat, std::vector<std::string> param_keys) {
    MethodRegistry::instance().register_method(
        MethodInfo{name, requires_searcher, default_concat, std::move(param_keys), std::move(factory)});
}

std::unique_ptr<Reformulator> create_reformulator(std::string_view method_name, const std::string& model,
                                                  MethodParams params, LLMConfig llm,
                                                  std::optional<std::int64_t> seed, ReformulatorOptions options) {
    const auto& info = MethodRegistry::instance().get(method_name);
    if (info.requires_searcher && !params.searcher) {
        throw MissingSearcher("method '" + info.name + "' needs a searcher (pass params.searcher)");
    }
    for (const auto& [key, _] : params.values) {
        if (kCommonParams.contains(key)) continue;
        if (std::find(info.param_keys.begin(), info.param_keys.end(), key) != info.param_keys.end()) continue;
        throw InvalidParam("parameter '" + key + "' is not recognised by method '" + info.name + "'");
    }
    if (!model.empty()) llm.model = model;
    if (seed) llm.seed = seed;
    llm.validate();

    MethodSetup setup;
    setup.method = info.name;
    setup.params = std::move(params);
    setup.llm = std::move(llm);
    setup.bank = std::move(options.bank);
    setup.gateway = options.gateway ? std::move(options.gateway) : make_http_gateway(setup.llm);
    setup.prompt_pins = std::move(options.prompt_pins);
    setup.default_concat = info.default_concat;
    return info.factory(std::move(setup));
}

namespace parse {

std::vector<std::string> keywords(std::string_view text) {
    std::vector<std::string> out;
    for (auto& item : split_any(text, ",\n")) {
        auto t = trim(item);
        if (t.empty() || word_count(t) > 10) continue;
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> lines(std::string_view text) {
    static const std::regex kMarker(R"(^(?:\(?\d+[.):]|[-*]|•)\s*)");
    std::vector<std::string> out;
    for (auto& raw : split_any(text, "\n")) {
        auto t = trim(std::regex_replace(trim(raw), kMarker, "", std::regex_constants::format_first_only));
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> passages(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        auto t = trim(current);
        if (!t.empty()) out.push_back(std::move(t));
        current.clear();
    };
    for (auto& raw : split_any(text, "\n")) {
        if (trim(raw).empty()) {
            flush();
        } else {
            if (!current.empty()) current.push_back('\n');
            current += raw;
        }
    }
    flush();
    return out;
}

}  // namespace parse

std::string format_passages(const std::vector<std::string>& passages) {
    if (passages.empty()) return "(no passages retrieved)";
    std::string out;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += "[" + std::to_string(i + 1) + "] " + normalize_whitespace(passages[i]);
    }
    return out;
}

}  // namespace reformkit
