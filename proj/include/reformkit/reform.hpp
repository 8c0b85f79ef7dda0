#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "reformkit/data.hpp"
#include "reformkit/llm.hpp"
#include "reformkit/prompt_bank.hpp"
#include "reformkit/retrieval.hpp"

namespace reformkit {

enum class ConcatStrategy { append, repeat_query, unique_terms };

const char* to_string(ConcatStrategy strategy) noexcept;
std::optional<ConcatStrategy> parse_concat_strategy(std::string_view text) noexcept;

/// Combines the original query with expansions. Every strategy collapses whitespace runs
/// to one space and trims the result.
std::string concat(std::string_view original, const std::vector<std::string>& expansions, ConcatStrategy strategy,
                   int query_weight);

/// Collapses runs of whitespace to a single space and trims both ends.
std::string normalize_whitespace(std::string_view text);

using ParamValue = std::variant<bool, std::int64_t, double, std::string>;

/// Parses a `--params` literal: integer, float, true/false, else string.
ParamValue parse_param_literal(std::string_view text);
std::string param_to_string(const ParamValue& value);

struct MethodParams {
    std::map<std::string, ParamValue> values;
    std::shared_ptr<const Searcher> searcher;

    MethodParams& set(const std::string& key, ParamValue value) {
        values[key] = std::move(value);
        return *this;
    }
    bool has(const std::string& key) const { return values.contains(key); }

    /// Typed accessors; throw InvalidParam on a type mismatch.
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
};

/// Everything a method needs at construction; built by create_reformulator.
struct MethodSetup {
    std::string method;
    MethodParams params;
    LLMConfig llm;
    std::shared_ptr<const PromptBank> bank;
    std::shared_ptr<LlmGateway> gateway;
    /// Per-template version pins (`csqe.extract` → 2); `prompt_version` in params applies to all.
    std::map<std::string, int> prompt_pins;
    ConcatStrategy default_concat = ConcatStrategy::append;
};

/// Per-query scratch state: collects prompts, generations and traces into result metadata.
class PipelineTrace {
  public:
    void note(const std::string& key, MetadataValue value) { metadata_[key] = std::move(value); }
    void append(const std::string& key, std::string value);
    void record_prompt(const PromptTemplate& tmpl, const RenderedPrompt& rendered);
    void record_call(const Completion& completion);

    Metadata& metadata() noexcept { return metadata_; }
    std::vector<CallTrace>& traces() noexcept { return traces_; }

  private:
    Metadata metadata_;
    std::vector<CallTrace> traces_;
};

using ProgressFn = std::function<void(std::size_t completed, std::size_t total)>;

/// Base pipeline: render → generate → parse → concatenate, with per-query fallback.
/// Instances are immutable after construction and safe to share between threads.
class Reformulator {
  public:
    explicit Reformulator(MethodSetup setup);
    virtual ~Reformulator() = default;

    Reformulator(const Reformulator&) = delete;
    Reformulator& operator=(const Reformulator&) = delete;

    /// Never throws for a pipeline failure; returns the original query with metadata `error`.
    ReformulationResult reformulate(const QueryItem& query) const;
    /// Order-preserving; fans out up to llm.max_concurrency queries at once.
    std::vector<ReformulationResult> reformulate_batch(const std::vector<QueryItem>& queries,
                                                       const ProgressFn& progress = {}) const;

    const std::string& method() const noexcept { return setup_.method; }
    const LLMConfig& llm_config() const noexcept { return setup_.llm; }
    const MethodParams& params() const noexcept { return setup_.params; }
    ConcatStrategy concat_strategy() const noexcept { return concat_; }
    int query_weight() const noexcept { return query_weight_; }
    /// Templates this reformulator resolved at construction, keyed by id.
    const std::map<std::string, PromptTemplate>& templates() const noexcept { return templates_; }

  protected:
    struct Expansion {
        std::vector<std::string> expansions;
        /// Overrides the configured query weight for this query (adaptive methods).
        std::optional<int> query_weight;
        /// Replaces concatenation entirely; for methods that rewrite rather than expand.
        std::optional<std::string> rewritten;
    };

    /// Method body. Throw to trigger the fallback; an empty Expansion is also a failure.
    virtual Expansion expand(const QueryItem& query, PipelineTrace& trace) const = 0;

    /// Resolves a template (honouring pins) and remembers it; call from the constructor.
    void use_template(const std::string& id);
    const PromptTemplate& prompt(const std::string& id) const;

    /// Renders `template_id`, calls the gateway and records everything in `trace`.
    Completion generate(PipelineTrace& trace, const std::string& template_id,
                        const std::map<std::string, std::string>& vars, std::optional<int> n = std::nullopt) const;

    /// Top-k search with the configured searcher, recording docids. Throws MissingSearcher.
    std::vector<SearchHit> retrieve(PipelineTrace& trace, std::string_view text, std::size_t k) const;
    const Searcher& searcher() const;

    const MethodSetup& setup() const noexcept { return setup_; }

  private:
    MethodSetup setup_;
    ConcatStrategy concat_;
    int query_weight_;
    std::map<std::string, PromptTemplate> templates_;
};

using MethodFactory = std::function<std::unique_ptr<Reformulator>(MethodSetup)>;

struct MethodInfo {
    std::string name;
    bool requires_searcher = false;
    ConcatStrategy default_concat = ConcatStrategy::append;
    /// Method-specific parameter keys accepted besides the common ones.
    std::vector<std::string> param_keys;
    MethodFactory factory;
};

/// Global method table. Built-in methods are registered on first access.
class MethodRegistry {
  public:
    static MethodRegistry& instance();

    /// Throws DuplicateRegistration, InvalidParam for a malformed name.
    void register_method(MethodInfo info);
    /// Throws UnknownMethod.
    const MethodInfo& get(std::string_view name) const;
    bool contains(std::string_view name) const;
    /// Sorted by name.
    std::vector<MethodInfo> list() const;

  private:
    MethodRegistry() = default;

    mutable std::mutex mutex_;
    std::map<std::string, MethodInfo, std::less<>> methods_;
};

/// Public registration entry point for new methods.
void register_method(const std::string& name, MethodFactory factory, bool requires_searcher,
                     ConcatStrategy default_concat = ConcatStrategy::append, std::vector<std::string> param_keys = {});

struct ReformulatorOptions {
    /// Defaults to the built-in bank.
    std::shared_ptr<const PromptBank> bank;
    /// Defaults to an HTTP gateway built from the LLM config.
    std::shared_ptr<LlmGateway> gateway;
    std::map<std::string, int> prompt_pins;
};

/// Throws UnknownMethod, MissingSearcher, InvalidParam, UnknownTemplate / UnknownVersion.
std::unique_ptr<Reformulator> create_reformulator(std::string_view method_name, const std::string& model,
                                                  MethodParams params = {},
                                                  LLMConfig llm = LLMConfig::from_environment(),
                                                  std::optional<std::int64_t> seed = std::nullopt,
                                                  ReformulatorOptions options = {});

/// Response parsers shared by the built-in methods.
namespace parse {

/// Split on commas and newlines, trim, drop empties and items longer than 10 words.
std::vector<std::string> keywords(std::string_view text);
/// Non-empty lines with list markers (`1.`, `2)`, `-`, `*`) stripped.
std::vector<std::string> lines(std::string_view text);
/// Blocks separated by blank lines; whole response when there is no separator.
std::vector<std::string> passages(std::string_view text);

}  // namespace parse

namespace methods {
/// max(1, round(lambda * expansion tokens / query tokens)), the MuGI repetition weight.
int mugi_adaptive_weight(std::string_view query, const std::vector<std::string>& docs, double lambda);
}  // namespace methods

/// `[1] first\n[2] second`, or `(no passages retrieved)` for an empty list.
std::string format_passages(const std::vector<std::string>& passages);

}  // namespace reformkit
