#include "builtin.hpp"

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

// Single keyword-list generation; GenQR and Query2E differ only in their prompt family.
class KeywordExpansion final : public Reformulator {
  public:
    KeywordExpansion(MethodSetup setup, std::string template_id)
        : Reformulator(std::move(setup)), template_id_(std::move(template_id)) {
        use_template(template_id_);
    }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        auto completion = generate(trace, template_id_, {{"query", query.text}});
        auto keywords = parse::keywords(completion.choices.front());
        if (keywords.empty()) throw EmptyResponse(method() + ": no keywords could be parsed from the response");
        trace.note("keywords", keywords);
        return Expansion{std::move(keywords), std::nullopt, std::nullopt};
    }

  private:
    std::string template_id_;
};

}  // namespace

void register_genqr(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"genqr", false, ConcatStrategy::unique_terms, {}, [](MethodSetup s) {
                                            return std::make_unique<KeywordExpansion>(std::move(s), "genqr.keywords");
                                        }});
}

void register_query2e(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"query2e", false, ConcatStrategy::unique_terms, {}, [](MethodSetup s) {
                                            return std::make_unique<KeywordExpansion>(std::move(s), "query2e.expand");
                                        }});
}

}  // namespace reformkit::methods
