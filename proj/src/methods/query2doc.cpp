#include "builtin.hpp"

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

constexpr const char* kTemplate = "query2doc.passage_gen";

// One pseudo-document per query, appended after the query repeated w times.
class Query2Doc final : public Reformulator {
  public:
    explicit Query2Doc(MethodSetup setup) : Reformulator(std::move(setup)) { use_template(kTemplate); }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        auto completion = generate(trace, kTemplate, {{"query", query.text}});
        auto doc = normalize_whitespace(completion.choices.front());
        if (doc.empty()) throw EmptyResponse("query2doc: generated pseudo-document is empty");
        if (completion.choices.size() > 1) {
            trace.note("unused_choices",
                       std::vector<std::string>(completion.choices.begin() + 1, completion.choices.end()));
        }
        return Expansion{{std::move(doc)}, std::nullopt, std::nullopt};
    }
};

}  // namespace

void register_query2doc(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"query2doc", false, ConcatStrategy::repeat_query, {},
                                        [](MethodSetup s) { return std::make_unique<Query2Doc>(std::move(s)); }});
}

}  // namespace reformkit::methods
