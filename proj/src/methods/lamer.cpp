#include "builtin.hpp"

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

constexpr const char* kTemplate = "lamer.answer_gen";

// Answers written by the LLM with the top retrieved passages in context.
class LameR final : public Reformulator {
  public:
    explicit LameR(MethodSetup setup) : Reformulator(std::move(setup)) {
        retrieval_k_ = positive_param(params(), "retrieval_k", 10);
        num_answers_ = positive_param(params(), "num_answers", 3);
        use_template(kTemplate);
    }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        auto hits = retrieve(trace, query.text, static_cast<std::size_t>(retrieval_k_));
        std::vector<std::string> passages;
        if (!hits.empty()) {
            auto extracted = extract_answers(hits, searcher().binding().answer_key);
            if (extracted.skipped > 0) trace.note("passages_skipped", static_cast<std::int64_t>(extracted.skipped));
            passages = std::move(extracted.texts);
        }
        auto completion = generate(trace, kTemplate,
                                   {{"query", query.text},
                                    {"passages", format_passages(passages)},
                                    {"num_answers", std::to_string(num_answers_)}});
        auto answers = parse::passages(completion.choices.front());
        if (answers.size() > static_cast<std::size_t>(num_answers_)) answers.resize(num_answers_);
        if (answers.empty()) throw EmptyResponse("lamer: generated answers are empty");
        return Expansion{std::move(answers), std::nullopt, std::nullopt};
    }

  private:
    int retrieval_k_ = 10;
    int num_answers_ = 3;
};

}  // namespace

void register_lamer(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"lamer", true, ConcatStrategy::append, {"retrieval_k", "num_answers"},
                                        [](MethodSetup s) { return std::make_unique<LameR>(std::move(s)); }});
}

}  // namespace reformkit::methods
