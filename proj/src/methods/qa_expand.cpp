#include "builtin.hpp"

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

constexpr const char* kQuestions = "qa_expand.questions";
constexpr const char* kAnswer = "qa_expand.answer";

// Sub-question decomposition followed by one answer generation per question.
class QAExpand final : public Reformulator {
  public:
    explicit QAExpand(MethodSetup setup) : Reformulator(std::move(setup)) {
        num_questions_ = positive_param(params(), "num_questions", 4);
        use_template(kQuestions);
        use_template(kAnswer);
    }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        auto completion = generate(trace, kQuestions,
                                   {{"query", query.text}, {"num_questions", std::to_string(num_questions_)}});
        auto questions = parse::lines(completion.choices.front());
        if (questions.size() > static_cast<std::size_t>(num_questions_)) questions.resize(num_questions_);
        if (questions.empty()) throw EmptyResponse("qa_expand: no sub-questions could be parsed");
        trace.note("questions", questions);

        std::vector<std::string> answers;
        for (const auto& question : questions) {
            try {
                auto answer = generate(trace, kAnswer, {{"query", query.text}, {"question", question}});
                auto text = normalize_whitespace(answer.choices.front());
                if (!text.empty()) answers.push_back(std::move(text));
            } catch (const std::exception& e) {
                trace.append("failed_answers", question + ": " + e.what());
            }
        }
        if (answers.empty()) throw EmptyResponse("qa_expand: every answer generation failed or was empty");
        return Expansion{std::move(answers), std::nullopt, std::nullopt};
    }

  private:
    int num_questions_ = 4;
};

}  // namespace

void register_qa_expand(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"qa_expand", false, ConcatStrategy::append, {"num_questions"},
                                        [](MethodSetup s) { return std::make_unique<QAExpand>(std::move(s)); }});
}

}  // namespace reformkit::methods
