#include "builtin.hpp"

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

constexpr const char* kExtract = "csqe.extract";
constexpr const char* kGenerate = "csqe.generate";

// Corpus-steered expansion: sentences pulled from retrieved passages plus
// self-generated knowledge passages. The two LLM sub-steps fail independently.
class CSQE final : public Reformulator {
  public:
    explicit CSQE(MethodSetup setup) : Reformulator(std::move(setup)) {
        retrieval_k_ = positive_param(params(), "retrieval_k", 10);
        gen_passages_ = positive_param(params(), "gen_passages", 5);
        use_template(kExtract);
        use_template(kGenerate);
    }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        auto hits = retrieve(trace, query.text, static_cast<std::size_t>(retrieval_k_));
        std::vector<std::string> passages;
        if (!hits.empty()) passages = extract_answers(hits, searcher().binding().answer_key).texts;

        std::vector<std::string> sentences;
        try {
            auto c = generate(trace, kExtract, {{"query", query.text}, {"passages", format_passages(passages)}});
            sentences = parse::lines(c.choices.front());
        } catch (const std::exception& e) {
            trace.note("extract_error", std::string(e.what()));
        }
        trace.note("extracted_sentences", sentences);

        std::vector<std::string> generated;
        try {
            auto c = generate(trace, kGenerate,
                              {{"query", query.text}, {"num_passages", std::to_string(gen_passages_)}});
            generated = parse::passages(c.choices.front());
        } catch (const std::exception& e) {
            trace.note("generate_error", std::string(e.what()));
        }
        trace.note("generated_passages", generated);

        if (sentences.empty() && generated.empty()) {
            throw EmptyResponse("csqe: both extraction and generation produced nothing");
        }
        std::vector<std::string> expansions = std::move(sentences);
        expansions.insert(expansions.end(), generated.begin(), generated.end());
        return Expansion{std::move(expansions), std::nullopt, std::nullopt};
    }

  private:
    int retrieval_k_ = 10;
    int gen_passages_ = 5;
};

}  // namespace

void register_csqe(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"csqe", true, ConcatStrategy::repeat_query, {"retrieval_k", "gen_passages"},
                                        [](MethodSetup s) { return std::make_unique<CSQE>(std::move(s)); }});
}

}  // namespace reformkit::methods
