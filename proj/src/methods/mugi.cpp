#include "builtin.hpp"

#include <cmath>

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

constexpr const char* kTemplate = "mugi.passage_gen";

// Several sampled pseudo-documents; the query is repeated in proportion to their length.
class MuGI final : public Reformulator {
  public:
    explicit MuGI(MethodSetup setup) : Reformulator(std::move(setup)) {
        num_docs_ = positive_param(params(), "num_docs", 3);
        lambda_ = params().get_double("mugi_lambda", 0.3);
        if (!(lambda_ >= 0.0)) throw InvalidParam("parameter 'mugi_lambda' must be >= 0");
        fixed_weight_ = params().has("query_weight");
        use_template(kTemplate);
    }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        const std::map<std::string, std::string> vars{{"query", query.text}};
        std::vector<std::string> docs;
        auto collect = [&](const Completion& c) {
            for (const auto& choice : c.choices) {
                if (docs.size() >= static_cast<std::size_t>(num_docs_)) break;
                auto text = normalize_whitespace(choice);
                if (!text.empty()) docs.push_back(std::move(text));
            }
        };
        auto first = generate(trace, kTemplate, vars, num_docs_);
        collect(first);
        // Backends that ignore n get topped up with single-sample calls.
        for (auto returned = first.choices.size(); returned < static_cast<std::size_t>(num_docs_); ++returned) {
            collect(generate(trace, kTemplate, vars, 1));
        }
        if (docs.empty()) throw EmptyResponse("mugi: all pseudo-documents were empty");

        std::optional<int> weight;
        if (!fixed_weight_) weight = adaptive_weight(query.text, docs, lambda_);
        return Expansion{std::move(docs), weight, std::nullopt};
    }

  public:
    static int adaptive_weight(std::string_view query, const std::vector<std::string>& docs, double lambda) {
        std::size_t expansion_tokens = 0;
        for (const auto& d : docs) expansion_tokens += tokenize(d).size();
        const auto query_tokens = std::max<std::size_t>(1, tokenize(query).size());
        const auto w = std::lround(lambda * static_cast<double>(expansion_tokens) / static_cast<double>(query_tokens));
        return static_cast<int>(std::max<long>(1, w));
    }

  private:
    int num_docs_ = 3;
    double lambda_ = 0.3;
    bool fixed_weight_ = false;
};

}  // namespace

int mugi_adaptive_weight(std::string_view query, const std::vector<std::string>& docs, double lambda) {
    return MuGI::adaptive_weight(query, docs, lambda);
}

void register_mugi(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"mugi", false, ConcatStrategy::repeat_query, {"num_docs", "mugi_lambda"},
                                        [](MethodSetup s) { return std::make_unique<MuGI>(std::move(s)); }});
}

}  // namespace reformkit::methods
