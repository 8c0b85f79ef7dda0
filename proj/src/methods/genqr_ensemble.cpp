#include "builtin.hpp"

#include <cstdio>

#include "reformkit/errors.hpp"

namespace reformkit::methods {
namespace {

std::string variant_id(int i) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "genqr_ensemble.v%02d", i);
    return buf;
}

// One keyword generation per paraphrased instruction; lists are unioned in variant order.
class GenQREnsemble final : public Reformulator {
  public:
    explicit GenQREnsemble(MethodSetup setup) : Reformulator(std::move(setup)) {
        const auto& p = params();
        const int fallback = p.has("num_keywords_sets") ? positive_param(p, "num_keywords_sets", 10) : 10;
        variants_ = positive_param(p, "n_instructions", fallback);
        for (int i = 1; i <= variants_; ++i) use_template(variant_id(i));
    }

  protected:
    Expansion expand(const QueryItem& query, PipelineTrace& trace) const override {
        std::vector<std::string> keywords;
        std::string last_error;
        for (int i = 1; i <= variants_; ++i) {
            const auto id = variant_id(i);
            try {
                auto completion = generate(trace, id, {{"query", query.text}});
                auto parsed = parse::keywords(completion.choices.front());
                keywords.insert(keywords.end(), parsed.begin(), parsed.end());
            } catch (const std::exception& e) {
                last_error = e.what();
                trace.append("failed_variants", id + ": " + e.what());
            }
        }
        if (keywords.empty()) {
            throw EmptyResponse("genqr_ensemble: no keywords from any instruction variant" +
                                (last_error.empty() ? std::string() : " (last error: " + last_error + ")"));
        }
        trace.note("keywords", keywords);
        return Expansion{std::move(keywords), std::nullopt, std::nullopt};
    }

  private:
    int variants_ = 10;
};

}  // namespace

void register_genqr_ensemble(MethodRegistry& registry) {
    registry.register_method(MethodInfo{"genqr_ensemble", false, ConcatStrategy::unique_terms,
                                        {"n_instructions", "num_keywords_sets"},
                                        [](MethodSetup s) { return std::make_unique<GenQREnsemble>(std::move(s)); }});
}

}  // namespace reformkit::methods
