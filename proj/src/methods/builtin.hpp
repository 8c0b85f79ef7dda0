#pragma once

#include "reformkit/reform.hpp"

namespace reformkit::methods {

void register_query2doc(MethodRegistry& registry);
void register_genqr(MethodRegistry& registry);
void register_genqr_ensemble(MethodRegistry& registry);
void register_query2e(MethodRegistry& registry);
void register_qa_expand(MethodRegistry& registry);
void register_mugi(MethodRegistry& registry);
void register_lamer(MethodRegistry& registry);
void register_csqe(MethodRegistry& registry);

inline void register_builtin_methods(MethodRegistry& registry) {
    register_query2doc(registry);
    register_genqr(registry);
    register_genqr_ensemble(registry);
    register_query2e(registry);
    register_qa_expand(registry);
    register_mugi(registry);
    register_lamer(registry);
    register_csqe(registry);
}

/// Reads a strictly positive integer parameter.
int positive_param(const MethodParams& params, const std::string& key, int fallback);

}  // namespace reformkit::methods
