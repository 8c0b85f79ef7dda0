#pragma once

// Toy datasets and an all-methods mock script for benchmark-level tests.

#include <string>
#include <vector>

#include "reformkit/llm.hpp"
#include "support/scripted.hpp"
#include "support/temp_dir.hpp"

namespace reformkit::testing {

inline std::string toy_queries_tsv(int count, const std::string& prefix = "q") {
    static const char* topics[] = {"capital of france", "boiling point of water", "largest ocean",
                                   "speed of light",    "tallest mountain",       "first moon landing",
                                   "photosynthesis",    "human genome size"};
    std::string out;
    for (int i = 0; i < count; ++i) {
        out += prefix + std::to_string(i + 1) + "\t" + topics[i % 8] + (i >= 8 ? " " + std::to_string(i) : "") + "\n";
    }
    return out;
}

inline std::string toy_corpus_tsv() {
    return "d1\tparis is the capital and largest city of france\n"
           "d2\twater boils at one hundred degrees celsius at sea level\n"
           "d3\tthe pacific is the largest ocean on earth\n"
           "d4\tlight travels at about three hundred thousand kilometres per second\n"
           "d5\tmount everest is the tallest mountain above sea level\n"
           "d6\tapollo eleven landed on the moon in 1969\n"
           "d7\tplants convert light into chemical energy by photosynthesis\n"
           "d8\tthe human genome has about three billion base pairs\n"
           "d9\tfrance borders spain and germany\n"
           "d10\tthe atlantic ocean separates europe and america\n"
           "d11\tcelsius and fahrenheit are temperature scales\n"
           "d12\tthe moon orbits the earth\n";
}

/// Match-only script: responses depend solely on the prompt, so every call is reproducible.
inline std::vector<MockResponse> all_methods_script() {
    return {
        on(marker::query2doc, {"a concise factual passage about the topic"}),
        on(marker::genqr, {"facts, overview, definition"}),
        on(marker::query2e, {"entity one, entity two"}),
        on(marker::qa_questions, {"1. what is it?\n2. why does it matter?"}),
        on(marker::qa_answer, {"a short factual answer"}),
        on(marker::mugi, {"pseudo document one", "pseudo document two", "pseudo document three"}),
        on(marker::lamer, {"candidate answer one\n\ncandidate answer two\n\ncandidate answer three"}),
        on(marker::csqe_extract, {"an extracted sentence.\nanother extracted sentence."}),
        on(marker::csqe_generate, {"generated one\n\ngenerated two\n\ngenerated three\n\ngenerated four\n\ngenerated five"}),
        on(marker::keywords_list, {"related, terms, keywords"}),
    };
}

}  // namespace reformkit::testing
