// A method defined entirely outside the library, registered through the public API only.

#include <cctype>

#include "reformkit/reform.hpp"

namespace {

class UpperEcho final : public reformkit::Reformulator {
  public:
    using Reformulator::Reformulator;

  protected:
    Expansion expand(const reformkit::QueryItem& query, reformkit::PipelineTrace& trace) const override {
        std::string upper = query.text;
        for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        trace.note("echo", upper);
        return Expansion{{}, std::nullopt, upper};
    }
};

const bool registered = [] {
    reformkit::register_method(
        "upper_echo", [](reformkit::MethodSetup setup) { return std::make_unique<UpperEcho>(std::move(setup)); },
        false);
    return true;
}();

}  // namespace

namespace reformkit::testing {
bool upper_echo_registered() { return registered; }
}  // namespace reformkit::testing
