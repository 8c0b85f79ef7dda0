#include "builtin.hpp"

#include "reformkit/errors.hpp"

namespace reformkit::methods {

int positive_param(const MethodParams& params, const std::string& key, int fallback) {
    const auto v = params.get_int(key, fallback);
    if (v < 1 || v > 1'000'000) throw InvalidParam("parameter '" + key + "' must be a positive integer");
    return static_cast<int>(v);
}

}  // namespace reformkit::methods
