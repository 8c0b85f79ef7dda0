#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

namespace reformkit {

enum class BackendKind { http, mock };

const char* to_string(BackendKind kind) noexcept;

/// Record of one logical chat-completion call, including all retry attempts.
struct CallTrace {
    std::string request_fingerprint;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 0;
    std::optional<std::int64_t> seed;
    int n = 1;
    int attempt_count = 0;
    std::chrono::microseconds latency{0};
    BackendKind backend = BackendKind::mock;
    /// Number of choices returned; less than `n` when the backend under-delivered.
    int choices_returned = 0;
    /// Prompt template that produced the request, "id@version", when known.
    std::string prompt;
};

}  // namespace reformkit
