#pragma once

#include <stdexcept>
#include <string>

namespace elect {

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericDomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Remote call failure. `attempts` is how many requests were issued before
// giving up; `retryable` is false for errors a retry cannot fix (4xx).
struct TransportError : std::runtime_error {
    TransportError(const std::string& what, int attempts, bool retryable)
        : std::runtime_error(what), attempts(attempts), retryable(retryable) {}
    int attempts;
    bool retryable;
};

}  // namespace elect
