#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace klora {

// Bad arguments or data that violates a documented precondition.
class invalid_input_error : public std::runtime_error {
public:
    explicit invalid_input_error(const std::string& what) : std::runtime_error(what) {}
};

// An iterative kernel failed to converge or produced non-finite values.
// `partial` optionally carries whatever was computed before the failure
// (e.g. eigenvalues found so far), so callers can report diagnostics.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
    numerical_error(const std::string& what, std::vector<double> partial_data)
        : std::runtime_error(what), partial(std::move(partial_data)) {}

    std::vector<double> partial;
};

} // namespace klora
