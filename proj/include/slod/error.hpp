#pragma once

#include <stdexcept>
#include <string>

namespace slod {

/// Precondition violated by the caller (bad sizes, out-of-range parameters).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not deliver its contract (breakdown,
/// singular factor, iteration cap).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SLOD_REQUIRE(cond, msg)                                   \
    do {                                                          \
        if (!(cond)) throw ::slod::InvalidArgument(std::string(msg)); \
    } while (0)

} // namespace slod
