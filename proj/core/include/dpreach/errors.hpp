#pragma once

#include <stdexcept>
#include <string>

namespace dpreach {

// Error categories map onto CLI exit codes (see tools/dpreach.cpp).

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller asked for an action outside the feasible set (e.g. c > w).
class FeasibilityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace dpreach
