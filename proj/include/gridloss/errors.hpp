#pragma once

#include <stdexcept>
#include <string>

namespace gridloss {

// Bad input data or configuration: malformed CSV/JSON, schema violations,
// inconsistent cross-references. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Optimization did not produce a usable optimum (infeasible, unbounded,
// budget exhausted beyond tolerance). CLI maps this to exit code 3.
struct SolveError : std::runtime_error {
    explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

// Independent power-flow verification disagreed with the conic solution
// beyond the configured tolerance. CLI maps this to exit code 4.
struct VerifyError : std::runtime_error {
    explicit VerifyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridloss
