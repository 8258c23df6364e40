#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mte {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a caller passes arguments outside an operation's domain.
struct DomainError : Error {
    using Error::Error;
};

struct BracketError : Error {
    using Error::Error;
};

struct QuadratureError : Error {
    using Error::Error;
};

struct RankDeficiencyError : Error {
    int column;
    explicit RankDeficiencyError(int col)
        : Error("design matrix is rank-deficient at column " + std::to_string(col)),
          column(col) {}
};

struct SeparationError : Error {
    std::vector<double> gradient_trace;
    SeparationError(std::string msg, std::vector<double> trace)
        : Error(std::move(msg)), gradient_trace(std::move(trace)) {}
};

struct LpInfeasibleError : Error {
    using Error::Error;
};

struct LpUnboundedError : Error {
    using Error::Error;
};

// Closed interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double length() const { return hi - lo; }
    bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

enum class Monotonicity { None, Decreasing, Increasing };

inline const char* to_string(Monotonicity m) {
    switch (m) {
    case Monotonicity::Decreasing: return "decreasing";
    case Monotonicity::Increasing: return "increasing";
    default: return "none";
    }
}

// Covariate values identifying a cell along one dimension (x or w).
using Key = std::vector<double>;

}  // namespace mte
