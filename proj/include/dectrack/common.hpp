#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace dectrack {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an iterate turns non-finite; carries enough context to point
/// at the offending node/round/step (usually a too-large step size).
class NonFiniteError : public Error {
public:
    NonFiniteError(int node, long round, int step)
        : Error("non-finite iterate at node " + std::to_string(node) + ", round " +
                std::to_string(round) + ", local step " + std::to_string(step) +
                " (step size too large?)"),
          node(node), round(round), step(step) {}
    int node;
    long round;
    int step;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

/// log(1+exp(z)) without overflow for large |z|.
inline double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

/// 1/(1+exp(-z)), evaluated on the stable branch.
inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Shortest decimal that round-trips a double; used for all persisted reals
/// so reruns are byte-identical.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace dectrack
