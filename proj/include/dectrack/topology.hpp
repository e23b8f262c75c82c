#pragma once

#include "dectrack/common.hpp"
#include "dectrack/rng.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace dectrack {

/// Doubly-stochastic gossip weights over the communication graph, together
/// with the measured contraction factor p of the averaging step:
///   ||X W - Xbar||_F^2 <= (1 - p) ||X - Xbar||_F^2   for all X.
/// Immutable after construction; safe to share read-only across workers.
struct MixingMatrix {
    int n = 0;
    Mat w;
    double p_est = 0.0;
};

inline void validate_doubly_stochastic(const Mat& w, double tol = 1e-12) {
    require(w.rows() == w.cols() && w.rows() >= 1, "mixing matrix must be square and non-empty");
    require((w.array() >= 0.0).all(), "mixing matrix has a negative entry");
    const int n = static_cast<int>(w.rows());
    for (int i = 0; i < n; ++i) {
        require(std::abs(w.row(i).sum() - 1.0) <= tol,
                "row " + std::to_string(i) + " of mixing matrix does not sum to 1");
        require(std::abs(w.col(i).sum() - 1.0) <= tol,
                "column " + std::to_string(i) + " of mixing matrix does not sum to 1");
    }
}

/// Tightest contraction factor satisfying the averaging inequality, namely
/// 1 - s^2 with s the top singular value of W(I - J). Power iteration on
/// M = (W(I-J))^T (W(I-J)) to relative tolerance 1e-10.
inline double estimate_contraction(const Mat& w, int max_iters = 10000, double rel_tol = 1e-10) {
    validate_doubly_stochastic(w, 1e-9);
    const int n = static_cast<int>(w.rows());
    const Mat j = Mat::Constant(n, n, 1.0 / n);
    const Mat a = w * (Mat::Identity(n, n) - j);
    const Mat m = a.transpose() * a;

    StreamRng rng(StreamRng::key_of(0x5eedc0ffee1234ULL, static_cast<std::uint64_t>(n)));
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.next_unit() - 0.5;
    v.normalize();

    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vec mv = m * v;
        const double norm = mv.norm();
        if (norm <= 1e-15) return 1.0;  // W(I-J) numerically zero: complete mixing
        const double next = v.dot(mv);
        mv /= norm;
        if (it > 0 && std::abs(next - lambda) <= rel_tol * std::max(std::abs(next), 1e-30)) {
            lambda = next;
            const double s2 = std::min(std::max(lambda, 0.0), 1.0);
            return 1.0 - s2;
        }
        lambda = next;
        v = mv;
    }
    throw Error("estimate_contraction: power iteration did not converge within " +
                std::to_string(max_iters) + " iterations");
}

/// pi-lazy random walk on the ring graph: W = (1-pi) I + pi A_ring, where
/// A_ring gives weight 1/2 to each ring neighbor. A 2-ring carries a double
/// edge, so n <= 2 degenerates to the complete graph on n nodes.
inline MixingMatrix build_ring_lazy_walk(int n, double pi) {
    require(n >= 1, "build_ring_lazy_walk: n must be positive");
    require(pi > 0.0 && pi < 1.0, "build_ring_lazy_walk: pi must lie in (0,1)");
    Mat a = Mat::Zero(n, n);
    if (n == 1) {
        a(0, 0) = 1.0;
    } else {
        for (int i = 0; i < n; ++i) {
            a(i, (i + 1) % n) += 0.5;
            a(i, (i + n - 1) % n) += 0.5;
        }
    }
    MixingMatrix mm;
    mm.n = n;
    mm.w = (1.0 - pi) * Mat::Identity(n, n) + pi * a;
    mm.p_est = estimate_contraction(mm.w);
    return mm;
}

/// W = (1/n) 1 1^T: one gossip step replaces every column by the mean (p = 1).
inline MixingMatrix build_complete(int n) {
    require(n >= 1, "build_complete: n must be positive");
    MixingMatrix mm;
    mm.n = n;
    mm.w = Mat::Constant(n, n, 1.0 / n);
    mm.p_est = 1.0;
    return mm;
}

/// W = I: no communication (p = 0).
inline MixingMatrix build_identity(int n) {
    require(n >= 1, "build_identity: n must be positive");
    MixingMatrix mm;
    mm.n = n;
    mm.w = Mat::Identity(n, n);
    mm.p_est = 0.0;
    return mm;
}

inline double estimate_contraction(const MixingMatrix& mm) { return estimate_contraction(mm.w); }

/// Whitespace-separated n x n matrix from a text file, validated against all
/// mixing-matrix invariants; p is measured, not trusted.
inline MixingMatrix load_matrix_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "matrix_file: cannot open " + path);
    std::vector<double> vals;
    double v;
    while (in >> v) vals.push_back(v);
    require(!in.bad(), "matrix_file: read error in " + path);
    const auto total = vals.size();
    int n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(total))));
    require(n >= 1 && static_cast<std::size_t>(n) * static_cast<std::size_t>(n) == total,
            "matrix_file: " + path + " holds " + std::to_string(total) +
                " values, not a square matrix");
    Mat w(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w(i, j) = vals[static_cast<std::size_t>(i) * n + j];
    validate_doubly_stochastic(w);
    MixingMatrix mm;
    mm.n = n;
    mm.w = std::move(w);
    mm.p_est = estimate_contraction(mm.w);
    return mm;
}

}  // namespace dectrack
