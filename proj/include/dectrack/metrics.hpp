#pragma once

#include "dectrack/common.hpp"
#include "dectrack/core.hpp"
#include "dectrack/data.hpp"
#include "dectrack/objectives.hpp"

#include <optional>
#include <ostream>
#include <string>

namespace dectrack {

/// Per-round diagnostics row. `delta_hat` approximates the dual consensus
/// distance ||y_hat - y_bar||^2 using the inner-max result (a diagnostic, not
/// a guarantee); it is not part of the CSV contract.
struct RoundMetrics {
    long round = 0;
    long long sfo_calls = 0;
    long comm_rounds = 0;
    double phi = 0.0;
    double grad_phi_sq = 0.0;
    double xi_x = 0.0;
    double xi_y = 0.0;
    double drift_x = 0.0;
    double drift_y = 0.0;
    std::optional<double> test_acc;
    double delta_hat = 0.0;
    bool inner_converged = true;
};

inline constexpr const char* kMetricsCsvHeader =
    "round,sfo_calls,comm_rounds,phi,grad_phi_sq,xi_x,xi_y,drift_x,drift_y,test_acc";

inline void write_csv_row(std::ostream& out, const RoundMetrics& m) {
    out << m.round << ',' << m.sfo_calls << ',' << m.comm_rounds << ',' << format_double(m.phi)
        << ',' << format_double(m.grad_phi_sq) << ',' << format_double(m.xi_x) << ','
        << format_double(m.xi_y) << ',' << format_double(m.drift_x) << ','
        << format_double(m.drift_y) << ',';
    if (m.test_acc) out << format_double(*m.test_acc);
    out << '\n';
}

/// Empirical client variance (Xi^x, Xi^y): mean squared deviation of node
/// columns from the network mean. Zero iff exact consensus.
inline std::pair<double, double> consensus(const NetworkState& state) {
    const Vec x_bar = state.X.rowwise().mean();
    const Vec y_bar = state.Y.rowwise().mean();
    const double n = static_cast<double>(state.n());
    return {(state.X.colwise() - x_bar).squaredNorm() / n,
            (state.Y.colwise() - y_bar).squaredNorm() / n};
}

/// Fraction of test samples classified correctly under the prediction rule
/// sign(-a^T x) (ties a^T x = 0 count as incorrect).
inline double test_accuracy(const Vec& model_x, const Dataset& test) {
    require(!test.samples.empty(), "test_accuracy: empty test set");
    std::size_t correct = 0;
    for (std::size_t s = 0; s < test.size(); ++s) {
        const double score = test.dot(model_x, static_cast<int>(s));
        if (test.samples[s].label * score < 0.0) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct InnerMaxResult {
    Vec y_hat;
    double phi = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Primal-function oracle: Phi(x) = max_y f(x, y) by projected gradient
/// ascent at step 1/ell_y, where ell_y is a matrix-free power-iteration
/// estimate of the y-curvature. Warm-startable; stops when the projected
/// gradient norm drops below tol.
class PrimalEvaluator {
public:
    explicit PrimalEvaluator(const Objective& obj, double tol = 1e-8, int max_iters = 100000)
        : obj_(obj), tol_(tol), max_iters_(max_iters) {}

    /// Largest y-curvature of f(x, .) estimated by power iteration on the
    /// y-Hessian using central-difference Hessian-vector products.
    double estimate_y_curvature(const Vec& x, const Vec& y) const {
        const int q = obj_.dim_y();
        StreamRng rng(StreamRng::key_of(0xe11c0deULL, static_cast<std::uint64_t>(q)));
        Vec v(q);
        for (int i = 0; i < q; ++i) v[i] = rng.next_unit() - 0.5;
        v.normalize();
        const double h = 1e-5;
        double lambda = 0.0;
        for (int it = 0; it < 200; ++it) {
            const Vec hv =
                (obj_.grad_y_avg(x, y + h * v) - obj_.grad_y_avg(x, y - h * v)) / (2.0 * h);
            const double next = hv.norm();
            if (next <= 1e-14) return 1.0;  // flat objective; any step works
            if (it > 0 && std::abs(next - lambda) <= 1e-6 * next) return next;
            lambda = next;
            v = hv / next;
        }
        return lambda;
    }

    InnerMaxResult inner_max(const Vec& x, const Vec& y_init) {
        if (ell_y_ <= 0.0) ell_y_ = estimate_y_curvature(x, y_init);
        const double step = 1.0 / ell_y_;
        const auto& constraint = obj_.y_constraint();

        InnerMaxResult res;
        res.y_hat = constraint.project(y_init);
        double value = obj_.value_avg(x, res.y_hat);
        for (int it = 0; it < max_iters_; ++it) {
            const Vec g = obj_.grad_y_avg(x, res.y_hat);
            const Vec y_next = constraint.project(res.y_hat + step * g);
            const double pg_norm = (y_next - res.y_hat).norm() / step;
            res.iterations = it + 1;
            if (pg_norm <= tol_) {
                res.converged = true;
                res.y_hat = y_next;
                break;
            }
            res.y_hat = y_next;
            const double next_value = obj_.value_avg(x, res.y_hat);
            // Strong concavity at step 1/ell_y makes ascent monotone; a drop
            // beyond roundoff means the curvature estimate is stale.
            if (next_value < value - 1e-9 * (1.0 + std::abs(value)))
                throw Error("inner_max: ascent not monotone (curvature estimate too small)");
            value = next_value;
        }
        res.phi = obj_.value_avg(x, res.y_hat);
        return res;
    }

    InnerMaxResult inner_max(const Vec& x) {
        Vec y0 = warm_.size() == obj_.dim_y() ? warm_ : Vec::Zero(obj_.dim_y());
        InnerMaxResult res = inner_max(x, y0);
        warm_ = res.y_hat;
        return res;
    }

    /// Danskin evaluation: grad Phi(x) = grad_x f(x, y_hat) at the inner
    /// maximizer.
    Vec grad_phi(const Vec& x, const Vec& y_hat) const { return obj_.grad_x_avg(x, y_hat); }

    double tol() const { return tol_; }

private:
    const Objective& obj_;
    double tol_;
    int max_iters_;
    double ell_y_ = -1.0;
    Vec warm_;
};

/// Standard evaluator wiring for core::run hooks: primal oracle + consensus +
/// optional test accuracy.
class MetricsEvaluator {
public:
    MetricsEvaluator(const Objective& obj, double inner_tol = 1e-8, int inner_max_iters = 100000,
                     const Dataset* test_set = nullptr)
        : primal_(obj, inner_tol, inner_max_iters), test_(test_set) {}

    RoundMetrics operator()(const NetworkState& state, double drift_x, double drift_y) {
        RoundMetrics m;
        m.round = state.round;
        m.sfo_calls = state.sfo_count;
        m.comm_rounds = state.round;
        const auto [xi_x, xi_y] = consensus(state);
        m.xi_x = xi_x;
        m.xi_y = xi_y;
        m.drift_x = drift_x;
        m.drift_y = drift_y;

        const Vec x_bar = state.X.rowwise().mean();
        const Vec y_bar = state.Y.rowwise().mean();
        auto inner = primal_.inner_max(x_bar);
        m.phi = inner.phi;
        m.inner_converged = inner.converged;
        m.grad_phi_sq = primal_.grad_phi(x_bar, inner.y_hat).squaredNorm();
        m.delta_hat = (inner.y_hat - y_bar).squaredNorm();
        if (test_ != nullptr) m.test_acc = test_accuracy(x_bar, *test_);
        return m;
    }

    PrimalEvaluator& primal() { return primal_; }

private:
    PrimalEvaluator primal_;
    const Dataset* test_;
};

}  // namespace dectrack
