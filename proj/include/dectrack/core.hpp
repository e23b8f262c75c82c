#pragma once

#include "dectrack/common.hpp"
#include "dectrack/objectives.hpp"
#include "dectrack/rng.hpp"
#include "dectrack/topology.hpp"

#include <cstdlib>
#include <exception>
#include <thread>
#include <type_traits>
#include <vector>

namespace dectrack {

struct HyperParams {
    double eta_c = 0.0;  // local descent step (min variable)
    double eta_d = 0.0;  // local ascent step (max variable)
    double eta_s = 1.0;  // global multiplier for x
    double eta_r = 1.0;  // global multiplier for y
    int K = 1;           // local steps per communication round
    int T = 1;           // communication rounds
    int b_x = 0;         // mini-batch sizes; 0 = full (deterministic) batch
    int b_y = 0;
    bool project_each_step = true;  // project constrained y after every local ascent step

    double eta_x() const { return eta_s * eta_c; }
    double eta_y() const { return eta_r * eta_d; }
};

struct StepSizePlan {
    double kappa = 1.0;  // ell / mu
    double ell = 1.0;    // smoothness
    double mu = 1.0;     // strong-concavity modulus in y
    double p = 1.0;      // mixing contraction factor
};

/// Step sizes of the convergence theorem with unit Theta-constants:
/// eta_d = p/(kappa K ell), eta_c = eta_d/kappa^2, eta_s = eta_r = p.
/// `safety` scales the local steps (1/8 brings them under the explicit
/// local-drift bound eta_c, eta_d <= 1/(8 K ell)).
inline HyperParams derive_step_sizes(const StepSizePlan& plan, int K, double safety = 1.0) {
    require(plan.kappa > 0 && plan.ell > 0 && plan.mu > 0 && plan.p > 0,
            "derive_step_sizes: plan fields must be positive");
    require(K >= 1, "derive_step_sizes: K must be >= 1");
    require(safety > 0, "derive_step_sizes: safety must be positive");
    HyperParams hp;
    hp.K = K;
    hp.eta_d = safety * plan.p / (plan.kappa * K * plan.ell);
    hp.eta_c = hp.eta_d / (plan.kappa * plan.kappa);
    hp.eta_s = plan.p;
    hp.eta_r = plan.p;
    return hp;
}

/// Full Algorithm state: one column per node. Corrections C, D keep zero
/// column-mean at every round boundary (the tracking conservation law).
struct NetworkState {
    Mat X;  // d x n min variables
    Mat Y;  // q x n max variables
    Mat C;  // d x n corrections for x
    Mat D;  // q x n corrections for y
    long round = 0;
    long long sfo_count = 0;

    int n() const { return static_cast<int>(X.cols()); }
};

/// Per-round workspace: end-of-phase local iterates, the tracking variables
/// Z = (X^(t) - X^(t)+K)/(K eta_c), R = (Y^(t)+K - Y^(t))/(K eta_d), and the
/// accumulated local drift of the round.
struct RoundScratch {
    Mat Xk;
    Mat Yk;
    Mat Z;
    Mat R;
    std::vector<double> node_drift_x;
    std::vector<double> node_drift_y;

    double drift_x() const {
        double s = 0.0;
        for (double v : node_drift_x) s += v;
        return node_drift_x.empty() ? 0.0 : s / static_cast<double>(node_drift_x.size());
    }
    double drift_y() const {
        double s = 0.0;
        for (double v : node_drift_y) s += v;
        return node_drift_y.empty() ? 0.0 : s / static_cast<double>(node_drift_y.size());
    }
};

namespace detail {

inline int worker_threads() {
    const char* env = std::getenv("DECTRACK_THREADS");
    if (env == nullptr) return 0;
    const long v = std::strtol(env, nullptr, 10);
    return v > 0 ? static_cast<int>(v) : 0;
}

/// Runs fn(i) for i in [0, n). Nodes touch disjoint state, so the result is
/// independent of the thread decomposition.
template <typename F>
void for_each_node(int n, F&& fn) {
    const int nt = std::min(worker_threads(), n);
    if (nt <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nt));
    for (int w = 0; w < nt; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += nt) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline int effective_batch(int b, int m) { return b == 0 ? m : b; }

}  // namespace detail

/// Zero-mean correction initialization at the shared starting point:
///   c_i = -grad_x F_i(x0, y0; xi_i) + mean_j grad_x F_j(x0, y0; xi_j)
/// and analogously d_i, so both correction families have exactly zero mean.
inline void init_corrections(NetworkState& state, const Objective& obj,
                             const BatchSampler& sampler, const HyperParams& hp) {
    const int n = state.n();
    Mat gx(obj.dim_x(), n), gy(obj.dim_y(), n);
    detail::for_each_node(n, [&](int i) {
        const Vec x = state.X.col(i);
        const Vec y = state.Y.col(i);
        if (hp.b_x == 0) {
            gx.col(i) = obj.grad_x(i, x, y);
        } else {
            const auto batch = sampler.draw_init(i, BatchVar::x);
            gx.col(i) = obj.grad_x_batch(i, x, y, batch);
        }
        if (hp.b_y == 0) {
            gy.col(i) = obj.grad_y(i, x, y);
        } else {
            const auto batch = sampler.draw_init(i, BatchVar::y);
            gy.col(i) = obj.grad_y_batch(i, x, y, batch);
        }
    });
    const Vec gx_mean = gx.rowwise().mean();
    const Vec gy_mean = gy.rowwise().mean();
    state.C = -(gx.colwise() - gx_mean);
    state.D = -(gy.colwise() - gy_mean);
}

/// Shared-initialization network state. x0/y0 empty means zero (the max
/// variable is projected onto its constraint set first, e.g. the uniform
/// vector on the simplex). `track` selects Dec-FedTrack vs. the no-tracking
/// ablation (corrections pinned to zero).
inline NetworkState init_state(const Objective& obj, int n, const HyperParams& hp,
                               const BatchSampler& sampler, bool track, Vec x0 = {}, Vec y0 = {}) {
    require(n == obj.num_clients(), "init_state: node count does not match objective");
    require(hp.eta_c > 0 && hp.eta_d > 0, "init_state: local step sizes must be positive");
    if (x0.size() == 0) x0 = Vec::Zero(obj.dim_x());
    if (y0.size() == 0) y0 = Vec::Zero(obj.dim_y());
    require(x0.size() == obj.dim_x() && y0.size() == obj.dim_y(), "init_state: bad x0/y0 size");
    y0 = obj.y_constraint().project(y0);

    NetworkState st;
    st.X = x0.replicate(1, n);
    st.Y = y0.replicate(1, n);
    st.C = Mat::Zero(obj.dim_x(), n);
    st.D = Mat::Zero(obj.dim_y(), n);
    if (track) init_corrections(st, obj, sampler, hp);
    return st;
}

/// K local primal-dual steps per node against the frozen round-t corrections:
///   x <- x - eta_c (grad_x F_i(x, y; xi) + c_i)
///   y <- y + eta_d (grad_y F_i(x, y; xi) + d_i)   (then projected)
/// Both gradients are evaluated at the same (x, y) before either variable
/// moves. Fills the tracking variables and drift; raises NonFiniteError with
/// node/round/step context when an iterate explodes.
inline void local_phase(const NetworkState& state, RoundScratch& scratch, const Objective& obj,
                        const HyperParams& hp, const BatchSampler& sampler) {
    const int n = state.n();
    const int k_steps = hp.K;
    const auto& constraint = obj.y_constraint();
    const bool project = constraint.kind != YConstraintKind::none && hp.project_each_step;

    scratch.Xk.resize(state.X.rows(), n);
    scratch.Yk.resize(state.Y.rows(), n);
    scratch.Z.resize(state.X.rows(), n);
    scratch.R.resize(state.Y.rows(), n);
    scratch.node_drift_x.assign(static_cast<std::size_t>(n), 0.0);
    scratch.node_drift_y.assign(static_cast<std::size_t>(n), 0.0);

    const Vec x_bar = state.X.rowwise().mean();
    const Vec y_bar = state.Y.rowwise().mean();

    detail::for_each_node(n, [&](int i) {
        Vec x = state.X.col(i);
        Vec y = state.Y.col(i);
        const Vec c = state.C.col(i);
        const Vec d = state.D.col(i);
        for (int k = 0; k < k_steps; ++k) {
            scratch.node_drift_x[static_cast<std::size_t>(i)] += (x - x_bar).squaredNorm();
            scratch.node_drift_y[static_cast<std::size_t>(i)] += (y - y_bar).squaredNorm();

            Vec gx, gy;
            if (hp.b_x == 0) {
                gx = obj.grad_x(i, x, y);
            } else {
                const auto batch = sampler.draw(i, state.round, k, BatchVar::x);
                gx = obj.grad_x_batch(i, x, y, batch);
            }
            if (hp.b_y == 0) {
                gy = obj.grad_y(i, x, y);
            } else {
                const auto batch = sampler.draw(i, state.round, k, BatchVar::y);
                gy = obj.grad_y_batch(i, x, y, batch);
            }
            x -= hp.eta_c * (gx + c);
            y += hp.eta_d * (gy + d);
            if (project) y = constraint.project(y);
            if (!x.allFinite() || !y.allFinite()) throw NonFiniteError(i, state.round, k);
        }
        scratch.Xk.col(i) = x;
        scratch.Yk.col(i) = y;
        scratch.Z.col(i) = (state.X.col(i) - x) / (k_steps * hp.eta_c);
        scratch.R.col(i) = (y - state.Y.col(i)) / (k_steps * hp.eta_d);
    });
}

/// Gossip round: corrections absorb the mixed-vs-local tracking difference,
/// model variables replay the (globally rescaled) local displacement and mix.
///   C <- C - Z + Z W,  X <- (X - K eta_x Z) W   (and the y analogues)
/// With `track` off the corrections stay pinned at zero. A configured
/// y-constraint is re-applied to every mixed column.
inline void communicate(NetworkState& state, const RoundScratch& scratch, const HyperParams& hp,
                        const MixingMatrix& w, bool track = true,
                        const YConstraint* constraint = nullptr) {
    require(state.n() == w.n, "communicate: state/mixing dimension mismatch");
    if (track) {
        state.C += scratch.Z * w.w - scratch.Z;
        state.D += scratch.R * w.w - scratch.R;
    }
    state.X = (state.X - (hp.K * hp.eta_x()) * scratch.Z) * w.w;
    state.Y = (state.Y + (hp.K * hp.eta_y()) * scratch.R) * w.w;
    if (constraint != nullptr && constraint->kind != YConstraintKind::none)
        for (int i = 0; i < state.n(); ++i) state.Y.col(i) = constraint->project(state.Y.col(i));
    state.round += 1;
}

namespace detail {

template <typename Evaluator>
using RowOf = std::invoke_result_t<Evaluator&, const NetworkState&, double, double>;

template <typename Evaluator>
std::vector<RowOf<Evaluator>> run_impl(const Objective& obj, const MixingMatrix& w,
                                       const HyperParams& hp, const BatchSampler& sampler,
                                       Evaluator&& eval, int metrics_every, bool track, Vec x0,
                                       Vec y0) {
    require(metrics_every >= 1, "run: metrics_every must be >= 1");
    require(hp.T >= 0, "run: negative round count");
    require(w.n == obj.num_clients(), "run: topology size does not match objective");
    require(sampler.num_clients() == obj.num_clients(), "run: sampler does not match objective");

    NetworkState state = init_state(obj, w.n, hp, sampler, track, std::move(x0), std::move(y0));
    const long long sfo_per_round =
        static_cast<long long>(w.n) * hp.K *
        (effective_batch(hp.b_x, obj.samples_per_client()) +
         effective_batch(hp.b_y, obj.samples_per_client()));

    std::vector<RowOf<Evaluator>> rows;
    rows.push_back(eval(state, 0.0, 0.0));

    RoundScratch scratch;
    for (int t = 0; t < hp.T; ++t) {
        local_phase(state, scratch, obj, hp, sampler);
        communicate(state, scratch, hp, w, track, &obj.y_constraint());
        state.sfo_count += sfo_per_round;
        if ((t + 1) % metrics_every == 0 || t + 1 == hp.T)
            rows.push_back(eval(state, scratch.drift_x(), scratch.drift_y()));
    }
    return rows;
}

}  // namespace detail

/// Dec-FedTrack: T rounds of K local primal-dual steps with gradient-tracking
/// corrections, gossip-mixed through w. The evaluator is invoked on the round-0
/// state and then every `metrics_every` rounds (always on the final round);
/// its returned rows form the trajectory.
template <typename Evaluator>
auto run(const Objective& obj, const MixingMatrix& w, const HyperParams& hp,
         const BatchSampler& sampler, Evaluator&& eval, int metrics_every = 1, Vec x0 = {},
         Vec y0 = {}) {
    return detail::run_impl(obj, w, hp, sampler, std::forward<Evaluator>(eval), metrics_every,
                            true, std::move(x0), std::move(y0));
}

/// Ablation baseline: the identical loop with corrections pinned to zero
/// (local SGDA plus mixing of the model variables only).
template <typename Evaluator>
auto run_baseline_no_gt(const Objective& obj, const MixingMatrix& w, const HyperParams& hp,
                        const BatchSampler& sampler, Evaluator&& eval, int metrics_every = 1,
                        Vec x0 = {}, Vec y0 = {}) {
    return detail::run_impl(obj, w, hp, sampler, std::forward<Evaluator>(eval), metrics_every,
                            false, std::move(x0), std::move(y0));
}

}  // namespace dectrack
