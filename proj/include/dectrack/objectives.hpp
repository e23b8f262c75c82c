#pragma once

#include "dectrack/common.hpp"
#include "dectrack/data.hpp"
#include "dectrack/rng.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

namespace dectrack {

// ---------------------------------------------------------------------------
// y-constraint projectors
// ---------------------------------------------------------------------------

/// Euclidean projection onto the probability simplex {y : y_k in [0,1],
/// sum y_k = 1} by the sort-and-threshold rule: sort descending, find the
/// largest rho with u_rho - (sum_{r<=rho} u_r - 1)/rho > 0, clip at that
/// threshold.
inline Vec project_simplex(const Vec& v) {
    const int q = static_cast<int>(v.size());
    require(q >= 1, "project_simplex: empty vector");
    require(v.allFinite(), "project_simplex: non-finite input");

    std::vector<double> u(v.data(), v.data() + q);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, tau = 0.0;
    for (int r = 0; r < q; ++r) {
        cum += u[static_cast<std::size_t>(r)];
        const double cand = (cum - 1.0) / (r + 1);
        if (u[static_cast<std::size_t>(r)] - cand > 0.0) tau = cand;
    }
    return v.unaryExpr([tau](double x) { return std::max(x - tau, 0.0); });
}

/// Componentwise clamp onto the L-infinity ball of radius delta.
inline Vec project_linf_ball(const Vec& v, double delta) {
    require(delta >= 0.0, "project_linf_ball: negative radius");
    require(v.allFinite(), "project_linf_ball: non-finite input");
    return v.cwiseMax(-delta).cwiseMin(delta);
}

enum class YConstraintKind { none, simplex, linf_ball };

struct YConstraint {
    YConstraintKind kind = YConstraintKind::none;
    double delta = 0.0;

    Vec project(const Vec& y) const {
        switch (kind) {
            case YConstraintKind::none: return y;
            case YConstraintKind::simplex: return project_simplex(y);
            case YConstraintKind::linf_ball: return project_linf_ball(y, delta);
        }
        throw Error("YConstraint: unknown kind");
    }
};

// ---------------------------------------------------------------------------
// Objective interface
// ---------------------------------------------------------------------------

/// The local minimax objective family f_i(x, y). Instances are immutable
/// after construction; every evaluation is a pure function, safe to call
/// concurrently across clients.
///
/// Batched gradients replace the per-sample average by an average over the
/// batch (with multiplicity; batches are drawn with replacement). Terms of
/// the full objective that do not decompose over samples are never
/// subsampled, so averaging over all singleton batches reproduces the full
/// gradient exactly.
class Objective {
public:
    virtual ~Objective() = default;

    virtual int dim_x() const = 0;
    virtual int dim_y() const = 0;
    virtual int num_clients() const = 0;
    /// m, the per-client sample count (1 for sample-free objectives).
    virtual int samples_per_client() const = 0;
    virtual const std::vector<std::vector<int>>& client_samples() const = 0;
    virtual const YConstraint& y_constraint() const = 0;

    virtual double value(int client, const Vec& x, const Vec& y) const = 0;
    virtual Vec grad_x(int client, const Vec& x, const Vec& y) const = 0;
    virtual Vec grad_y(int client, const Vec& x, const Vec& y) const = 0;
    virtual Vec grad_x_batch(int client, const Vec& x, const Vec& y,
                             std::span<const int> batch) const = 0;
    virtual Vec grad_y_batch(int client, const Vec& x, const Vec& y,
                             std::span<const int> batch) const = 0;

    // Network averages (1/n) sum_i; overridden where a one-pass evaluation exists.
    virtual double value_avg(const Vec& x, const Vec& y) const {
        double s = 0.0;
        for (int i = 0; i < num_clients(); ++i) s += value(i, x, y);
        return s / num_clients();
    }
    virtual Vec grad_x_avg(const Vec& x, const Vec& y) const {
        Vec g = Vec::Zero(dim_x());
        for (int i = 0; i < num_clients(); ++i) g += grad_x(i, x, y);
        return g / num_clients();
    }
    virtual Vec grad_y_avg(const Vec& x, const Vec& y) const {
        Vec g = Vec::Zero(dim_y());
        for (int i = 0; i < num_clients(); ++i) g += grad_y(i, x, y);
        return g / num_clients();
    }

protected:
    void check_dims(int client, const Vec& x, const Vec& y) const {
        require(client >= 0 && client < num_clients(),
                "objective: client index " + std::to_string(client) + " out of range");
        require(x.size() == dim_x() && y.size() == dim_y(), "objective: dimension mismatch");
    }
    void check_batch(int client, std::span<const int> batch) const {
        require(!batch.empty(), "objective: empty batch");
        const auto& own = client_samples().at(static_cast<std::size_t>(client));
        for (int s : batch)
            require(std::binary_search(own.begin(), own.end(), s),
                    "objective: batch sample " + std::to_string(s) + " not owned by client " +
                        std::to_string(client));
    }
};

// ---------------------------------------------------------------------------
// Robust logistic regression (distributionally weighted, nonconvex regularizer)
// ---------------------------------------------------------------------------

/// f_i(x, y) = (1/m) sum_{j in S_i} y_j * l_j(x) - V(y) + g(x) with
///   l_j(x) = log(1 + exp(b_j a_j^T x))      (the sign is used verbatim;
///            minimizing this loss drives b_j a_j^T x down, so the induced
///            prediction rule is sign(-a^T x))
///   V(y)   = (1/(2 N^2)) ||N y - 1||^2
///   g(x)   = theta * sum_k nu x_k^2 / (1 + nu x_k^2)
/// Sample weights y are indexed globally (y in R^N); V couples every
/// coordinate, so each client's y-gradient is dense. Client sample sets may
/// overlap (all clients owning all samples models homogeneous data).
class RobustLogRegObjective final : public Objective {
public:
    RobustLogRegObjective(const Dataset& ds, const Partition& part, double theta = 1e-5,
                          double nu = 10.0)
        : theta_(theta), nu_(nu) {
        build(ds, part.client_samples(), part.m);
    }

    /// Direct construction from explicit (possibly overlapping) client sample
    /// lists over `keep` rows of the dataset.
    RobustLogRegObjective(const Dataset& ds, std::vector<std::vector<int>> client_lists,
                          double theta = 1e-5, double nu = 10.0)
        : theta_(theta), nu_(nu) {
        std::size_t m = client_lists.at(0).size();
        for (const auto& lst : client_lists)
            require(lst.size() == m, "robust_logreg: clients must own equally many samples");
        build(ds, std::move(client_lists), static_cast<int>(m));
    }

    int dim_x() const override { return d_; }
    int dim_y() const override { return n_total_; }
    int num_clients() const override { return static_cast<int>(clients_.size()); }
    int samples_per_client() const override { return m_; }
    const std::vector<std::vector<int>>& client_samples() const override { return clients_; }
    const YConstraint& y_constraint() const override { return constraint_; }

    double theta() const { return theta_; }
    double nu() const { return nu_; }
    double label(int sample) const { return labels_[static_cast<std::size_t>(sample)]; }

    double margin(const Vec& x, int sample) const {
        double s = 0.0;
        for (const auto& [idx, val] : features_[static_cast<std::size_t>(sample)]) s += val * x[idx];
        return labels_[static_cast<std::size_t>(sample)] * s;
    }

    double sample_loss(const Vec& x, int sample) const { return softplus(margin(x, sample)); }

    double reg_value(const Vec& x) const {
        double g = 0.0;
        for (int k = 0; k < d_; ++k) {
            const double xk2 = x[k] * x[k];
            g += nu_ * xk2 / (1.0 + nu_ * xk2);
        }
        return theta_ * g;
    }

    Vec reg_grad(const Vec& x) const {
        Vec g(d_);
        for (int k = 0; k < d_; ++k) {
            const double den = 1.0 + nu_ * x[k] * x[k];
            g[k] = theta_ * 2.0 * nu_ * x[k] / (den * den);
        }
        return g;
    }

    double v_value(const Vec& y) const {
        const double n = static_cast<double>(n_total_);
        return (n * y - Vec::Ones(n_total_)).squaredNorm() / (2.0 * n * n);
    }

    Vec v_grad(const Vec& y) const { return y.array() - 1.0 / n_total_; }

    double value(int client, const Vec& x, const Vec& y) const override {
        check_dims(client, x, y);
        double s = 0.0;
        for (int j : clients_[static_cast<std::size_t>(client)]) s += y[j] * sample_loss(x, j);
        return s / m_ - v_value(y) + reg_value(x);
    }

    Vec grad_x(int client, const Vec& x, const Vec& y) const override {
        check_dims(client, x, y);
        return weighted_loss_grad(clients_[static_cast<std::size_t>(client)], 1.0 / m_, x, y) +
               reg_grad(x);
    }

    Vec grad_y(int client, const Vec& x, const Vec& y) const override {
        check_dims(client, x, y);
        Vec g = -v_grad(y);
        for (int j : clients_[static_cast<std::size_t>(client)]) g[j] += sample_loss(x, j) / m_;
        return g;
    }

    Vec grad_x_batch(int client, const Vec& x, const Vec& y,
                     std::span<const int> batch) const override {
        check_dims(client, x, y);
        check_batch(client, batch);
        return weighted_loss_grad(batch, 1.0 / static_cast<double>(batch.size()), x, y) +
               reg_grad(x);
    }

    Vec grad_y_batch(int client, const Vec& x, const Vec& y,
                     std::span<const int> batch) const override {
        check_dims(client, x, y);
        check_batch(client, batch);
        Vec g = -v_grad(y);
        const double b = static_cast<double>(batch.size());
        for (int j : batch) g[j] += sample_loss(x, j) / b;
        return g;
    }

    double value_avg(const Vec& x, const Vec& y) const override {
        double s = 0.0;
        for (int j = 0; j < n_total_; ++j)
            if (avg_weight_[static_cast<std::size_t>(j)] != 0.0)
                s += avg_weight_[static_cast<std::size_t>(j)] * y[j] * sample_loss(x, j);
        return s - v_value(y) + reg_value(x);
    }

    Vec grad_x_avg(const Vec& x, const Vec& y) const override {
        Vec g = reg_grad(x);
        for (int j = 0; j < n_total_; ++j) {
            const double w = avg_weight_[static_cast<std::size_t>(j)];
            if (w == 0.0) continue;
            const double coef = w * y[j] * labels_[static_cast<std::size_t>(j)] *
                                sigmoid(margin(x, j));
            for (const auto& [idx, val] : features_[static_cast<std::size_t>(j)])
                g[idx] += coef * val;
        }
        return g;
    }

    Vec grad_y_avg(const Vec& x, const Vec& y) const override {
        Vec g = -v_grad(y);
        for (int j = 0; j < n_total_; ++j) {
            const double w = avg_weight_[static_cast<std::size_t>(j)];
            if (w != 0.0) g[j] += w * sample_loss(x, j);
        }
        return g;
    }

private:
    Vec weighted_loss_grad(std::span<const int> ids, double scale, const Vec& x,
                           const Vec& y) const {
        Vec g = Vec::Zero(d_);
        for (int j : ids) {
            const double coef =
                scale * y[j] * labels_[static_cast<std::size_t>(j)] * sigmoid(margin(x, j));
            for (const auto& [idx, val] : features_[static_cast<std::size_t>(j)])
                g[idx] += coef * val;
        }
        return g;
    }

    void build(const Dataset& ds, std::vector<std::vector<int>> client_lists, int m) {
        require(!client_lists.empty() && m >= 1, "robust_logreg: empty partition");
        // Kept samples are re-indexed compactly; y-coordinate j corresponds to
        // kept sample j and N = (#kept) defines the simplex dimension.
        std::vector<int> kept;
        std::vector<int> compact(ds.size(), -1);
        for (const auto& lst : client_lists)
            for (int s : lst) {
                require(s >= 0 && static_cast<std::size_t>(s) < ds.size(),
                        "robust_logreg: sample id out of range");
                if (compact[static_cast<std::size_t>(s)] < 0) {
                    compact[static_cast<std::size_t>(s)] = static_cast<int>(kept.size());
                    kept.push_back(s);
                }
            }
        n_total_ = static_cast<int>(kept.size());
        d_ = ds.d;
        m_ = m;
        features_.resize(kept.size());
        labels_.resize(kept.size());
        for (std::size_t j = 0; j < kept.size(); ++j) {
            const auto& s = ds.samples[static_cast<std::size_t>(kept[j])];
            features_[j] = s.features;
            labels_[j] = s.label;
        }
        clients_.resize(client_lists.size());
        for (std::size_t c = 0; c < client_lists.size(); ++c) {
            clients_[c].reserve(client_lists[c].size());
            for (int s : client_lists[c]) clients_[c].push_back(compact[static_cast<std::size_t>(s)]);
            std::sort(clients_[c].begin(), clients_[c].end());
        }
        avg_weight_.assign(static_cast<std::size_t>(n_total_), 0.0);
        const double inv_nm = 1.0 / (static_cast<double>(clients_.size()) * m_);
        for (const auto& lst : clients_)
            for (int j : lst) avg_weight_[static_cast<std::size_t>(j)] += inv_nm;
        constraint_.kind = YConstraintKind::simplex;
    }

    std::vector<std::vector<std::pair<int, double>>> features_;
    std::vector<double> labels_;
    std::vector<std::vector<int>> clients_;
    std::vector<double> avg_weight_;  // (1/n) sum_i [j in S_i]/m
    int d_ = 0;
    int n_total_ = 0;
    int m_ = 0;
    double theta_;
    double nu_;
    YConstraint constraint_;
};

// ---------------------------------------------------------------------------
// Saddle quadratic (closed-form-checkable verification instance)
// ---------------------------------------------------------------------------

/// f_i(x, y) = 1/2 x^T A_i x + x^T B_i y - mu/2 ||y||^2 + u_i^T x + v_i^T y.
/// mu-strongly concave in y by construction; A_i may be indefinite.
class QuadraticObjective final : public Objective {
public:
    QuadraticObjective(std::vector<Mat> a, std::vector<Mat> b, std::vector<Vec> u,
                       std::vector<Vec> v, double mu)
        : a_(std::move(a)), b_(std::move(b)), u_(std::move(u)), v_(std::move(v)), mu_(mu) {
        require(mu_ > 0.0, "quadratic: mu must be positive");
        const std::size_t n = a_.size();
        require(n >= 1 && b_.size() == n && u_.size() == n && v_.size() == n,
                "quadratic: per-client arrays must have equal length");
        d_ = static_cast<int>(a_[0].rows());
        q_ = static_cast<int>(b_[0].cols());
        for (std::size_t i = 0; i < n; ++i) {
            require(a_[i].rows() == d_ && a_[i].cols() == d_, "quadratic: A_i must be d x d");
            require((a_[i] - a_[i].transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                    "quadratic: A_i must be symmetric");
            require(b_[i].rows() == d_ && b_[i].cols() == q_, "quadratic: B_i must be d x q");
            require(u_[i].size() == d_ && v_[i].size() == q_, "quadratic: u_i/v_i size mismatch");
        }
        dummy_samples_.assign(n, {0});
    }

    int dim_x() const override { return d_; }
    int dim_y() const override { return q_; }
    int num_clients() const override { return static_cast<int>(a_.size()); }
    int samples_per_client() const override { return 1; }
    const std::vector<std::vector<int>>& client_samples() const override { return dummy_samples_; }
    const YConstraint& y_constraint() const override { return constraint_; }

    double mu() const { return mu_; }
    Mat a_bar() const { return average(a_); }
    Mat b_bar() const { return average(b_); }
    Vec u_bar() const { return average(u_); }
    Vec v_bar() const { return average(v_); }

    double value(int client, const Vec& x, const Vec& y) const override {
        check_dims(client, x, y);
        const auto c = static_cast<std::size_t>(client);
        return 0.5 * x.dot(a_[c] * x) + x.dot(b_[c] * y) - 0.5 * mu_ * y.squaredNorm() +
               u_[c].dot(x) + v_[c].dot(y);
    }

    Vec grad_x(int client, const Vec& x, const Vec& y) const override {
        check_dims(client, x, y);
        const auto c = static_cast<std::size_t>(client);
        return a_[c] * x + b_[c] * y + u_[c];
    }

    Vec grad_y(int client, const Vec& x, const Vec& y) const override {
        check_dims(client, x, y);
        const auto c = static_cast<std::size_t>(client);
        return b_[c].transpose() * x - mu_ * y + v_[c];
    }

    // No data dependence: any batch reproduces the full gradient.
    Vec grad_x_batch(int client, const Vec& x, const Vec& y,
                     std::span<const int> batch) const override {
        check_batch(client, batch);
        return grad_x(client, x, y);
    }
    Vec grad_y_batch(int client, const Vec& x, const Vec& y,
                     std::span<const int> batch) const override {
        check_batch(client, batch);
        return grad_y(client, x, y);
    }

    /// Spectral norm of the (constant) per-client Hessian; the smoothness
    /// constant of f_i.
    double smoothness(int client) const {
        const auto c = static_cast<std::size_t>(client);
        Mat h(d_ + q_, d_ + q_);
        h.topLeftCorner(d_, d_) = a_[c];
        h.topRightCorner(d_, q_) = b_[c];
        h.bottomLeftCorner(q_, d_) = b_[c].transpose();
        h.bottomRightCorner(q_, q_) = -mu_ * Mat::Identity(q_, q_);
        Eigen::SelfAdjointEigenSolver<Mat> es(h);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }

    double smoothness() const {
        double ell = 0.0;
        for (int i = 0; i < num_clients(); ++i) ell = std::max(ell, smoothness(i));
        return ell;
    }

private:
    template <typename T>
    T average(const std::vector<T>& xs) const {
        T s = xs[0];
        for (std::size_t i = 1; i < xs.size(); ++i) s += xs[i];
        return s / static_cast<double>(xs.size());
    }

    std::vector<Mat> a_;
    std::vector<Mat> b_;
    std::vector<Vec> u_;
    std::vector<Vec> v_;
    double mu_;
    int d_ = 0;
    int q_ = 0;
    std::vector<std::vector<int>> dummy_samples_;
    YConstraint constraint_;  // unconstrained
};

struct SaddlePoint {
    Vec x_star;
    Vec y_star;
};

/// Closed-form saddle of the client-averaged quadratic:
///   y*(x) = (Bbar^T x + vbar)/mu,
///   x*    solves (Abar + Bbar Bbar^T / mu) x = -(ubar + Bbar vbar / mu).
inline SaddlePoint saddle_solution(const QuadraticObjective& obj) {
    const Mat a = obj.a_bar();
    const Mat b = obj.b_bar();
    const Vec u = obj.u_bar();
    const Vec v = obj.v_bar();
    const double mu = obj.mu();

    const Mat lhs = a + b * b.transpose() / mu;
    const Vec rhs = -(u + b * v / mu);

    Eigen::JacobiSVD<Mat> svd(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    require(smin > 0.0 && smax / smin <= 1e12,
            "saddle_solution: system is singular or ill-conditioned");

    SaddlePoint sp;
    sp.x_star = lhs.colPivHouseholderQr().solve(rhs);
    require((lhs * sp.x_star - rhs).norm() <= 1e-10 * std::max(1.0, rhs.norm()),
            "saddle_solution: linear solve residual too large");
    sp.y_star = (b.transpose() * sp.x_star + v) / mu;
    return sp;
}

/// Analytic primal gradient of the averaged quadratic via Danskin:
/// grad Phi(x) = (Abar + Bbar Bbar^T/mu) x + ubar + Bbar vbar/mu.
inline Vec quadratic_grad_phi(const QuadraticObjective& obj, const Vec& x) {
    const Mat b = obj.b_bar();
    return obj.a_bar() * x + b * (b.transpose() * x + obj.v_bar()) / obj.mu() + obj.u_bar();
}

/// Seeded random verification instance. Per-client blocks are a shared
/// well-conditioned average plus zero-mean symmetric perturbations of size
/// `heterogeneity`, so the averaged problem stays benign (Abar SPD) while the
/// clients disagree (and individual A_i may go indefinite).
inline std::shared_ptr<QuadraticObjective> make_random_quadratic(int d, int q, int n, double mu,
                                                                 std::uint64_t seed,
                                                                 double heterogeneity = 0.25) {
    require(d >= 1 && q >= 1 && n >= 1, "make_random_quadratic: bad dimensions");
    StreamRng rng(StreamRng::key_of(seed, 0x9d4aULL));
    auto unit = [&rng]() { return 2.0 * rng.next_unit() - 1.0; };

    Mat g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = unit();
    const Eigen::HouseholderQR<Mat> qr(g);
    const Mat orth = qr.householderQ();
    Vec eigs(d);
    for (int i = 0; i < d; ++i) eigs[i] = 0.35 + 0.5 * rng.next_unit();
    const Mat a_bar = orth * eigs.asDiagonal() * orth.transpose();

    Mat b_bar(d, q);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < q; ++j) b_bar(i, j) = 0.3 * unit() / std::sqrt(static_cast<double>(d));
    Vec u_bar(d), v_bar(q);
    for (int i = 0; i < d; ++i) u_bar[i] = 0.5 * unit();
    for (int j = 0; j < q; ++j) v_bar[j] = 0.5 * unit();

    auto sym_noise = [&](double scale) {
        Mat s(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = scale * unit();
        return s;
    };
    std::vector<Mat> sa(static_cast<std::size_t>(n));
    std::vector<Mat> sb(static_cast<std::size_t>(n));
    std::vector<Vec> su(static_cast<std::size_t>(n));
    std::vector<Vec> sv(static_cast<std::size_t>(n));
    Mat sa_mean = Mat::Zero(d, d);
    Mat sb_mean = Mat::Zero(d, q);
    Vec su_mean = Vec::Zero(d);
    Vec sv_mean = Vec::Zero(q);
    for (int i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(i);
        sa[c] = sym_noise(heterogeneity / d);
        sb[c] = Mat(d, q);
        for (int r = 0; r < d; ++r)
            for (int j = 0; j < q; ++j) sb[c](r, j) = heterogeneity * unit() / d;
        su[c] = Vec(d);
        sv[c] = Vec(q);
        for (int r = 0; r < d; ++r) su[c][r] = heterogeneity * unit();
        for (int j = 0; j < q; ++j) sv[c][j] = heterogeneity * unit();
        sa_mean += sa[c];
        sb_mean += sb[c];
        su_mean += su[c];
        sv_mean += sv[c];
    }
    sa_mean /= n;
    sb_mean /= n;
    su_mean /= n;
    sv_mean /= n;

    std::vector<Mat> a(static_cast<std::size_t>(n));
    std::vector<Mat> b(static_cast<std::size_t>(n));
    std::vector<Vec> u(static_cast<std::size_t>(n));
    std::vector<Vec> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(i);
        a[c] = a_bar + (sa[c] - sa_mean);
        b[c] = b_bar + (sb[c] - sb_mean);
        u[c] = u_bar + (su[c] - su_mean);
        v[c] = v_bar + (sv[c] - sv_mean);
    }
    return std::make_shared<QuadraticObjective>(std::move(a), std::move(b), std::move(u),
                                                std::move(v), mu);
}

}  // namespace dectrack
