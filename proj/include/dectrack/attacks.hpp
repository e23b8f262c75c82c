#pragma once

#include "dectrack/common.hpp"
#include "dectrack/data.hpp"
#include "dectrack/objectives.hpp"
#include "dectrack/rng.hpp"

#include <string>
#include <vector>

namespace dectrack {

enum class AttackKind { fgsm, pgd, uap };

struct AttackConfig {
    AttackKind kind = AttackKind::fgsm;
    double delta = 0.0;  // L-infinity budget
    int steps = 10;      // pgd/uap iteration count
    double eta = 0.0;    // attack step size; <= 0 picks delta/4 (pgd) or delta (uap)
    int batch = 128;     // uap mini-batch
    std::uint64_t seed = 0;
};

/// Per-sample loss of the linear model, matching the training objective:
/// l(x; a, b) = log(1 + exp(b a^T x)).
inline double sample_loss(const Vec& model_x, const Vec& a, double b) {
    require(model_x.size() == a.size(), "sample_loss: dimension mismatch");
    return softplus(b * a.dot(model_x));
}

/// Gradient of the loss with respect to the input: b x sigmoid(b a^T x).
inline Vec input_gradient(const Vec& model_x, const Vec& a, double b) {
    require(model_x.size() == a.size(), "input_gradient: dimension mismatch");
    require(model_x.allFinite() && a.allFinite(), "input_gradient: non-finite input");
    return (b * sigmoid(b * a.dot(model_x))) * model_x;
}

/// One signed full-budget step: a' = a + delta * sign(grad_a loss), with
/// sign(0) = 0.
inline Vec fgsm(const Vec& model_x, const Vec& a, double b, double delta) {
    require(delta >= 0.0, "fgsm: negative budget");
    const Vec g = input_gradient(model_x, a, b);
    return a + delta * g.unaryExpr([](double v) { return sign0(v); });
}

/// Iterated signed ascent, each step clamped back into the L-infinity ball of
/// radius delta around the clean input. steps = 1 with eta = delta reproduces
/// fgsm bitwise.
inline Vec pgd(const Vec& model_x, const Vec& a, double b, double delta, int steps, double eta) {
    require(delta >= 0.0, "pgd: negative budget");
    require(steps >= 1, "pgd: steps must be >= 1");
    // The perturbation is tracked separately so the ball projection is exact
    // in floating point (and one full-budget step reproduces fgsm bitwise).
    Vec pert = Vec::Zero(a.size());
    for (int t = 0; t < steps; ++t) {
        const Vec g = input_gradient(model_x, a + pert, b);
        pert += eta * g.unaryExpr([](double v) { return sign0(v); });
        pert = project_linf_ball(pert, delta);
    }
    return a + pert;
}

/// Universal perturbation by stochastic projected gradient ascent: batches of
/// input gradients at the shifted samples, ascent on the shared perturbation,
/// projection onto the L-infinity ball after every step.
inline Vec uap_spgd(const Vec& model_x, const Dataset& data, double delta, int steps, double eta,
                    int batch, std::uint64_t seed) {
    require(!data.samples.empty(), "uap_spgd: empty dataset");
    require(delta >= 0.0, "uap_spgd: negative budget");
    require(steps >= 1 && batch >= 1, "uap_spgd: steps and batch must be >= 1");

    Vec y = Vec::Zero(data.d);
    StreamRng rng(StreamRng::key_of(seed, 0x0a11ULL));
    for (int t = 0; t < steps; ++t) {
        Vec g = Vec::Zero(data.d);
        for (int s = 0; s < batch; ++s) {
            const int idx = static_cast<int>(rng.next_below(data.size()));
            const Vec a = data.to_dense(idx);
            g += input_gradient(model_x, a + y, data.samples[static_cast<std::size_t>(idx)].label);
        }
        y += (eta / batch) * g;
        y = project_linf_ball(y, delta);
    }
    return y;
}

struct AttackRow {
    std::string attack;
    double delta = 0.0;
    double clean_acc = 0.0;
    double adv_acc = 0.0;
    double mean_adv_loss = 0.0;
};

/// Evaluate one attack over a whole dataset: accuracy under the perturbed
/// inputs (prediction rule sign(-a^T x), ties incorrect) and mean adversarial
/// loss.
inline AttackRow evaluate_attack(const Vec& model_x, const Dataset& data,
                                 const AttackConfig& cfg) {
    require(!data.samples.empty(), "evaluate_attack: empty dataset");
    AttackRow row;
    row.delta = cfg.delta;

    Vec uap;
    if (cfg.kind == AttackKind::uap) {
        const double eta = cfg.eta > 0.0 ? cfg.eta : cfg.delta;
        uap = cfg.delta == 0.0 ? Vec::Zero(data.d)
                               : uap_spgd(model_x, data, cfg.delta, cfg.steps, eta, cfg.batch,
                                          cfg.seed);
        row.attack = "uap";
    } else {
        row.attack = cfg.kind == AttackKind::fgsm ? "fgsm" : "pgd";
    }

    std::size_t clean_correct = 0, adv_correct = 0;
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const double b = data.samples[s].label;
        const Vec a = data.to_dense(static_cast<int>(s));
        Vec adv;
        switch (cfg.kind) {
            case AttackKind::fgsm: adv = fgsm(model_x, a, b, cfg.delta); break;
            case AttackKind::pgd: {
                const double eta = cfg.eta > 0.0 ? cfg.eta : cfg.delta / 4.0;
                adv = pgd(model_x, a, b, cfg.delta, cfg.steps, eta);
                break;
            }
            case AttackKind::uap: adv = a + uap; break;
        }
        if (b * a.dot(model_x) < 0.0) ++clean_correct;
        if (b * adv.dot(model_x) < 0.0) ++adv_correct;
        loss_sum += sample_loss(model_x, adv, b);
    }
    const double n = static_cast<double>(data.size());
    row.clean_acc = static_cast<double>(clean_correct) / n;
    row.adv_acc = static_cast<double>(adv_correct) / n;
    row.mean_adv_loss = loss_sum / n;
    return row;
}

}  // namespace dectrack
