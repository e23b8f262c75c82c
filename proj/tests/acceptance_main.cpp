// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code next to each check.
#include "dectrack/experiment.hpp"

#include "oracles.hpp"
#include "synth_data.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

using namespace dectrack;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return xs[xs.size() / 2];
}

const std::filesystem::path& scratch() {
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() / "dectrack_acceptance";
        std::filesystem::remove_all(d);
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

// The shared benchmark fixture: a 2,000-sample binary-feature training set in
// the a9a shape plus a 1,000-sample test set, written in LIBSVM format and
// parsed back through the production parser.
const Dataset& train_set() {
    static const Dataset ds = [] {
        const Dataset raw = synth::make_a9a_like(2000, 1001);
        const auto path = scratch() / "train.libsvm";
        synth::write_libsvm(raw, path);
        return parse_libsvm(path.string(), 123);
    }();
    return ds;
}

const Dataset& test_set() {
    static const Dataset ds = [] {
        const Dataset raw = synth::make_a9a_like(1000, 2002);
        const auto path = scratch() / "test.libsvm";
        synth::write_libsvm(raw, path);
        return parse_libsvm(path.string(), 123);
    }();
    return ds;
}

// Criterion 1 and criterion 9 share this experiment configuration.
json benchmark_config(const std::string& out_name) {
    json j;
    j["seed"] = 1;
    j["output"] = (scratch() / out_name).string();
    j["dataset"] = {{"path", (scratch() / "train.libsvm").string()},
                    {"test_path", (scratch() / "test.libsvm").string()},
                    {"d_override", 123}};
    j["partition"] = {{"mode", "iid_shuffle"}, {"seed", 1}};
    j["topology"] = {{"kind", "ring_lazy"}, {"n", 10}, {"pi", 0.5}};
    j["objective"] = {{"kind", "robust_logreg"}};
    j["algorithm"] = {{"algo", "dec_fedtrack"}, {"K", 5},       {"T", 50},     {"b_x", 64},
                      {"b_y", 64},              {"eta_c", 200.0}, {"eta_d", 1.0}};
    j["metrics"] = {{"every", 1}};
    return j;
}

// --- 1. Averaged corrections stay exactly zero over the whole run ----------
Outcome criterion1() {
    train_set();  // materialize both fixture files before the clock starts
    test_set();
    const auto start = Clock::now();
    const Experiment exp = assemble(parse_config(benchmark_config("c1")));
    BatchSampler sampler(exp.cfg.seed, exp.hp.b_x, exp.hp.b_y, exp.objective->client_samples());

    double worst = 0.0;
    run(*exp.objective, exp.w, exp.hp, sampler,
        [&](const NetworkState& st, double, double) {
            worst = std::max(worst, st.C.rowwise().mean().cwiseAbs().maxCoeff());
            worst = std::max(worst, st.D.rowwise().mean().cwiseAbs().maxCoeff());
            return 0;
        });
    const double elapsed = seconds_since(start);

    std::ostringstream detail;
    detail << "max |mean correction| = " << worst << " (tol 1e-8), " << elapsed << " s";
    return {worst <= 1e-8 && elapsed < 60.0, detail.str()};
}

// --- 2. Theorem-mode convergence on the closed-form quadratic --------------
Outcome criterion2() {
    const auto start = Clock::now();
    auto obj = make_random_quadratic(10, 5, 8, 1.0, 42, 0.25);
    const double ell = obj->smoothness();
    const double kappa = ell / 1.0;
    if (kappa > 10.0) return {false, "instance condition number exceeds 10"};

    const auto w = build_ring_lazy_walk(8, 0.5);
    StepSizePlan plan;
    plan.kappa = kappa;
    plan.ell = ell;
    plan.mu = 1.0;
    plan.p = w.p_est;
    HyperParams hp = derive_step_sizes(plan, 4);
    hp.T = 5000;
    BatchSampler sampler(1, 0, 0, obj->client_samples());

    double best = std::numeric_limits<double>::infinity();
    long best_round = -1;
    run(*obj, w, hp, sampler, [&](const NetworkState& st, double, double) {
        const double g = quadratic_grad_phi(*obj, st.X.rowwise().mean()).norm();
        if (g < best) {
            best = g;
            best_round = st.round;
        }
        return 0;
    });
    const double elapsed = seconds_since(start);

    std::ostringstream detail;
    detail << "kappa = " << kappa << ", min |grad Phi| = " << best << " at round " << best_round
           << " (tol 1e-3 within 5000), " << elapsed << " s";
    return {best <= 1e-3 && elapsed < 120.0, detail.str()};
}

// --- 3. Every analytic gradient matches central finite differences ---------
Outcome criterion3() {
    const Dataset& ds = train_set();
    std::vector<int> head(64);
    std::iota(head.begin(), head.end(), 0);
    Dataset small;
    small.d = ds.d;
    for (int s : head) small.samples.push_back(ds.samples[static_cast<std::size_t>(s)]);
    const Partition part = partition(small, 2, PartitionMode::iid_shuffle, 3);
    RobustLogRegObjective logreg(small, part);
    auto quad = make_random_quadratic(6, 4, 3, 0.8, 7, 0.3);

    std::mt19937_64 rng(11);
    double worst = 0.0;
    const auto track = [&worst](double err) { worst = std::max(worst, err); };

    for (int trial = 0; trial < 20; ++trial) {
        {
            const int client = trial % 2;
            const Vec x = 0.5 * oracles::gaussian_vector(logreg.dim_x(), rng);
            const Vec y = 0.5 * oracles::gaussian_vector(logreg.dim_y(), rng);
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return logreg.value(client, v, y); }, x),
                logreg.grad_x(client, x, y)));
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return logreg.value(client, x, v); }, y),
                logreg.grad_y(client, x, y)));
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return logreg.reg_value(v); }, x),
                logreg.reg_grad(x)));
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return logreg.v_value(v); }, y),
                logreg.v_grad(y)));
        }
        {
            const int client = trial % 3;
            const Vec x = oracles::gaussian_vector(6, rng);
            const Vec y = oracles::gaussian_vector(4, rng);
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return quad->value(client, v, y); }, x),
                quad->grad_x(client, x, y)));
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return quad->value(client, x, v); }, y),
                quad->grad_y(client, x, y)));
        }
        {
            const Vec model = oracles::gaussian_vector(9, rng);
            const Vec input = oracles::gaussian_vector(9, rng);
            const double label = trial % 2 == 0 ? 1.0 : -1.0;
            track(oracles::rel_err(
                oracles::fd_grad([&](const Vec& v) { return sample_loss(model, v, label); },
                                 input),
                input_gradient(model, input, label)));
        }
    }

    std::ostringstream detail;
    detail << "worst relative error = " << worst << " over 20 points x 7 gradient families"
           << " (tol 1e-5)";
    return {worst <= 1e-5, detail.str()};
}

// --- 4. Mixing contraction against the dense spectral oracle ---------------
Outcome criterion4() {
    std::mt19937_64 rng(13);
    double worst_gap = 0.0;
    double worst_slack = -std::numeric_limits<double>::infinity();
    for (int n : {4, 10, 50}) {
        const auto mm = build_ring_lazy_walk(n, 0.5);
        worst_gap = std::max(worst_gap, std::abs(mm.p_est - oracles::contraction_eig_oracle(mm.w)));
        const Mat j = Mat::Constant(n, n, 1.0 / n);
        for (int trial = 0; trial < 100; ++trial) {
            const Mat x = oracles::gaussian_matrix(8, n, rng);
            const Mat xbar = x * j;
            const double lhs = (x * mm.w - xbar).squaredNorm();
            const double rhs = (1.0 - mm.p_est) * (x - xbar).squaredNorm();
            worst_slack = std::max(worst_slack, lhs - rhs);
        }
    }
    std::ostringstream detail;
    detail << "max |p_est - oracle| = " << worst_gap << " (tol 1e-8), max inequality slack = "
           << worst_slack << " (tol 1e-9)";
    return {worst_gap <= 1e-8 && worst_slack <= 1e-9, detail.str()};
}

// --- 5. Simplex projection against the dual-bisection QP oracle ------------
Outcome criterion5() {
    std::mt19937_64 rng(17);
    double worst = 0.0;
    bool feasible = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec v = 3.0 * oracles::gaussian_vector(50, rng);
        const Vec got = project_simplex(v);
        worst = std::max(worst, (got - oracles::simplex_qp_oracle(v)).norm());
        feasible = feasible && got.minCoeff() >= 0.0 && got.maxCoeff() <= 1.0 + 1e-12 &&
                   std::abs(got.sum() - 1.0) <= 1e-12;
    }
    std::ostringstream detail;
    detail << "max distance to QP oracle = " << worst << " (tol 1e-9), feasibility "
           << (feasible ? "exact" : "VIOLATED");
    return {worst <= 1e-9 && feasible, detail.str()};
}

// --- 6. Gradient tracking beats the no-tracking ablation under label skew --
Outcome criterion6() {
    const auto start = Clock::now();
    const Dataset& ds = train_set();
    const auto w = build_ring_lazy_walk(10, 0.5);

    std::vector<double> ratios;
    double gt_drop = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Partition part = partition(ds, 10, PartitionMode::label_skew, seed, 1);
        RobustLogRegObjective obj(ds, part);
        HyperParams hp;
        hp.eta_c = 200.0;
        hp.eta_d = 1.0;
        hp.K = 5;
        hp.T = 200;
        BatchSampler sampler(seed, 0, 0, obj.client_samples());

        // warm-started primal oracles, one per run
        PrimalEvaluator pe_base(obj, 1e-8, 100000);
        PrimalEvaluator pe_gt(obj, 1e-8, 100000);
        const auto base_rows = run_baseline_no_gt(
            obj, w, hp, sampler, [&](const NetworkState& st, double, double) {
                return pe_base.inner_max(st.X.rowwise().mean()).phi;
            });
        const auto gt_rows = run(obj, w, hp, sampler,
                                 [&](const NetworkState& st, double, double) {
                                     return pe_gt.inner_max(st.X.rowwise().mean()).phi;
                                 });

        const double target = base_rows.back();
        long t_star = -1;
        for (std::size_t t = 0; t < gt_rows.size(); ++t)
            if (gt_rows[t] <= target) {
                t_star = static_cast<long>(t);
                break;
            }
        // SFO per round is identical for both algorithms, so the SFO ratio is
        // the round ratio
        ratios.push_back(t_star < 0 ? 2.0 : static_cast<double>(t_star) / hp.T);
        gt_drop = std::max(gt_drop, (gt_rows.front() - gt_rows.back()) / gt_rows.front());
    }
    const double med = median(ratios);
    const double elapsed = seconds_since(start);

    std::ostringstream detail;
    detail << "median SFO ratio = " << med << " (tol 0.70), max GT Phi drop = "
           << 100.0 * gt_drop << "%, " << elapsed << " s";
    return {med <= 0.70 && elapsed < 600.0, detail.str()};
}

// --- 7. Exact consensus under homogeneous data ------------------------------
Outcome criterion7() {
    Dataset small;
    small.d = train_set().d;
    for (int s = 0; s < 300; ++s) small.samples.push_back(train_set().samples[static_cast<std::size_t>(s)]);
    std::vector<int> all(small.size());
    std::iota(all.begin(), all.end(), 0);
    RobustLogRegObjective obj(small, std::vector<std::vector<int>>(10, all));

    HyperParams hp;
    hp.eta_c = 200.0;
    hp.eta_d = 1.0;
    hp.K = 5;
    hp.T = 100;
    BatchSampler sampler(1, 0, 0, obj.client_samples());

    double worst = 0.0;
    for (const auto& w : {build_ring_lazy_walk(10, 0.5), build_complete(10)}) {
        run(obj, w, hp, sampler, [&](const NetworkState& st, double, double) {
            for (int i = 0; i < st.n(); ++i)
                for (int j = i + 1; j < st.n(); ++j) {
                    worst = std::max(worst,
                                     (st.X.col(i) - st.X.col(j)).cwiseAbs().maxCoeff());
                    worst = std::max(worst,
                                     (st.Y.col(i) - st.Y.col(j)).cwiseAbs().maxCoeff());
                }
            return 0;
        });
    }
    std::ostringstream detail;
    detail << "max pairwise node deviation = " << worst << " over 100 rounds on ring and "
           << "complete graphs (tol 1e-10)";
    return {worst <= 1e-10, detail.str()};
}

// --- 8. Attack sanity: monotone harm, PGD at least as strong as FGSM -------
Outcome criterion8() {
    const std::vector<double> grid{0.0, 0.05, 0.10, 0.15};
    std::map<std::string, std::vector<std::vector<double>>> acc;  // kind -> per-seed grid accs

    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Partition part = partition(train_set(), 10, PartitionMode::iid_shuffle, seed);
        RobustLogRegObjective obj(train_set(), part);
        HyperParams hp;
        hp.eta_c = 200.0;
        hp.eta_d = 1.0;
        hp.K = 5;
        hp.T = 200;
        BatchSampler sampler(seed, 0, 0, obj.client_samples());
        Vec model;
        run(*static_cast<Objective*>(&obj), build_ring_lazy_walk(10, 0.5), hp, sampler,
            [&](const NetworkState& st, double, double) {
                model = st.X.rowwise().mean();
                return 0;
            },
            hp.T);

        for (const auto& kind : {AttackKind::fgsm, AttackKind::pgd, AttackKind::uap}) {
            std::vector<double> accs;
            for (double delta : grid) {
                AttackConfig cfg;
                cfg.kind = kind;
                cfg.delta = delta;
                cfg.steps = kind == AttackKind::uap ? 50 : 10;
                cfg.seed = seed;
                accs.push_back(evaluate_attack(model, test_set(), cfg).adv_acc);
            }
            const char* name = kind == AttackKind::fgsm ? "fgsm"
                               : kind == AttackKind::pgd ? "pgd"
                                                         : "uap";
            acc[name].push_back(accs);
        }
    }

    // median over seeds per (kind, delta)
    std::map<std::string, std::vector<double>> med;
    for (const auto& [kind, per_seed] : acc)
        for (std::size_t d = 0; d < grid.size(); ++d) {
            std::vector<double> xs;
            for (const auto& run_accs : per_seed) xs.push_back(run_accs[d]);
            med[kind].push_back(median(xs));
        }

    bool monotone = true;
    for (const auto& [kind, accs] : med)
        for (std::size_t d = 1; d < accs.size(); ++d)
            monotone = monotone && accs[d] <= accs[d - 1] + 1e-12;

    int pgd_wins = 0;
    for (std::size_t d = 1; d < grid.size(); ++d)
        if (med["pgd"][d] <= med["fgsm"][d] + 1e-12) ++pgd_wins;

    std::ostringstream detail;
    detail << "median adv. accuracy fgsm=(";
    for (double a : med["fgsm"]) detail << ' ' << a;
    detail << " ) pgd=(";
    for (double a : med["pgd"]) detail << ' ' << a;
    detail << " ) uap=(";
    for (double a : med["uap"]) detail << ' ' << a;
    detail << " ), monotone = " << (monotone ? "yes" : "NO") << ", pgd<=fgsm on " << pgd_wins
           << "/3 budgets";
    return {monotone && pgd_wins >= 2, detail.str()};
}

// --- 9. Bitwise determinism of the benchmark config -------------------------
Outcome criterion9() {
    const json cfg_a = benchmark_config("c9_a");
    const json cfg_b = benchmark_config("c9_b");
    const auto path_a = scratch() / "c9_a.json";
    const auto path_b = scratch() / "c9_b.json";
    {
        std::ofstream(path_a) << cfg_a.dump(2);
        std::ofstream(path_b) << cfg_b.dump(2);
    }
    if (cmd_train(path_a.string()) != 0) return {false, "first run failed"};
    if (cmd_train(path_b.string()) != 0) return {false, "second run failed"};

    const auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(scratch() / "c9_a" / "metrics.csv");
    const std::string b = slurp(scratch() / "c9_b" / "metrics.csv");
    std::ostringstream detail;
    detail << "metrics.csv runs: " << a.size() << " bytes, identical = "
           << (a == b && !a.empty() ? "yes" : "NO");
    return {!a.empty() && a == b, detail.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"zero-mean correction conservation", criterion1},
        {"theorem-mode convergence on the quadratic", criterion2},
        {"analytic gradients vs finite differences", criterion3},
        {"mixing contraction vs spectral oracle", criterion4},
        {"simplex projection vs QP oracle", criterion5},
        {"gradient tracking beats no-GT under label skew", criterion6},
        {"homogeneous-data consensus", criterion7},
        {"attack monotonicity and PGD strength", criterion8},
        {"bitwise deterministic reruns", criterion9},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        if (!outcome.pass) ++failures;
        std::printf("criterion %zu [%s] %s: %s\n", i + 1, outcome.pass ? "PASS" : "FAIL",
                    criteria[i].first.c_str(), outcome.detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
