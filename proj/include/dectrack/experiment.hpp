#pragma once

#include "dectrack/attacks.hpp"
#include "dectrack/config.hpp"
#include "dectrack/core.hpp"
#include "dectrack/data.hpp"
#include "dectrack/metrics.hpp"
#include "dectrack/objectives.hpp"
#include "dectrack/topology.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

namespace dectrack {

inline MixingMatrix build_topology(const TopologyConfig& cfg) {
    if (cfg.kind == "ring_lazy") return build_ring_lazy_walk(cfg.n, cfg.pi);
    if (cfg.kind == "complete") return build_complete(cfg.n);
    if (cfg.kind == "identity") return build_identity(cfg.n);
    if (cfg.kind == "matrix_file") return load_matrix_file(cfg.path);
    throw ConfigError("config: key 'topology.kind' has unknown value '" + cfg.kind + "'");
}

/// Everything a run needs, assembled from one config.
struct Experiment {
    ExperimentConfig cfg;
    MixingMatrix w;
    std::shared_ptr<Objective> objective;
    HyperParams hp;
    std::optional<Dataset> test_set;
};

inline Experiment assemble(const ExperimentConfig& cfg) {
    Experiment exp;
    exp.cfg = cfg;
    exp.w = build_topology(cfg.topology);

    if (cfg.objective.kind == "robust_logreg") {
        std::optional<int> d_override;
        if (cfg.dataset.d_override > 0) d_override = cfg.dataset.d_override;
        const Dataset ds = parse_libsvm(cfg.dataset.path, d_override);
        const PartitionMode mode = cfg.partition.mode == "iid_shuffle"
                                       ? PartitionMode::iid_shuffle
                                       : PartitionMode::label_skew;
        const Partition part =
            partition(ds, exp.w.n, mode, cfg.partition.seed, cfg.partition.shards_per_client);
        exp.objective = std::make_shared<RobustLogRegObjective>(ds, part, cfg.objective.theta,
                                                                cfg.objective.nu);
        if (!cfg.dataset.test_path.empty()) {
            std::optional<int> test_d = d_override;
            if (!test_d) test_d = ds.d;  // train file fixes the dimension
            exp.test_set = parse_libsvm(cfg.dataset.test_path, test_d);
        }
    } else {
        exp.objective =
            make_random_quadratic(cfg.objective.d, cfg.objective.q, exp.w.n, cfg.objective.mu,
                                  cfg.objective.seed, cfg.objective.heterogeneity);
    }

    if (cfg.algorithm.auto_from_theorem) {
        StepSizePlan plan;
        plan.kappa = cfg.algorithm.kappa;
        plan.ell = cfg.algorithm.ell;
        plan.mu = cfg.algorithm.mu;
        plan.p = exp.w.p_est;
        exp.hp = derive_step_sizes(plan, cfg.algorithm.K, cfg.algorithm.safety_factor);
    } else {
        exp.hp.eta_c = cfg.algorithm.eta_c;
        exp.hp.eta_d = cfg.algorithm.eta_d;
        exp.hp.eta_s = cfg.algorithm.eta_s;
        exp.hp.eta_r = cfg.algorithm.eta_r;
        exp.hp.K = cfg.algorithm.K;
    }
    exp.hp.T = cfg.algorithm.T;
    exp.hp.b_x = cfg.algorithm.b_x;
    exp.hp.b_y = cfg.algorithm.b_y;
    exp.hp.project_each_step = cfg.algorithm.project_each_step;
    return exp;
}

struct RunResult {
    std::vector<RoundMetrics> rows;
    Vec final_x_bar;
    int inner_max_failures = 0;  // rows whose primal oracle hit its iteration cap
};

inline RunResult run_experiment(const Experiment& exp) {
    const Objective& obj = *exp.objective;
    BatchSampler sampler(exp.cfg.seed, exp.hp.b_x, exp.hp.b_y, obj.client_samples());
    MetricsEvaluator eval(obj, exp.cfg.metrics.inner_tol, exp.cfg.metrics.inner_max_iters,
                          exp.test_set ? &*exp.test_set : nullptr);

    RunResult result;
    // The evaluator always fires on the final round, so the last captured mean
    // is the final model.
    auto hook = [&](const NetworkState& st, double drift_x, double drift_y) {
        result.final_x_bar = st.X.rowwise().mean();
        RoundMetrics m = eval(st, drift_x, drift_y);
        if (!m.inner_converged) ++result.inner_max_failures;
        return m;
    };
    if (exp.cfg.algorithm.algo == "no_gt_baseline")
        result.rows = run_baseline_no_gt(obj, exp.w, exp.hp, sampler, hook, exp.cfg.metrics.every);
    else
        result.rows = run(obj, exp.w, exp.hp, sampler, hook, exp.cfg.metrics.every);
    return result;
}

inline void write_metrics_csv(const std::string& path, const std::vector<RoundMetrics>& rows) {
    std::ofstream out(path);
    require(out.good(), "cannot write " + path);
    out << kMetricsCsvHeader << '\n';
    for (const auto& m : rows) write_csv_row(out, m);
}

inline void write_model(const std::string& path, const Vec& x) {
    std::ofstream out(path);
    require(out.good(), "cannot write " + path);
    for (int i = 0; i < x.size(); ++i) out << format_double(x[i]) << '\n';
}

inline Vec read_model(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "model file: cannot open " + path);
    std::vector<double> vals;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        while (end != nullptr && *end == ' ') ++end;
        if (end == line.c_str() || *end != '\0' || !std::isfinite(v))
            throw Error("model file: " + path + ":" + std::to_string(lineno) +
                        ": not a real number");
        vals.push_back(v);
    }
    require(!vals.empty(), "model file: " + path + " is empty");
    return Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

/// Step-size sanity line for validate: local steps should stay under
/// 1/(8 K ell) when a smoothness estimate is available.
inline std::vector<std::string> step_size_warnings(const Experiment& exp) {
    std::vector<std::string> out;
    if (exp.cfg.algorithm.ell <= 0.0) return out;
    const double bound = 1.0 / (8.0 * exp.hp.K * exp.cfg.algorithm.ell);
    if (exp.hp.eta_c > bound)
        out.push_back("warning: eta_c = " + format_double(exp.hp.eta_c) +
                      " exceeds the local-drift bound 1/(8*K*ell) = " + format_double(bound));
    if (exp.hp.eta_d > bound)
        out.push_back("warning: eta_d = " + format_double(exp.hp.eta_d) +
                      " exceeds the local-drift bound 1/(8*K*ell) = " + format_double(bound));
    return out;
}

// ---------------------------------------------------------------------------
// CLI entry points (exit codes: 0 ok, 1 config error, 2 runtime divergence)
// ---------------------------------------------------------------------------

inline int cmd_train(const std::string& config_path,
                     std::optional<std::uint64_t> seed_override = {},
                     std::ostream& err = std::cerr) {
    ExperimentConfig cfg;
    std::optional<Experiment> exp;
    try {
        cfg = load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        exp = assemble(cfg);
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 1;
    }
    try {
        const RunResult result = run_experiment(*exp);
        const std::filesystem::path out_dir(cfg.output);
        std::filesystem::create_directories(out_dir);
        write_metrics_csv((out_dir / "metrics.csv").string(), result.rows);
        write_model((out_dir / "model.txt").string(), result.final_x_bar);
        std::ofstream resolved(out_dir / "resolved_config");
        require(resolved.good(), "cannot write resolved_config");
        resolved << cfg.to_json().dump(2) << '\n';
        if (result.inner_max_failures > 0)
            err << "warning: primal oracle hit its iteration cap on " << result.inner_max_failures
                << " metric rows (raise metrics.inner_max_iters or metrics.inner_tol)\n";
        return 0;
    } catch (const NonFiniteError& e) {
        err << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 1;
    }
}

inline int cmd_attack(const std::string& model_path, const std::string& config_path,
                      std::optional<std::uint64_t> seed_override = {},
                      std::ostream& err = std::cerr) {
    try {
        ExperimentConfig cfg = load_config(config_path);
        if (seed_override) {
            cfg.seed = *seed_override;
            cfg.attack.seed = *seed_override;
        }
        if (cfg.dataset.test_path.empty())
            throw ConfigError("config: missing required key 'dataset.test_path'");
        std::optional<int> d_override;
        if (cfg.dataset.d_override > 0) d_override = cfg.dataset.d_override;
        const Dataset test = parse_libsvm(cfg.dataset.test_path, d_override);
        const Vec model = read_model(model_path);
        require(model.size() == test.d,
                "model file: dimension " + std::to_string(model.size()) +
                    " does not match dataset dimension " + std::to_string(test.d));

        const std::filesystem::path out_dir(cfg.output);
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir / "attacks.csv");
        require(out.good(), "cannot write attacks.csv");
        out << "attack,delta,clean_acc,adv_acc,mean_adv_loss\n";
        for (const auto& kind : cfg.attack.kinds) {
            for (double delta : cfg.attack.deltas) {
                AttackConfig ac;
                ac.delta = delta;
                ac.seed = cfg.attack.seed;
                if (kind == "fgsm") {
                    ac.kind = AttackKind::fgsm;
                } else if (kind == "pgd") {
                    ac.kind = AttackKind::pgd;
                    ac.steps = cfg.attack.pgd_steps;
                    ac.eta = cfg.attack.pgd_eta;
                } else {
                    ac.kind = AttackKind::uap;
                    ac.steps = cfg.attack.uap_steps;
                    ac.eta = cfg.attack.uap_eta;
                    ac.batch = cfg.attack.uap_batch;
                }
                const AttackRow row = evaluate_attack(model, test, ac);
                out << row.attack << ',' << format_double(row.delta) << ','
                    << format_double(row.clean_acc) << ',' << format_double(row.adv_acc) << ','
                    << format_double(row.mean_adv_loss) << '\n';
            }
        }
        return 0;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 1;
    }
}

inline int cmd_validate(const std::string& config_path, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
    try {
        const ExperimentConfig cfg = load_config(config_path);
        const Experiment exp = assemble(cfg);
        for (const auto& w : step_size_warnings(exp)) out << w << '\n';
        out << cfg.to_json().dump(2) << '\n';
        return 0;
    } catch (const Error& e) {
        err << e.what() << '\n';
        return 1;
    }
}

}  // namespace dectrack
