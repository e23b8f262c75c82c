#pragma once

#include "dectrack/common.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace dectrack {

using nlohmann::json;

/// Raised on any config defect; the message always names the offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

namespace detail {

/// Typed view over one JSON object that records which keys were consumed and
/// rejects the rest; typos never pass silently.
class JsonBlock {
public:
    JsonBlock(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T get(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError("config: missing required key '" + at(key) + "'");
        return fetch<T>(key);
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) {
        if (!j_.contains(key)) return fallback;
        return fetch<T>(key);
    }

    json child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : json::object();
    }

    /// Call after all reads: any unconsumed key is an error.
    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (seen_.find(key) == seen_.end())
                throw ConfigError("config: unknown key '" + at(key) + "'");
    }

private:
    std::string at(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    template <typename T>
    T fetch(const std::string& key) {
        seen_.insert(key);
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: key '" + at(key) + "' has the wrong type");
        }
    }

    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

struct DatasetConfig {
    std::string path;
    std::string test_path;  // empty = none
    int d_override = 0;     // 0 = infer from data
};

struct PartitionConfig {
    std::string mode = "iid_shuffle";  // iid_shuffle | label_skew
    int shards_per_client = 1;
    std::uint64_t seed = 0;
};

struct TopologyConfig {
    std::string kind = "ring_lazy";  // ring_lazy | complete | identity | matrix_file
    int n = 1;
    double pi = 0.5;
    std::string path;  // matrix_file source
};

struct ObjectiveConfig {
    std::string kind = "robust_logreg";  // robust_logreg | saddle_quadratic
    double theta = 1e-5;
    double nu = 10.0;
    // saddle_quadratic generator parameters
    int d = 10;
    int q = 5;
    double mu = 1.0;
    double heterogeneity = 0.25;
    std::uint64_t seed = 0;
};

struct AlgorithmConfig {
    std::string algo = "dec_fedtrack";  // dec_fedtrack | no_gt_baseline
    int K = 1;
    int T = 1;
    int b_x = 0;
    int b_y = 0;
    double eta_c = 0.0;
    double eta_d = 0.0;
    double eta_s = 1.0;
    double eta_r = 1.0;
    bool auto_from_theorem = false;
    double kappa = 0.0;  // curvature estimates; 0 = not provided
    double ell = 0.0;
    double mu = 0.0;
    double safety_factor = 1.0;
    bool project_each_step = true;
};

struct MetricsConfig {
    int every = 1;
    double inner_tol = 1e-8;
    int inner_max_iters = 100000;
};

struct AttackBlockConfig {
    std::vector<std::string> kinds = {"fgsm", "pgd", "uap"};
    std::vector<double> deltas = {0.0, 0.05, 0.1, 0.15};
    int pgd_steps = 10;
    double pgd_eta = 0.0;  // 0 = delta/4
    int uap_steps = 50;
    double uap_eta = 0.0;  // 0 = delta
    int uap_batch = 128;
    std::uint64_t seed = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output = "out";
    DatasetConfig dataset;
    PartitionConfig partition;
    TopologyConfig topology;
    ObjectiveConfig objective;
    AlgorithmConfig algorithm;
    MetricsConfig metrics;
    AttackBlockConfig attack;

    json to_json() const {
        json j;
        j["seed"] = seed;
        j["output"] = output;
        j["dataset"] = {{"path", dataset.path},
                        {"test_path", dataset.test_path},
                        {"d_override", dataset.d_override}};
        j["partition"] = {{"mode", partition.mode},
                          {"shards_per_client", partition.shards_per_client},
                          {"seed", partition.seed}};
        j["topology"] = {{"kind", topology.kind},
                         {"n", topology.n},
                         {"pi", topology.pi},
                         {"path", topology.path}};
        j["objective"] = {{"kind", objective.kind}, {"theta", objective.theta},
                          {"nu", objective.nu},     {"d", objective.d},
                          {"q", objective.q},       {"mu", objective.mu},
                          {"heterogeneity", objective.heterogeneity},
                          {"seed", objective.seed}};
        j["algorithm"] = {{"algo", algorithm.algo},
                          {"K", algorithm.K},
                          {"T", algorithm.T},
                          {"b_x", algorithm.b_x},
                          {"b_y", algorithm.b_y},
                          {"eta_c", algorithm.eta_c},
                          {"eta_d", algorithm.eta_d},
                          {"eta_s", algorithm.eta_s},
                          {"eta_r", algorithm.eta_r},
                          {"auto_from_theorem", algorithm.auto_from_theorem},
                          {"kappa", algorithm.kappa},
                          {"ell", algorithm.ell},
                          {"mu", algorithm.mu},
                          {"safety_factor", algorithm.safety_factor},
                          {"project_each_step", algorithm.project_each_step}};
        j["metrics"] = {{"every", metrics.every},
                        {"inner_tol", metrics.inner_tol},
                        {"inner_max_iters", metrics.inner_max_iters}};
        j["attack"] = {{"kinds", attack.kinds},       {"deltas", attack.deltas},
                       {"pgd_steps", attack.pgd_steps}, {"pgd_eta", attack.pgd_eta},
                       {"uap_steps", attack.uap_steps}, {"uap_eta", attack.uap_eta},
                       {"uap_batch", attack.uap_batch}, {"seed", attack.seed}};
        return j;
    }
};

inline ExperimentConfig parse_config(const json& root) {
    ExperimentConfig cfg;
    detail::JsonBlock top(root, "");
    cfg.seed = top.get_or<std::uint64_t>("seed", 0);
    cfg.output = top.get_or<std::string>("output", "out");

    {
        detail::JsonBlock b(top.child("dataset"), "dataset");
        cfg.dataset.path = b.get_or<std::string>("path", "");
        cfg.dataset.test_path = b.get_or<std::string>("test_path", "");
        cfg.dataset.d_override = b.get_or<int>("d_override", 0);
        b.finish();
    }
    {
        detail::JsonBlock b(top.child("partition"), "partition");
        cfg.partition.mode = b.get_or<std::string>("mode", "iid_shuffle");
        cfg.partition.shards_per_client = b.get_or<int>("shards_per_client", 1);
        cfg.partition.seed = b.get_or<std::uint64_t>("seed", cfg.seed);
        b.finish();
        if (cfg.partition.mode != "iid_shuffle" && cfg.partition.mode != "label_skew")
            throw ConfigError("config: key 'partition.mode' must be iid_shuffle or label_skew");
        if (cfg.partition.shards_per_client < 1)
            throw ConfigError("config: key 'partition.shards_per_client' must be >= 1");
    }
    {
        detail::JsonBlock b(top.child("topology"), "topology");
        cfg.topology.kind = b.get_or<std::string>("kind", "ring_lazy");
        cfg.topology.n = b.get_or<int>("n", 1);
        cfg.topology.pi = b.get_or<double>("pi", 0.5);
        cfg.topology.path = b.get_or<std::string>("path", "");
        b.finish();
        const auto& k = cfg.topology.kind;
        if (k != "ring_lazy" && k != "complete" && k != "identity" && k != "matrix_file")
            throw ConfigError(
                "config: key 'topology.kind' must be one of ring_lazy, complete, identity, "
                "matrix_file");
        if (k != "matrix_file" && cfg.topology.n < 1)
            throw ConfigError("config: key 'topology.n' must be >= 1");
        if (k == "ring_lazy" && (cfg.topology.pi <= 0.0 || cfg.topology.pi >= 1.0))
            throw ConfigError("config: key 'topology.pi' must lie in (0,1)");
        if (k == "matrix_file" && cfg.topology.path.empty())
            throw ConfigError("config: missing required key 'topology.path'");
    }
    {
        detail::JsonBlock b(top.child("objective"), "objective");
        cfg.objective.kind = b.get_or<std::string>("kind", "robust_logreg");
        cfg.objective.theta = b.get_or<double>("theta", 1e-5);
        cfg.objective.nu = b.get_or<double>("nu", 10.0);
        cfg.objective.d = b.get_or<int>("d", 10);
        cfg.objective.q = b.get_or<int>("q", 5);
        cfg.objective.mu = b.get_or<double>("mu", 1.0);
        cfg.objective.heterogeneity = b.get_or<double>("heterogeneity", 0.25);
        cfg.objective.seed = b.get_or<std::uint64_t>("seed", cfg.seed);
        b.finish();
        if (cfg.objective.kind != "robust_logreg" && cfg.objective.kind != "saddle_quadratic")
            throw ConfigError(
                "config: key 'objective.kind' must be robust_logreg or saddle_quadratic");
        if (cfg.objective.kind == "robust_logreg" && cfg.dataset.path.empty())
            throw ConfigError("config: missing required key 'dataset.path'");
        if (cfg.objective.mu <= 0.0)
            throw ConfigError("config: key 'objective.mu' must be positive");
    }
    {
        detail::JsonBlock b(top.child("algorithm"), "algorithm");
        cfg.algorithm.algo = b.get_or<std::string>("algo", "dec_fedtrack");
        cfg.algorithm.K = b.get_or<int>("K", 1);
        cfg.algorithm.T = b.get_or<int>("T", 1);
        cfg.algorithm.b_x = b.get_or<int>("b_x", 0);
        cfg.algorithm.b_y = b.get_or<int>("b_y", 0);
        cfg.algorithm.eta_c = b.get_or<double>("eta_c", 0.0);
        cfg.algorithm.eta_d = b.get_or<double>("eta_d", 0.0);
        cfg.algorithm.eta_s = b.get_or<double>("eta_s", 1.0);
        cfg.algorithm.eta_r = b.get_or<double>("eta_r", 1.0);
        cfg.algorithm.auto_from_theorem = b.get_or<bool>("auto_from_theorem", false);
        cfg.algorithm.kappa = b.get_or<double>("kappa", 0.0);
        cfg.algorithm.ell = b.get_or<double>("ell", 0.0);
        cfg.algorithm.mu = b.get_or<double>("mu", 0.0);
        cfg.algorithm.safety_factor = b.get_or<double>("safety_factor", 1.0);
        cfg.algorithm.project_each_step = b.get_or<bool>("project_each_step", true);
        b.finish();
        if (cfg.algorithm.algo != "dec_fedtrack" && cfg.algorithm.algo != "no_gt_baseline")
            throw ConfigError(
                "config: key 'algorithm.algo' must be dec_fedtrack or no_gt_baseline");
        if (cfg.algorithm.K < 1) throw ConfigError("config: key 'algorithm.K' must be >= 1");
        if (cfg.algorithm.T < 0) throw ConfigError("config: key 'algorithm.T' must be >= 0");
        if (cfg.algorithm.b_x < 0 || cfg.algorithm.b_y < 0)
            throw ConfigError("config: keys 'algorithm.b_x'/'algorithm.b_y' must be >= 0");
        if (cfg.algorithm.auto_from_theorem) {
            if (cfg.algorithm.kappa <= 0.0)
                throw ConfigError(
                    "config: key 'algorithm.kappa' must be positive with auto_from_theorem");
            if (cfg.algorithm.ell <= 0.0)
                throw ConfigError(
                    "config: key 'algorithm.ell' must be positive with auto_from_theorem");
            if (cfg.algorithm.mu <= 0.0)
                throw ConfigError(
                    "config: key 'algorithm.mu' must be positive with auto_from_theorem");
        } else {
            if (cfg.algorithm.eta_c <= 0.0)
                throw ConfigError("config: key 'algorithm.eta_c' must be positive");
            if (cfg.algorithm.eta_d <= 0.0)
                throw ConfigError("config: key 'algorithm.eta_d' must be positive");
        }
        if (cfg.algorithm.safety_factor <= 0.0)
            throw ConfigError("config: key 'algorithm.safety_factor' must be positive");
    }
    {
        detail::JsonBlock b(top.child("metrics"), "metrics");
        cfg.metrics.every = b.get_or<int>("every", 1);
        cfg.metrics.inner_tol = b.get_or<double>("inner_tol", 1e-8);
        cfg.metrics.inner_max_iters = b.get_or<int>("inner_max_iters", 100000);
        b.finish();
        if (cfg.metrics.every < 1) throw ConfigError("config: key 'metrics.every' must be >= 1");
        if (cfg.metrics.inner_tol <= 0.0)
            throw ConfigError("config: key 'metrics.inner_tol' must be positive");
    }
    {
        detail::JsonBlock b(top.child("attack"), "attack");
        cfg.attack.kinds = b.get_or<std::vector<std::string>>("kinds", {"fgsm", "pgd", "uap"});
        cfg.attack.deltas = b.get_or<std::vector<double>>("deltas", {0.0, 0.05, 0.1, 0.15});
        cfg.attack.pgd_steps = b.get_or<int>("pgd_steps", 10);
        cfg.attack.pgd_eta = b.get_or<double>("pgd_eta", 0.0);
        cfg.attack.uap_steps = b.get_or<int>("uap_steps", 50);
        cfg.attack.uap_eta = b.get_or<double>("uap_eta", 0.0);
        cfg.attack.uap_batch = b.get_or<int>("uap_batch", 128);
        cfg.attack.seed = b.get_or<std::uint64_t>("seed", cfg.seed);
        b.finish();
        for (const auto& kind : cfg.attack.kinds)
            if (kind != "fgsm" && kind != "pgd" && kind != "uap")
                throw ConfigError("config: key 'attack.kinds' has unknown attack '" + kind + "'");
        for (double dl : cfg.attack.deltas)
            if (dl < 0.0) throw ConfigError("config: key 'attack.deltas' has a negative budget");
        if (cfg.attack.pgd_steps < 1 || cfg.attack.uap_steps < 1 || cfg.attack.uap_batch < 1)
            throw ConfigError("config: attack step/batch counts must be >= 1");
    }
    top.finish();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("config: cannot open " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(root);
}

}  // namespace dectrack
