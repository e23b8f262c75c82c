#include "dectrack/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"dectrack: decentralized minimax training, adversarial attacks, config checks"};
    app.require_subcommand(1);

    std::string train_config, attack_model, attack_config, validate_config;
    std::uint64_t seed = 0;

    auto* train = app.add_subcommand("train", "run a training experiment from a config");
    train->add_option("config", train_config, "experiment config (JSON)")->required();
    auto* train_seed = train->add_option("--seed", seed, "override the config seed");

    auto* attack = app.add_subcommand("attack", "attack a saved model over a delta grid");
    attack->add_option("model", attack_model, "model file (one value per line)")->required();
    attack->add_option("config", attack_config, "experiment config (JSON)")->required();
    auto* attack_seed = attack->add_option("--seed", seed, "override the config seed");

    auto* validate = app.add_subcommand("validate", "validate a config and print it resolved");
    validate->add_option("config", validate_config, "experiment config (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        std::optional<std::uint64_t> s;
        if (train_seed->count() > 0) s = seed;
        return dectrack::cmd_train(train_config, s);
    }
    if (attack->parsed()) {
        std::optional<std::uint64_t> s;
        if (attack_seed->count() > 0) s = seed;
        return dectrack::cmd_attack(attack_model, attack_config, s);
    }
    return dectrack::cmd_validate(validate_config);
}
