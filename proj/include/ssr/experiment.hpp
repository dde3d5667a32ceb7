#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ssr/core.hpp"
#include "ssr/envs.hpp"
#include "ssr/io.hpp"
#include "ssr/learners.hpp"
#include "ssr/ope.hpp"
#include "ssr/rng.hpp"
#include "ssr/select.hpp"
#include "ssr/tutorbot.hpp"

namespace ssr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EnvSpec {
    std::string type = "chain";
    ChainConfig chain;
    int rmdp_n_states = 8;
    int rmdp_n_actions = 2;
    int rmdp_horizon = 10;
    double rmdp_sparsity = 0.4;
    TutorBotConfig tutorbot;
};

struct DatasetSpec {
    int n_episodes = 200;
    bool expected_composition = false;
    std::vector<double> behavior;
};

struct StrategySpec {
    std::string id = "rrs";
    int K = 5;
    int M = 5;
    int B = 200;
    double ratio = 0.5;
    std::string mode = "mean";
    double confidence = 0.9;
    std::vector<double> eps_grid = {0.1, 0.2, 0.5, 0.7, 1.0, 3.0, 10.0};
};

struct ExperimentConfig {
    RngSeed seed{0};
    EnvSpec env;
    DatasetSpec dataset;
    std::vector<AHSpec> ahs;
    std::string estimator_id = "wis";
    EstimatorOptions estimator_options;
    StrategySpec strategy;
    int grid_cap = 1000;
    int mc_episodes = 100000;
    int workers = 1;
    std::string out_dir;
};

inline const std::vector<std::string>& strategy_ids() {
    static const std::vector<std::string> ids = {"one-split", "rrs", "cv", "nested-cv", "bca", "bvft"};
    return ids;
}

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& message) {
    throw ConfigError("config error at " + (path.empty() ? std::string("/") : path) + ": " + message);
}

inline std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ", ";
        out += id;
    }
    return out;
}

inline void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) config_fail(path, "expected an object");
}

inline void check_keys(const json& j, const std::string& path, const std::vector<std::string>& allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            config_fail(path + "/" + it.key(), "unknown key (allowed: " + join_ids(allowed) + ")");
        }
    }
}

inline double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) config_fail(path, "expected a number");
    return j.get<double>();
}

inline long long get_integer(const json& j, const std::string& path) {
    if (j.is_number_integer()) return j.get<long long>();
    if (j.is_number_float()) {
        double v = j.get<double>();
        if (v == std::floor(v) && std::abs(v) < 9e15) return static_cast<long long>(v);
    }
    config_fail(path, "expected an integer");
}

inline int get_positive_int(const json& j, const std::string& path) {
    long long v = get_integer(j, path);
    if (v < 1 || v > 2147483647LL) config_fail(path, "expected a positive integer");
    return static_cast<int>(v);
}

inline bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) config_fail(path, "expected a boolean");
    return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) config_fail(path, "expected a string");
    return j.get<std::string>();
}

inline std::vector<double> get_number_array(const json& j, const std::string& path) {
    if (!j.is_array()) config_fail(path, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], path + "/" + std::to_string(i)));
    return out;
}

inline EnvSpec parse_env_spec(const json& j, const std::string& path) {
    expect_object(j, path);
    EnvSpec spec;
    auto type_it = j.find("type");
    if (type_it == j.end()) config_fail(path + "/type", "missing key");
    spec.type = get_string(*type_it, path + "/type");
    if (spec.type == "chain") {
        check_keys(j, path, {"type", "horizon", "low_reward", "high_reward"});
        if (j.contains("horizon")) spec.chain.H = get_positive_int(j["horizon"], path + "/horizon");
        if (j.contains("low_reward")) spec.chain.low_reward = get_number(j["low_reward"], path + "/low_reward");
        if (j.contains("high_reward")) spec.chain.high_reward = get_number(j["high_reward"], path + "/high_reward");
    } else if (spec.type == "random-mdp") {
        check_keys(j, path, {"type", "n_states", "n_actions", "horizon", "sparsity"});
        if (j.contains("n_states")) spec.rmdp_n_states = get_positive_int(j["n_states"], path + "/n_states");
        if (j.contains("n_actions")) spec.rmdp_n_actions = get_positive_int(j["n_actions"], path + "/n_actions");
        if (j.contains("horizon")) spec.rmdp_horizon = get_positive_int(j["horizon"], path + "/horizon");
        if (j.contains("sparsity")) {
            spec.rmdp_sparsity = get_number(j["sparsity"], path + "/sparsity");
            if (spec.rmdp_sparsity < 0.0 || spec.rmdp_sparsity > 1.0) {
                config_fail(path + "/sparsity", "expected a value in [0, 1]");
            }
        }
    } else if (spec.type == "tutorbot") {
        check_keys(j, path, {"type", "mu_improv", "mu_base", "pretest_dist", "anxiety_edges", "thinking_edges"});
        if (j.contains("mu_improv")) spec.tutorbot.mu_improv = get_number(j["mu_improv"], path + "/mu_improv");
        if (j.contains("mu_base")) spec.tutorbot.mu_base = get_number(j["mu_base"], path + "/mu_base");
        if (j.contains("pretest_dist")) {
            spec.tutorbot.pretest_dist = get_number_array(j["pretest_dist"], path + "/pretest_dist");
        }
        if (j.contains("anxiety_edges")) {
            auto edges = get_number_array(j["anxiety_edges"], path + "/anxiety_edges");
            if (edges.size() != 2) config_fail(path + "/anxiety_edges", "expected exactly 2 edges");
            spec.tutorbot.anxiety_edges = {edges[0], edges[1]};
        }
        if (j.contains("thinking_edges")) {
            auto edges = get_number_array(j["thinking_edges"], path + "/thinking_edges");
            if (edges.size() != 2) config_fail(path + "/thinking_edges", "expected exactly 2 edges");
            spec.tutorbot.thinking_edges = {edges[0], edges[1]};
        }
        try {
            validate_tutorbot_config(spec.tutorbot);
        } catch (const std::exception& e) {
            config_fail(path, e.what());
        }
    } else {
        config_fail(path + "/type", "unknown environment '" + spec.type + "' (valid: chain, random-mdp, tutorbot)");
    }
    return spec;
}

inline DatasetSpec parse_dataset_spec(const json& j, const std::string& path, const EnvSpec& env) {
    expect_object(j, path);
    check_keys(j, path, {"n_episodes", "expected_composition", "behavior"});
    DatasetSpec spec;
    if (j.contains("n_episodes")) spec.n_episodes = get_positive_int(j["n_episodes"], path + "/n_episodes");
    if (j.contains("expected_composition")) {
        spec.expected_composition = get_bool(j["expected_composition"], path + "/expected_composition");
        if (spec.expected_composition && env.type != "chain") {
            config_fail(path + "/expected_composition", "only supported by the chain environment");
        }
    }
    if (j.contains("behavior")) {
        if (env.type != "tutorbot") config_fail(path + "/behavior", "only supported by the tutorbot environment");
        spec.behavior = get_number_array(j["behavior"], path + "/behavior");
        if (spec.behavior.size() != kTutorBotActions) config_fail(path + "/behavior", "expected 3 action probabilities");
        double total = 0.0;
        for (double p : spec.behavior) {
            if (p < 0.0) config_fail(path + "/behavior", "probabilities must be nonnegative");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) config_fail(path + "/behavior", "probabilities must sum to 1");
    }
    if (env.type == "tutorbot" && spec.behavior.empty()) {
        spec.behavior.assign(kTutorBotActions, 1.0 / kTutorBotActions);
    }
    return spec;
}

// One entry may carry array-valued params; arrays expand to the cross
// product over keys in alphabetical order.
inline void expand_ah_entry(const json& entry, const std::string& path, int grid_cap, std::vector<AHSpec>& out) {
    expect_object(entry, path);
    check_keys(entry, path, {"id", "label", "params"});
    auto id_it = entry.find("id");
    if (id_it == entry.end()) config_fail(path + "/id", "missing key");

    AHSpec base;
    base.algorithm_id = get_string(*id_it, path + "/id");
    if (entry.contains("label")) base.display_label = get_string(entry["label"], path + "/label");

    std::vector<std::pair<std::string, std::vector<double>>> axes;
    if (entry.contains("params")) {
        const json& params = entry["params"];
        expect_object(params, path + "/params");
        for (auto it = params.begin(); it != params.end(); ++it) {
            const std::string key_path = path + "/params/" + it.key();
            if (it->is_array()) {
                auto values = get_number_array(*it, key_path);
                if (values.empty()) config_fail(key_path, "expected a nonempty array");
                axes.emplace_back(it.key(), std::move(values));
            } else {
                axes.emplace_back(it.key(), std::vector<double>{get_number(*it, key_path)});
            }
        }
    }

    std::size_t count = 1;
    for (const auto& [key, values] : axes) {
        count *= values.size();
        if (count > static_cast<std::size_t>(grid_cap)) {
            config_fail(path, "grid expansion exceeds the cap of " + std::to_string(grid_cap) + " AHs");
        }
    }
    if (count > 1 && !base.display_label.empty()) {
        config_fail(path + "/label", "explicit label not allowed on an entry expanding to multiple AHs");
    }

    std::vector<AHSpec> expanded = {base};
    for (const auto& [key, values] : axes) {
        std::vector<AHSpec> next;
        next.reserve(expanded.size() * values.size());
        for (const auto& spec : expanded) {
            for (double v : values) {
                AHSpec widened = spec;
                widened.params[key] = v;
                next.push_back(std::move(widened));
            }
        }
        expanded = std::move(next);
    }
    for (auto& spec : expanded) {
        try {
            validate_ah(spec);
        } catch (const std::exception& e) {
            config_fail(path, e.what());
        }
        out.push_back(std::move(spec));
    }
}

inline std::vector<AHSpec> parse_ah_grid(const json& j, const std::string& path, int grid_cap) {
    if (!j.is_array() || j.empty()) config_fail(path, "expected a nonempty array of AH entries");
    std::vector<AHSpec> ahs;
    for (std::size_t i = 0; i < j.size(); ++i) {
        expand_ah_entry(j[i], path + "/" + std::to_string(i), grid_cap, ahs);
        if (ahs.size() > static_cast<std::size_t>(grid_cap)) {
            config_fail(path, "grid expansion exceeds the cap of " + std::to_string(grid_cap) + " AHs");
        }
    }
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < ahs.size(); ++i) {
        std::string label = ah_label(ahs[i]);
        auto [it, inserted] = seen.emplace(label, i);
        if (!inserted) config_fail(path + "/" + std::to_string(i), "duplicate AH label '" + label + "'");
    }
    return ahs;
}

inline void parse_estimator_spec(const json& j, const std::string& path, ExperimentConfig& config) {
    if (j.is_string()) {
        config.estimator_id = j.get<std::string>();
    } else {
        expect_object(j, path);
        check_keys(j, path, {"id", "clip_max", "fqe_iterations"});
        auto id_it = j.find("id");
        if (id_it == j.end()) config_fail(path + "/id", "missing key");
        config.estimator_id = get_string(*id_it, path + "/id");
        if (j.contains("clip_max")) {
            const json& clip = j["clip_max"];
            if (clip.is_string() && clip.get<std::string>() == "inf") {
                config.estimator_options.clip_max = std::numeric_limits<double>::infinity();
            } else {
                config.estimator_options.clip_max = get_number(clip, path + "/clip_max");
            }
            if (!(config.estimator_options.clip_max > 0.0)) config_fail(path + "/clip_max", "expected a positive value");
        }
        if (j.contains("fqe_iterations")) {
            long long v = get_integer(j["fqe_iterations"], path + "/fqe_iterations");
            if (v < 0) config_fail(path + "/fqe_iterations", "expected a nonnegative integer");
            config.estimator_options.fqe_iterations = static_cast<int>(v);
        }
    }
    const auto& ids = estimator_ids();
    if (std::find(ids.begin(), ids.end(), config.estimator_id) == ids.end()) {
        config_fail(path + (j.is_string() ? "" : "/id"),
                    "unknown estimator '" + config.estimator_id + "' (valid: " + join_ids(ids) + ")");
    }
}

inline StrategySpec parse_strategy_spec(const json& j, const std::string& path) {
    StrategySpec spec;
    if (j.is_string()) {
        spec.id = j.get<std::string>();
    } else {
        expect_object(j, path);
        auto id_it = j.find("id");
        if (id_it == j.end()) config_fail(path + "/id", "missing key");
        spec.id = get_string(*id_it, path + "/id");
    }
    const auto& ids = strategy_ids();
    if (std::find(ids.begin(), ids.end(), spec.id) == ids.end()) {
        config_fail(path + (j.is_string() ? "" : "/id"),
                    "unknown strategy '" + spec.id + "' (valid: " + join_ids(ids) + ")");
    }
    if (j.is_string()) return spec;

    if (spec.id == "one-split") {
        check_keys(j, path, {"id", "ratio"});
    } else if (spec.id == "rrs") {
        check_keys(j, path, {"id", "K", "ratio"});
    } else if (spec.id == "cv") {
        check_keys(j, path, {"id", "M"});
    } else if (spec.id == "nested-cv") {
        check_keys(j, path, {"id", "K"});
    } else if (spec.id == "bca") {
        check_keys(j, path, {"id", "B", "mode", "confidence", "ratio"});
    } else {
        check_keys(j, path, {"id", "ratio", "eps_grid"});
    }
    if (j.contains("K")) spec.K = get_positive_int(j["K"], path + "/K");
    if (j.contains("M")) {
        spec.M = get_positive_int(j["M"], path + "/M");
        if (spec.M < 2) config_fail(path + "/M", "expected at least 2 folds");
    }
    if (j.contains("B")) spec.B = get_positive_int(j["B"], path + "/B");
    if (j.contains("ratio")) {
        spec.ratio = get_number(j["ratio"], path + "/ratio");
        if (!(spec.ratio > 0.0 && spec.ratio < 1.0)) config_fail(path + "/ratio", "expected a value in (0, 1)");
    }
    if (j.contains("mode")) {
        spec.mode = get_string(j["mode"], path + "/mode");
        try {
            parse_bca_mode(spec.mode);
        } catch (const std::exception& e) {
            config_fail(path + "/mode", e.what());
        }
    }
    if (j.contains("confidence")) {
        spec.confidence = get_number(j["confidence"], path + "/confidence");
        if (!(spec.confidence > 0.0 && spec.confidence < 1.0)) {
            config_fail(path + "/confidence", "expected a value in (0, 1)");
        }
    }
    if (j.contains("eps_grid")) {
        spec.eps_grid = get_number_array(j["eps_grid"], path + "/eps_grid");
        if (spec.eps_grid.empty()) config_fail(path + "/eps_grid", "expected a nonempty array");
        for (double e : spec.eps_grid) {
            if (!(e > 0.0)) config_fail(path + "/eps_grid", "resolutions must be positive");
        }
    }
    return spec;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using detail::config_fail;
    detail::expect_object(j, "");
    detail::check_keys(j, "", {"seed", "env", "dataset", "ahs", "estimator", "strategy", "grid_cap", "mc_episodes",
                               "workers", "out"});
    ExperimentConfig config;
    if (j.contains("grid_cap")) config.grid_cap = detail::get_positive_int(j["grid_cap"], "/grid_cap");
    if (j.contains("seed")) {
        long long v = detail::get_integer(j["seed"], "/seed");
        if (v < 0) config_fail("/seed", "expected a nonnegative integer");
        config.seed = RngSeed{static_cast<std::uint64_t>(v)};
    }
    if (j.contains("env")) config.env = detail::parse_env_spec(j["env"], "/env");
    config.dataset = detail::parse_dataset_spec(j.contains("dataset") ? j["dataset"] : nlohmann::json::object(),
                                                "/dataset", config.env);
    if (!j.contains("ahs")) config_fail("/ahs", "missing key");
    config.ahs = detail::parse_ah_grid(j["ahs"], "/ahs", config.grid_cap);
    if (j.contains("estimator")) detail::parse_estimator_spec(j["estimator"], "/estimator", config);
    if (j.contains("strategy")) config.strategy = detail::parse_strategy_spec(j["strategy"], "/strategy");
    if (j.contains("mc_episodes")) config.mc_episodes = detail::get_positive_int(j["mc_episodes"], "/mc_episodes");
    if (j.contains("workers")) config.workers = detail::get_positive_int(j["workers"], "/workers");
    if (j.contains("out")) config.out_dir = detail::get_string(j["out"], "/out");
    return config;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": not valid JSON (" + e.what() + ")");
    }
    return parse_experiment_config(j);
}

struct GeneratedData {
    Dataset dataset;
    std::vector<std::vector<TutorBotStep>> aux;
    std::optional<TabularEnv> env;
};

inline TabularEnv build_tabular_env(const ExperimentConfig& config) {
    if (config.env.type == "chain") return make_chain_env(config.env.chain);
    if (config.env.type == "random-mdp") {
        return make_random_mdp(config.env.rmdp_n_states, config.env.rmdp_n_actions, config.env.rmdp_horizon,
                               config.env.rmdp_sparsity, derive(config.seed, "env"));
    }
    throw std::invalid_argument("build_tabular_env: environment '" + config.env.type + "' is not tabular");
}

inline GeneratedData generate_dataset(const ExperimentConfig& config) {
    GeneratedData out;
    const RngSeed data_seed = derive(config.seed, "data");
    if (config.env.type == "tutorbot") {
        auto roll = tutorbot_rollout(config.env.tutorbot, config.dataset.behavior, config.dataset.n_episodes,
                                     data_seed);
        out.dataset = std::move(roll.dataset);
        out.aux = std::move(roll.aux);
        return out;
    }
    out.env = build_tabular_env(config);
    if (config.dataset.expected_composition) {
        out.dataset = build_expected_composition_chain_dataset(*out.env, config.dataset.n_episodes, data_seed);
    } else {
        out.dataset = rollout(*out.env, uniform_behavior_policy(*out.env), config.dataset.n_episodes, data_seed);
    }
    return out;
}

inline ScoreTable score_with_strategy(const ExperimentConfig& config, const Dataset& dataset, int n_workers) {
    const StrategySpec& s = config.strategy;
    const int n = dataset.size();
    const RngSeed split_seed = derive(config.seed, "split");
    const RngSeed score_seed = derive(config.seed, "score");
    if (s.id == "one-split" || s.id == "rrs") {
        const int K = s.id == "one-split" ? 1 : s.K;
        SplitPlan plan = rrs_splits(n, K, s.ratio, split_seed);
        return score_strategy(config.ahs, dataset, config.estimator_id, plan, score_seed, config.estimator_options,
                              n_workers);
    }
    if (s.id == "cv") {
        SplitPlan plan = kfold_splits(n, s.M, split_seed);
        return score_strategy(config.ahs, dataset, config.estimator_id, plan, score_seed, config.estimator_options,
                              n_workers);
    }
    if (s.id == "nested-cv") {
        return score_nested_cv(config.ahs, dataset, config.estimator_id, s.K, score_seed, config.estimator_options,
                               n_workers);
    }
    const SplitPair split = rrs_splits(n, 1, s.ratio, split_seed).repetitions[0];
    if (s.id == "bca") {
        return score_bca(config.ahs, dataset, config.estimator_id, split, s.B, parse_bca_mode(s.mode), s.confidence,
                         score_seed, config.estimator_options, n_workers);
    }
    return score_bvft(config.ahs, dataset, split, score_seed, s.eps_grid, config.estimator_options.fqe_iterations,
                      n_workers);
}

struct ExperimentResult {
    SelectionReport report;
    SummaryRecord summary;
    std::optional<double> true_value_se;
    std::vector<std::string> artifact_paths;
};

namespace detail {

struct ArtifactGuard {
    std::vector<std::string> created;
    bool committed = false;

    void track(const std::string& path) { created.push_back(path); }
    ~ArtifactGuard() {
        if (committed) return;
        for (const auto& path : created) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
        }
    }
};

inline void require_writable(const std::vector<std::string>& paths, bool force) {
    if (force) return;
    for (const auto& path : paths) {
        if (std::filesystem::exists(path)) {
            throw std::runtime_error("output file " + path + " already exists (pass --force to overwrite)");
        }
    }
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config, bool force = false) {
    namespace fs = std::filesystem;
    if (config.out_dir.empty()) throw std::runtime_error("run_experiment: no output directory configured");
    fs::create_directories(config.out_dir);
    const std::string dataset_path = (fs::path(config.out_dir) / "dataset.csv").string();
    const std::string scores_path = (fs::path(config.out_dir) / "scores.csv").string();
    const std::string policy_path = (fs::path(config.out_dir) / "policy.csv").string();
    const std::string summary_path = (fs::path(config.out_dir) / "summary.json").string();
    const std::string log_path = (fs::path(config.out_dir) / "run.log").string();
    const std::string aux_path = dataset_path + ".aux.csv";

    std::vector<std::string> targets = {dataset_path, dataset_meta_path(dataset_path), scores_path, policy_path,
                                        summary_path, log_path};
    if (config.env.type == "tutorbot") targets.push_back(aux_path);
    detail::require_writable(targets, force);

    detail::ArtifactGuard guard;
    const auto t0 = std::chrono::steady_clock::now();

    GeneratedData data = generate_dataset(config);
    guard.track(dataset_path);
    guard.track(dataset_meta_path(dataset_path));
    write_dataset_csv(data.dataset, dataset_path);
    if (config.env.type == "tutorbot") {
        guard.track(aux_path);
        write_tutorbot_aux(data.aux, aux_path);
    }

    ScoreTable table = score_with_strategy(config, data.dataset, config.workers);
    guard.track(scores_path);
    write_score_table_csv(table, scores_path);

    SelectionReport report = select_and_retrain(table, data.dataset, config.seed);
    guard.track(policy_path);
    write_policy_csv(report.deployed_policy, policy_path);

    ExperimentResult result;
    if (config.env.type == "tutorbot") {
        auto [value, se] = tutorbot_policy_value_mc(config.env.tutorbot, report.deployed_policy, config.mc_episodes,
                                                    derive(config.seed, "true-value"));
        result.summary.true_value = value;
        result.true_value_se = se;
    } else {
        result.summary.true_value = exact_policy_value(*data.env, report.deployed_policy);
    }
    const auto t1 = std::chrono::steady_clock::now();
    report.wall_time = std::chrono::duration<double>(t1 - t0).count();

    result.summary.strategy = config.strategy.id;
    result.summary.estimator = config.estimator_id;
    result.summary.chosen_label = ah_label(report.chosen);
    int chosen_index = 0;
    for (int i = 0; i < table.n_ahs(); ++i) {
        if (ah_label(table.ahs[static_cast<std::size_t>(i)]) == result.summary.chosen_label) chosen_index = i;
    }
    result.summary.aggregate = table.aggregates[static_cast<std::size_t>(chosen_index)].value();
    result.summary.seed = config.seed.value;
    guard.track(summary_path);
    write_summary_json(result.summary, summary_path);

    guard.track(log_path);
    {
        std::ofstream log(log_path);
        if (!log) throw std::runtime_error("cannot open " + log_path + " for writing");
        log << "ssr " << kVersion << "\n";
        log << "strategy=" << config.strategy.id << " estimator=" << config.estimator_id << " seed="
            << config.seed.value << " workers=" << config.workers << "\n";
        log << "env=" << config.env.type << " n_episodes=" << config.dataset.n_episodes << " n_ahs="
            << table.n_ahs() << " n_splits=" << table.n_splits() << "\n";
        int undefined_total = 0;
        for (int u : table.n_undefined) undefined_total += u;
        log << "undefined_cells=" << undefined_total << "\n";
        log << "chosen=" << result.summary.chosen_label << " aggregate=" << format_g17(result.summary.aggregate)
            << "\n";
        log << "true_value=" << format_g17(*result.summary.true_value);
        if (result.true_value_se.has_value()) {
            log << " se=" << format_g17(*result.true_value_se) << " (mc, " << config.mc_episodes << " episodes)";
        } else {
            log << " (exact dp)";
        }
        log << "\n";
        log << "wall_time_seconds=" << format_g17(report.wall_time) << "\n";
        if (!log) throw std::runtime_error("write failed for " + log_path);
    }

    guard.committed = true;
    result.report = std::move(report);
    result.artifact_paths = std::move(targets);
    return result;
}

inline std::vector<std::string> write_generated_data(const ExperimentConfig& config, const std::string& out_dir,
                                                     bool force) {
    namespace fs = std::filesystem;
    if (out_dir.empty()) throw std::runtime_error("gen-data: no output directory configured");
    fs::create_directories(out_dir);
    const std::string dataset_path = (fs::path(out_dir) / "dataset.csv").string();
    const std::string aux_path = dataset_path + ".aux.csv";
    std::vector<std::string> targets = {dataset_path, dataset_meta_path(dataset_path)};
    if (config.env.type == "tutorbot") targets.push_back(aux_path);
    detail::require_writable(targets, force);

    detail::ArtifactGuard guard;
    GeneratedData data = generate_dataset(config);
    guard.track(dataset_path);
    guard.track(dataset_meta_path(dataset_path));
    write_dataset_csv(data.dataset, dataset_path);
    if (config.env.type == "tutorbot") {
        guard.track(aux_path);
        write_tutorbot_aux(data.aux, aux_path);
    }
    guard.committed = true;
    return targets;
}

}  // namespace ssr
