#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ssr/experiment.hpp"

using namespace ssr;
using Catch::Matchers::ContainsSubstring;

namespace {

nlohmann::json parse_json(const std::string& text) { return nlohmann::json::parse(text); }

ExperimentConfig config_from(const std::string& text) { return parse_experiment_config(parse_json(text)); }

std::string fresh_dir(const std::string& name) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "ssr_test_experiment" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void require_datasets_equal(const Dataset& a, const Dataset& b) {
    REQUIRE(a.gamma == b.gamma);
    REQUIRE(a.n_states == b.n_states);
    REQUIRE(a.n_actions == b.n_actions);
    REQUIRE(a.env_tag == b.env_tag);
    REQUIRE(a.trajectories.size() == b.trajectories.size());
    for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
        const auto& ta = a.trajectories[i].steps;
        const auto& tb = b.trajectories[i].steps;
        REQUIRE(ta.size() == tb.size());
        for (std::size_t t = 0; t < ta.size(); ++t) {
            REQUIRE(ta[t].state == tb[t].state);
            REQUIRE(ta[t].action == tb[t].action);
            REQUIRE(ta[t].reward == tb[t].reward);
            REQUIRE(ta[t].next_state == tb[t].next_state);
            REQUIRE(ta[t].behavior_propensity == tb[t].behavior_propensity);
        }
    }
}

const char* kChainRunConfig = R"cfg({
    "seed": 5,
    "env": {"type": "chain"},
    "dataset": {"n_episodes": 60, "expected_composition": true},
    "ahs": [{"id": "horizon-mle", "params": {"h": [1, 2, 6]}}],
    "estimator": "is",
    "strategy": {"id": "rrs", "K": 3}
})cfg";

}  // namespace

TEST_CASE("config defaults fill every field") {
    ExperimentConfig c = config_from(R"({"ahs": [{"id": "horizon-mle", "params": {"h": 1}}]})");
    REQUIRE(c.seed.value == 0);
    REQUIRE(c.env.type == "chain");
    REQUIRE(c.dataset.n_episodes == 200);
    REQUIRE_FALSE(c.dataset.expected_composition);
    REQUIRE(c.ahs.size() == 1);
    REQUIRE(c.estimator_id == "wis");
    REQUIRE(c.strategy.id == "rrs");
    REQUIRE(c.strategy.K == 5);
    REQUIRE(c.strategy.ratio == 0.5);
    REQUIRE(c.grid_cap == 1000);
    REQUIRE(c.mc_episodes == 100000);
    REQUIRE(c.workers == 1);
    REQUIRE(c.out_dir.empty());
}

TEST_CASE("config parses every documented knob") {
    ExperimentConfig c = config_from(R"cfg({
        "seed": 42,
        "env": {"type": "random-mdp", "n_states": 5, "n_actions": 3, "horizon": 7, "sparsity": 0.6},
        "dataset": {"n_episodes": 80},
        "ahs": [
            {"id": "bc", "params": {"safety_alpha": 0.1}, "label": "cautious"},
            {"id": "bcq", "params": {"delta": [0.1, 0.2], "n_iterations": [10, 20]}}
        ],
        "estimator": {"id": "is-clip", "clip_max": 50, "fqe_iterations": 3},
        "strategy": {"id": "bca", "B": 100, "mode": "upper", "confidence": 0.8, "ratio": 0.25},
        "grid_cap": 50,
        "mc_episodes": 2000,
        "workers": 4,
        "out": "/tmp/nowhere"
    })cfg");
    REQUIRE(c.seed.value == 42);
    REQUIRE(c.env.type == "random-mdp");
    REQUIRE(c.env.rmdp_n_states == 5);
    REQUIRE(c.env.rmdp_n_actions == 3);
    REQUIRE(c.env.rmdp_horizon == 7);
    REQUIRE(c.env.rmdp_sparsity == 0.6);
    REQUIRE(c.dataset.n_episodes == 80);
    REQUIRE(c.ahs.size() == 5);
    REQUIRE(c.ahs[0].display_label == "cautious");
    REQUIRE(c.estimator_id == "is-clip");
    REQUIRE(c.estimator_options.clip_max == 50.0);
    REQUIRE(c.estimator_options.fqe_iterations == 3);
    REQUIRE(c.strategy.id == "bca");
    REQUIRE(c.strategy.B == 100);
    REQUIRE(c.strategy.mode == "upper");
    REQUIRE(c.strategy.confidence == 0.8);
    REQUIRE(c.strategy.ratio == 0.25);
    REQUIRE(c.grid_cap == 50);
    REQUIRE(c.mc_episodes == 2000);
    REQUIRE(c.workers == 4);
    REQUIRE(c.out_dir == "/tmp/nowhere");

    AHSpec first;
    first.algorithm_id = "bcq";
    first.params = {{"delta", 0.1}, {"n_iterations", 10.0}};
    REQUIRE(ah_label(c.ahs[1]) == ah_label(first));
    AHSpec last;
    last.algorithm_id = "bcq";
    last.params = {{"delta", 0.2}, {"n_iterations", 20.0}};
    REQUIRE(ah_label(c.ahs[4]) == ah_label(last));
}

TEST_CASE("config errors carry the offending path") {
    const std::string ahs = R"("ahs": [{"id": "horizon-mle", "params": {"h": 1}}])";
    REQUIRE_THROWS_WITH(config_from(R"({"bogus": 1, )" + ahs + "}"),
                        ContainsSubstring("config error at /bogus") && ContainsSubstring("unknown key"));
    REQUIRE_THROWS_WITH(config_from(R"({"seed": -1, )" + ahs + "}"),
                        ContainsSubstring("/seed") && ContainsSubstring("expected a nonnegative integer"));
    REQUIRE_THROWS_WITH(config_from(R"({"strategy": {"id": "rrs", "K": 0}, )" + ahs + "}"),
                        ContainsSubstring("/strategy/K") && ContainsSubstring("positive integer"));
    REQUIRE_THROWS_WITH(config_from(R"({"strategy": "loocv", )" + ahs + "}"),
                        ContainsSubstring("unknown strategy 'loocv'") && ContainsSubstring("nested-cv"));
    REQUIRE_THROWS_WITH(config_from(R"({"strategy": {"id": "cv", "M": 1}, )" + ahs + "}"),
                        ContainsSubstring("/strategy/M") && ContainsSubstring("at least 2 folds"));
    REQUIRE_THROWS_WITH(config_from(R"({"estimator": "psis", )" + ahs + "}"),
                        ContainsSubstring("unknown estimator 'psis'") && ContainsSubstring("wis"));
    REQUIRE_THROWS_WITH(config_from(R"({"estimator": {"id": "is", "clip_max": 0}, )" + ahs + "}"),
                        ContainsSubstring("/estimator/clip_max") && ContainsSubstring("positive value"));
    REQUIRE_THROWS_WITH(config_from(R"({"env": {"type": "gridworld"}, )" + ahs + "}"),
                        ContainsSubstring("unknown environment 'gridworld'") && ContainsSubstring("tutorbot"));
    REQUIRE_THROWS_WITH(
        config_from(R"({"env": {"type": "random-mdp"}, "dataset": {"expected_composition": true}, )" + ahs + "}"),
        ContainsSubstring("/dataset/expected_composition") && ContainsSubstring("chain environment"));
    REQUIRE_THROWS_WITH(config_from(R"({"dataset": {"behavior": [0.2, 0.3, 0.5]}, )" + ahs + "}"),
                        ContainsSubstring("/dataset/behavior") && ContainsSubstring("tutorbot environment"));
    REQUIRE_THROWS_WITH(config_from(R"({"seed": 1})"),
                        ContainsSubstring("config error at /ahs") && ContainsSubstring("missing key"));
}

TEST_CASE("ah grid validation") {
    REQUIRE_THROWS_WITH(
        config_from(R"({"grid_cap": 3,
                        "ahs": [{"id": "bcq", "params": {"delta": [0.1, 0.2], "n_iterations": [10, 20]}}]})"),
        ContainsSubstring("grid expansion exceeds the cap of 3"));
    REQUIRE_THROWS_WITH(config_from(R"({"ahs": [{"id": "bc", "params": {"safety_alpha": 0.1}},
                                                {"id": "bc", "params": {"safety_alpha": 0.1}}]})"),
                        ContainsSubstring("/ahs/1") && ContainsSubstring("duplicate AH label"));
    REQUIRE_THROWS_WITH(
        config_from(R"({"ahs": [{"id": "horizon-mle", "params": {"h": [1, 2]}, "label": "named"}]})"),
        ContainsSubstring("/label") && ContainsSubstring("explicit label not allowed"));
    REQUIRE_THROWS_WITH(config_from(R"({"ahs": [{"id": "horizon-mle", "params": {"h": []}}]})"),
                        ContainsSubstring("/ahs/0/params/h") && ContainsSubstring("nonempty array"));
    REQUIRE_THROWS_WITH(config_from(R"({"ahs": [{"id": "dqn"}]})"), ContainsSubstring("unknown learner id 'dqn'"));
}

TEST_CASE("config loader reports invalid json files") {
    namespace fs = std::filesystem;
    const std::string dir = fresh_dir("badjson");
    const std::string path = (fs::path(dir) / "config.json").string();
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    REQUIRE_THROWS_WITH(load_experiment_config(path), ContainsSubstring("not valid JSON"));
    REQUIRE_THROWS_WITH(load_experiment_config(path + ".missing"), ContainsSubstring("cannot open"));
    fs::remove_all(fs::path(dir).parent_path());
}

TEST_CASE("dataset generation replays from the config seed") {
    ExperimentConfig chain = config_from(kChainRunConfig);
    GeneratedData a = generate_dataset(chain);
    GeneratedData b = generate_dataset(chain);
    require_datasets_equal(a.dataset, b.dataset);
    REQUIRE(a.dataset.size() == 60);
    REQUIRE(a.env.has_value());

    ExperimentConfig rmdp = config_from(
        R"({"seed": 9, "env": {"type": "random-mdp"}, "dataset": {"n_episodes": 30},
            "ahs": [{"id": "horizon-mle", "params": {"h": 1}}]})");
    GeneratedData ra = generate_dataset(rmdp);
    GeneratedData rb = generate_dataset(rmdp);
    require_datasets_equal(ra.dataset, rb.dataset);
    REQUIRE(ra.env->transition == rb.env->transition);
    REQUIRE(ra.env->reward == rb.env->reward);

    ExperimentConfig tb = config_from(
        R"({"seed": 9, "env": {"type": "tutorbot"}, "dataset": {"n_episodes": 25, "behavior": [0.2, 0.3, 0.5]},
            "ahs": [{"id": "bc", "params": {"safety_alpha": 0}}]})");
    GeneratedData ta = generate_dataset(tb);
    GeneratedData tbb = generate_dataset(tb);
    require_datasets_equal(ta.dataset, tbb.dataset);
    REQUIRE(ta.aux.size() == 25);
    REQUIRE_FALSE(ta.env.has_value());
    for (std::size_t e = 0; e < ta.aux.size(); ++e) {
        REQUIRE(ta.aux[e].size() == ta.dataset.trajectories[e].steps.size());
    }
}

TEST_CASE("strategy dispatch picks the advertised scheme") {
    ExperimentConfig c = config_from(
        R"({"seed": 3, "env": {"type": "chain"}, "dataset": {"n_episodes": 40},
            "ahs": [{"id": "horizon-mle", "params": {"h": 1}}]})");
    GeneratedData data = generate_dataset(c);

    auto tag_for = [&](const std::string& strategy_json) {
        ExperimentConfig variant = c;
        variant.strategy = detail::parse_strategy_spec(parse_json(strategy_json), "/strategy");
        return score_with_strategy(variant, data.dataset, 1).scheme_tag;
    };
    REQUIRE(tag_for(R"({"id": "rrs", "K": 3})") == "rrs");
    REQUIRE(tag_for(R"("one-split")") == "one-split");
    REQUIRE(tag_for(R"({"id": "cv", "M": 4})") == "kfold");
    REQUIRE(tag_for(R"({"id": "nested-cv", "K": 2})") == "nested-cv");
    REQUIRE(tag_for(R"({"id": "bca", "B": 8})") == "bca");
    REQUIRE(tag_for(R"({"id": "bvft"})") == "bvft");
}

TEST_CASE("run experiment writes byte-stable artifacts at any worker count") {
    namespace fs = std::filesystem;
    ExperimentConfig base = config_from(kChainRunConfig);

    ExperimentConfig run_a = base;
    run_a.out_dir = fresh_dir("run_a");
    ExperimentResult res_a = run_experiment(run_a);

    ExperimentConfig run_b = base;
    run_b.out_dir = fresh_dir("run_b");
    run_b.workers = 4;
    ExperimentResult res_b = run_experiment(run_b);

    for (const char* name : {"dataset.csv", "dataset.csv.meta.json", "scores.csv", "policy.csv", "summary.json"}) {
        const std::string pa = (fs::path(run_a.out_dir) / name).string();
        const std::string pb = (fs::path(run_b.out_dir) / name).string();
        INFO(name);
        REQUIRE(slurp(pa) == slurp(pb));
    }
    REQUIRE(ah_label(res_a.report.chosen) == ah_label(res_b.report.chosen));
    REQUIRE(res_a.summary.true_value.has_value());
    REQUIRE(res_a.summary.aggregate == res_b.summary.aggregate);
    REQUIRE_FALSE(res_a.true_value_se.has_value());

    const std::string log = slurp((fs::path(run_a.out_dir) / "run.log").string());
    REQUIRE_THAT(log, ContainsSubstring(std::string("ssr ") + kVersion));
    REQUIRE_THAT(log, ContainsSubstring("strategy=rrs estimator=is seed=5"));
    REQUIRE_THAT(log, ContainsSubstring("env=chain n_episodes=60 n_ahs=3 n_splits=3"));
    REQUIRE_THAT(log, ContainsSubstring("(exact dp)"));
    REQUIRE_THAT(log, ContainsSubstring("wall_time_seconds="));

    SECTION("rerunning the same directory needs force") {
        ExperimentConfig again = base;
        again.out_dir = run_a.out_dir;
        REQUIRE_THROWS_WITH(run_experiment(again), ContainsSubstring("already exists") &&
                                                       ContainsSubstring("--force"));
        ExperimentResult forced = run_experiment(again, true);
        REQUIRE(ah_label(forced.report.chosen) == ah_label(res_a.report.chosen));
    }
    fs::remove_all(fs::path(run_a.out_dir).parent_path());
}

TEST_CASE("one-split runs match rrs with a single repetition") {
    namespace fs = std::filesystem;
    ExperimentConfig base = config_from(kChainRunConfig);

    ExperimentConfig one = base;
    one.strategy = detail::parse_strategy_spec(parse_json(R"("one-split")"), "/strategy");
    one.out_dir = fresh_dir("one_split");
    ExperimentResult res_one = run_experiment(one);

    ExperimentConfig rrs1 = base;
    rrs1.strategy.K = 1;
    rrs1.out_dir = fresh_dir("rrs_one");
    ExperimentResult res_rrs = run_experiment(rrs1);

    REQUIRE(slurp((fs::path(one.out_dir) / "scores.csv").string()) ==
            slurp((fs::path(rrs1.out_dir) / "scores.csv").string()));
    REQUIRE(ah_label(res_one.report.chosen) == ah_label(res_rrs.report.chosen));
    fs::remove_all(fs::path(one.out_dir).parent_path());
}

TEST_CASE("failed selection cleans up its partial artifacts") {
    namespace fs = std::filesystem;
    ExperimentConfig c = config_from(kChainRunConfig);
    c.out_dir = fresh_dir("doomed");
    AHSpec hopeless;
    hopeless.algorithm_id = "bc";
    hopeless.params = {{"safety_alpha", 1.0}};
    c.ahs = {hopeless};
    REQUIRE_THROWS_AS(run_experiment(c), std::runtime_error);
    REQUIRE_FALSE(fs::exists(fs::path(c.out_dir) / "dataset.csv"));
    REQUIRE_FALSE(fs::exists(fs::path(c.out_dir) / "scores.csv"));
    REQUIRE_FALSE(fs::exists(fs::path(c.out_dir) / "summary.json"));
    fs::remove_all(fs::path(c.out_dir).parent_path());
}

TEST_CASE("tutorbot experiments estimate the deployed value by monte carlo") {
    namespace fs = std::filesystem;
    ExperimentConfig c = config_from(
        R"cfg({
            "seed": 11,
            "env": {"type": "tutorbot"},
            "dataset": {"n_episodes": 60, "behavior": [0.2, 0.3, 0.5]},
            "ahs": [{"id": "bc", "params": {"safety_alpha": 0}}],
            "estimator": "is",
            "strategy": "one-split",
            "mc_episodes": 400
        })cfg");
    c.out_dir = fresh_dir("tutorbot_run");
    ExperimentResult res = run_experiment(c);
    REQUIRE(fs::exists(fs::path(c.out_dir) / "dataset.csv.aux.csv"));
    REQUIRE(res.summary.true_value.has_value());
    REQUIRE(res.true_value_se.has_value());
    REQUIRE(*res.true_value_se > 0.0);
    REQUIRE(*res.summary.true_value > 0.5);
    REQUIRE(*res.summary.true_value < 2.5);

    const std::string log = slurp((fs::path(c.out_dir) / "run.log").string());
    REQUIRE_THAT(log, ContainsSubstring("(mc, 400 episodes)"));
    REQUIRE_THAT(log, ContainsSubstring("env=tutorbot"));

    const std::string summary = slurp((fs::path(c.out_dir) / "summary.json").string());
    nlohmann::json parsed = nlohmann::json::parse(summary);
    REQUIRE(parsed.contains("true_value"));
    REQUIRE(parsed["strategy"] == "one-split");
    REQUIRE(parsed["estimator"] == "is");
    fs::remove_all(fs::path(c.out_dir).parent_path());
}

TEST_CASE("gen-data writes just the dataset artifacts") {
    namespace fs = std::filesystem;
    ExperimentConfig c = config_from(kChainRunConfig);
    const std::string dir = fresh_dir("gendata");
    auto targets = write_generated_data(c, dir, false);
    REQUIRE(targets.size() == 2);
    for (const auto& path : targets) REQUIRE(fs::exists(path));
    REQUIRE_FALSE(fs::exists(fs::path(dir) / "scores.csv"));
    REQUIRE_THROWS_WITH(write_generated_data(c, dir, false), ContainsSubstring("already exists"));
    auto again = write_generated_data(c, dir, true);
    REQUIRE(again.size() == 2);

    Dataset loaded = load_dataset_csv((fs::path(dir) / "dataset.csv").string());
    require_datasets_equal(loaded, generate_dataset(c).dataset);
    fs::remove_all(fs::path(dir).parent_path());
}
