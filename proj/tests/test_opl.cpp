#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssr/envs.hpp"
#include "ssr/learners.hpp"
#include "ssr/opl.hpp"

using namespace ssr;

namespace {

Step make_step(int s, int a, double r, int ns, double prop = 0.5) {
    Step out;
    out.state = s;
    out.action = a;
    out.reward = r;
    out.next_state = ns;
    out.behavior_propensity = prop;
    return out;
}

Dataset random_small_dataset(int n_states, int n_actions, int n_traj, int len, RngSeed seed) {
    Rng rng(seed);
    Dataset d;
    d.gamma = 1.0;
    d.n_states = n_states;
    d.n_actions = n_actions;
    for (int i = 0; i < n_traj; ++i) {
        Trajectory t;
        int s = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_states)));
        for (int j = 0; j < len; ++j) {
            int a = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_actions)));
            int ns = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_states)));
            t.steps.push_back(make_step(s, a, rng.uniform_real(-1.0, 1.0), ns, 1.0 / n_actions));
            s = ns;
        }
        d.trajectories.push_back(std::move(t));
    }
    return d;
}

}  // namespace

TEST_CASE("horizon planner separates the chain exactly at h = H") {
    TabularEnv env = make_chain_env();
    MleModel model = exact_model(env);
    for (int h = 1; h < env.horizon; ++h) {
        TabularPolicy policy = plan_horizon_h(model, h, env.horizon);
        REQUIRE(std::abs(exact_policy_value(env, policy) - 1.0) < 1e-9);
    }
    TabularPolicy full = plan_horizon_h(model, env.horizon, env.horizon);
    REQUIRE(std::abs(exact_policy_value(env, full) - 201.0) < 1e-9);
    REQUIRE(full.prob(0, 1) == 1.0);
    REQUIRE_THROWS_AS(plan_horizon_h(model, 0, env.horizon), std::invalid_argument);
    REQUIRE_THROWS_AS(plan_horizon_h(model, env.horizon + 1, env.horizon), std::invalid_argument);
}

TEST_CASE("short lookahead is myopic, long lookahead climbs") {
    // With h=2 the planner sees one step of value ahead: from s_0 dwelling
    // looks best; with h=H the distant big reward dominates.
    TabularEnv env = make_chain_env();
    MleModel model = exact_model(env);
    TabularPolicy myopic = plan_horizon_h(model, 2, env.horizon);
    REQUIRE(myopic.prob(0, 0) == 1.0);
    TabularPolicy far = plan_horizon_h(model, env.horizon, env.horizon);
    for (int s = 0; s < env.n_states; ++s) REQUIRE(far.prob(s, 1) == 1.0);
}

TEST_CASE("planner restricted to observed actions") {
    TabularEnv env = make_chain_env();
    Dataset d;
    d.gamma = 1.0;
    d.n_states = env.n_states;
    d.n_actions = env.n_actions;
    Trajectory t;
    int s = 0;
    for (int i = 0; i < env.horizon; ++i) {
        t.steps.push_back(make_step(s, 0, s == 0 ? env.reward[0] : 0.0, std::max(s - 1, 0)));
        s = std::max(s - 1, 0);
    }
    d.trajectories = {t};
    MleModel model = fit_mle_mdp(d);
    LearnDiagnostics diag;
    TabularPolicy policy = plan_horizon_h(model, env.horizon, env.horizon, &diag);
    REQUIRE(policy.prob(0, 0) == 1.0);
    REQUIRE(diag.uniform_fallback_states.size() == 5);
    REQUIRE(policy.prob(3, 0) == 0.5);
}

TEST_CASE("bc thresholds rare actions strictly") {
    Dataset d;
    d.gamma = 1.0;
    d.n_states = 1;
    d.n_actions = 2;
    for (int i = 0; i < 25; ++i) {
        Trajectory t;
        t.steps = {make_step(0, i == 0 ? 0 : 1, 0.0, 0)};
        d.trajectories.push_back(std::move(t));
    }
    TabularPolicy loose = fit_bc(d, 0.0);
    REQUIRE(loose.prob(0, 0) == Catch::Approx(0.04));
    REQUIRE(loose.prob(0, 1) == Catch::Approx(0.96));
    TabularPolicy strict = fit_bc(d, 0.05);
    REQUIRE(strict.prob(0, 0) == 0.0);
    REQUIRE(strict.prob(0, 1) == 1.0);
    TabularPolicy at_threshold = fit_bc(d, 0.04);
    REQUIRE(at_threshold.prob(0, 0) == Catch::Approx(0.04));
}

TEST_CASE("bc ignores a threshold that wipes out every action") {
    Dataset d;
    d.gamma = 1.0;
    d.n_states = 2;
    d.n_actions = 2;
    Trajectory t1;
    t1.steps = {make_step(0, 0, 0.0, 0)};
    Trajectory t2;
    t2.steps = {make_step(0, 1, 0.0, 0)};
    d.trajectories = {t1, t2};
    LearnDiagnostics diag;
    TabularPolicy policy = fit_bc(d, 0.6, &diag);
    REQUIRE(policy.prob(0, 0) == Catch::Approx(0.5));
    REQUIRE(policy.prob(0, 1) == Catch::Approx(0.5));
    REQUIRE(diag.threshold_ignored_states == std::vector<int>{0});
    REQUIRE(diag.uniform_fallback_states == std::vector<int>{1});
    REQUIRE(policy.prob(1, 0) == Catch::Approx(0.5));
    REQUIRE_THROWS_AS(fit_bc(d, 1.0), std::invalid_argument);
}

TEST_CASE("bcq with delta 0 plans over observed pairs") {
    TabularEnv env = make_chain_env();
    Dataset d = build_expected_composition_chain_dataset(env, 400, RngSeed{12});
    auto [policy, q] = fit_bcq_tabular(d, 0.0, 1.0, 50, RngSeed{1});
    // gamma=1 value iteration on the dwell chain diverges toward the big
    // endpoint; the greedy policy should climb everywhere it can.
    REQUIRE(policy.prob(0, 1) == 1.0);
    REQUIRE(q.values[5][1] > q.values[0][0]);
}

TEST_CASE("bcq with a high threshold admits nothing on balanced data") {
    TabularEnv env = make_chain_env();
    Dataset d = rollout(env, uniform_behavior_policy(env), 300, RngSeed{13});
    LearnDiagnostics diag;
    auto [policy, q] = fit_bcq_tabular(d, 0.9, 1.0, 25, RngSeed{2}, &diag);
    for (const auto& row : q.values) {
        for (double v : row) REQUIRE(v == 0.0);
    }
    for (int s = 0; s < 6; ++s) REQUIRE(policy.prob(s, 0) == Catch::Approx(0.5));
    REQUIRE_FALSE(diag.uniform_fallback_states.empty());
}

TEST_CASE("mbs with count_beta 1 is bcq") {
    Dataset d = random_small_dataset(4, 2, 30, 5, RngSeed{44});
    auto [bp, bq] = fit_bcq_tabular(d, 0.1, 0.9, 60, RngSeed{3});
    auto [mp, mq] = fit_mbs_tabular(d, 0.1, 1, 0.9, 60);
    REQUIRE(bp.probs == mp.probs);
    REQUIRE(bq.values == mq.values);
    REQUIRE_THROWS_AS(fit_mbs_tabular(d, 0.1, 0, 0.9, 10), std::invalid_argument);
}

TEST_CASE("mbs with an unreachable count threshold collapses to immediate reward") {
    Dataset d = random_small_dataset(3, 2, 20, 4, RngSeed{45});
    MleModel model = fit_mle_mdp(d);
    int max_count = 0;
    for (const auto& row : model.count_sa) {
        for (int c : row) max_count = std::max(max_count, c);
    }
    auto [policy, q] = fit_mbs_tabular(d, 0.0, max_count + 1, 0.9, 40);
    for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 2; ++a) {
            if (model.observed(s, a)) {
                REQUIRE(q.values[s][a] == Catch::Approx(model.reward_sa[s][a]).margin(1e-12));
            } else {
                REQUIRE(q.values[s][a] == 0.0);
            }
        }
    }
}

TEST_CASE("hoeffding penalty value") {
    REQUIRE(pmdp_epsilon(8, 1.0, 0.1) == Catch::Approx(0.7587135646925732).margin(1e-12));
    REQUIRE(pmdp_epsilon(8, 0.0, 0.1) == 0.0);
    REQUIRE(std::isinf(pmdp_epsilon(0, 1.0, 0.1)));
    REQUIRE(pmdp_epsilon(32, 1.0, 0.1) == Catch::Approx(0.7587135646925732 / 2.0).margin(1e-12));
}

TEST_CASE("penalized rewards never exceed the clamped mle table") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        Dataset d = random_small_dataset(4, 3, 15, 4, RngSeed{100 + trial});
        MleModel model = fit_mle_mdp(d);
        for (double beta : {0.0, 0.1, 0.5, 1.0}) {
            auto table = pmdp_penalized_rewards(d, beta, 0.1);
            for (int s = 0; s < 4; ++s) {
                for (int a = 0; a < 3; ++a) {
                    double clamped = std::clamp(model.reward_sa[s][a], -1.0, 1.0);
                    if (!model.observed(s, a)) {
                        REQUIRE(table[s][a] == -1.0);
                        continue;
                    }
                    REQUIRE(table[s][a] <= clamped + 1e-15);
                    if (beta == 0.0) {
                        REQUIRE(table[s][a] == clamped);
                    } else if (table[s][a] == clamped) {
                        REQUIRE((clamped == -1.0 || clamped == 1.0));
                    }
                }
            }
        }
    }
}

TEST_CASE("pmdp ensemble is deterministic and produces valid softmax policies") {
    Dataset d = random_small_dataset(4, 2, 24, 5, RngSeed{71});
    TabularPolicy a = fit_pmdp_ensemble(d, 3, 0.5, 0.1, 0.25, 30, RngSeed{9});
    TabularPolicy b = fit_pmdp_ensemble(d, 3, 0.5, 0.1, 0.25, 30, RngSeed{9});
    REQUIRE(a.probs == b.probs);
    REQUIRE_NOTHROW(validate_policy(a));
    TabularPolicy c = fit_pmdp_ensemble(d, 3, 0.5, 0.1, 0.25, 30, RngSeed{10});
    bool same = a.probs == c.probs;
    REQUIRE_FALSE(same);
}

TEST_CASE("pmdp flags never-observed pairs") {
    Dataset d;
    d.gamma = 0.9;
    d.n_states = 2;
    d.n_actions = 2;
    Trajectory t;
    t.steps = {make_step(0, 0, 0.5, 1), make_step(1, 0, 0.5, 0)};
    d.trajectories.assign(40, t);
    LearnDiagnostics diag;
    TabularPolicy policy = fit_pmdp_ensemble(d, 2, 1.0, 0.1, 0.1, 20, RngSeed{4}, &diag);
    REQUIRE(diag.max_penalty_pairs.size() == 2);
    // Action 1 was never seen, so its Q sits pinned at -1 while the observed
    // action keeps a positive penalized value; the cold softmax is near-greedy.
    REQUIRE(policy.prob(0, 0) > 0.99);
    REQUIRE(policy.prob(1, 0) > 0.99);
}

TEST_CASE("pois analytic gradient matches central differences") {
    Rng rng(RngSeed{55});
    for (int instance = 0; instance < 20; ++instance) {
        Dataset d = random_small_dataset(3, 2, 20, 4, RngSeed{500 + static_cast<std::uint64_t>(instance)});
        std::vector<std::vector<double>> theta(3, std::vector<double>(2, 0.0));
        for (auto& row : theta) {
            for (double& v : row) v = rng.uniform_real(-1.0, 1.0);
        }
        std::vector<std::vector<bool>> mask(3, std::vector<bool>(2, true));
        if (instance % 3 == 0) mask[1][0] = false;
        const double lambda = instance % 2 == 0 ? 0.0 : 0.5;
        const auto objective = instance % 2 == 0 ? PoisObjective::IS : PoisObjective::WIS;

        std::vector<std::size_t> all(d.trajectories.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        PoisEvaluation eval = pois_evaluate(d, all, theta, mask, lambda, objective);
        REQUIRE_FALSE(eval.all_zero_weights);

        const double h = 1e-5;
        double worst = 0.0;
        for (int s = 0; s < 3; ++s) {
            for (int a = 0; a < 2; ++a) {
                auto plus = theta;
                auto minus = theta;
                plus[s][a] += h;
                minus[s][a] -= h;
                double jp = pois_evaluate(d, all, plus, mask, lambda, objective).objective;
                double jm = pois_evaluate(d, all, minus, mask, lambda, objective).objective;
                double fd = (jp - jm) / (2.0 * h);
                double rel = std::abs(eval.gradient[s][a] - fd) / std::max(std::abs(fd), 1e-3);
                worst = std::max(worst, rel);
                if (!mask[s][a]) REQUIRE(eval.gradient[s][a] == 0.0);
            }
        }
        REQUIRE(worst <= 1e-4);
    }
}

TEST_CASE("pois ascent improves the objective") {
    Dataset d = random_small_dataset(3, 2, 40, 4, RngSeed{81});
    std::vector<std::size_t> all(d.trajectories.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::vector<bool>> mask(3, std::vector<bool>(2, true));
    std::vector<std::vector<double>> zeros(3, std::vector<double>(2, 0.0));
    double before = pois_evaluate(d, all, zeros, mask, 0.1, PoisObjective::WIS).objective;

    PoisParams params;
    params.lambda_ess = 0.1;
    params.learning_rate = 0.05;
    params.epochs = 60;
    TabularPolicy learned = fit_pois(d, params, PoisObjective::WIS, RngSeed{5});
    std::vector<std::vector<double>> recovered(3, std::vector<double>(2, 0.0));
    for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 2; ++a) recovered[s][a] = std::log(std::max(learned.prob(s, a), 1e-12));
    }
    double after = pois_evaluate(d, all, recovered, mask, 0.1, PoisObjective::WIS).objective;
    REQUIRE(after >= before - 1e-9);
}

TEST_CASE("pois support mask follows the bc threshold") {
    Dataset d;
    d.gamma = 1.0;
    d.n_states = 2;
    d.n_actions = 2;
    Trajectory t;
    t.steps = {make_step(0, 0, 0.0, 1), make_step(1, 1, 1.0, 0)};
    d.trajectories = {t, t};
    auto open = pois_support_mask(d, 0.0);
    for (const auto& row : open) {
        for (bool b : row) REQUIRE(b);
    }
    auto tight = pois_support_mask(d, 0.1);
    REQUIRE(tight[0][0]);
    REQUIRE_FALSE(tight[0][1]);
    REQUIRE_FALSE(tight[1][0]);
    REQUIRE(tight[1][1]);

    PoisParams params;
    params.safety_alpha = 0.1;
    params.epochs = 5;
    TabularPolicy policy = fit_pois(d, params, PoisObjective::IS, RngSeed{6});
    REQUIRE(policy.prob(0, 1) == 0.0);
    REQUIRE(policy.prob(1, 0) == 0.0);
    REQUIRE(policy.prob(0, 0) == 1.0);
}

TEST_CASE("pois minibatch path is deterministic") {
    Dataset d = random_small_dataset(3, 2, 30, 3, RngSeed{91});
    PoisParams params;
    params.minibatch_size = 7;
    params.epochs = 10;
    TabularPolicy a = fit_pois(d, params, PoisObjective::IS, RngSeed{7});
    TabularPolicy b = fit_pois(d, params, PoisObjective::IS, RngSeed{7});
    REQUIRE(a.probs == b.probs);
}

TEST_CASE("masked softmax") {
    std::vector<std::vector<double>> theta = {{1.0, 2.0, 3.0}, {0.0, 0.0, 0.0}};
    std::vector<std::vector<bool>> mask = {{true, false, true}, {false, false, false}};
    TabularPolicy policy = masked_softmax_policy(theta, mask);
    REQUIRE(policy.prob(0, 1) == 0.0);
    REQUIRE(policy.prob(0, 0) + policy.prob(0, 2) == Catch::Approx(1.0));
    REQUIRE(policy.prob(0, 2) / policy.prob(0, 0) == Catch::Approx(std::exp(2.0)));
    REQUIRE(policy.prob(1, 0) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("learner registry builds every algorithm") {
    TabularEnv env = make_chain_env();
    Dataset d = build_expected_composition_chain_dataset(env, 200, RngSeed{14});

    auto run = [&](const std::string& id, std::map<std::string, double> params) {
        AHSpec spec;
        spec.algorithm_id = id;
        spec.params = std::move(params);
        validate_ah(spec);
        return make_learner(spec)(d, RngSeed{20});
    };

    TabularPolicy planner = run("horizon-mle", {{"h", 6}});
    REQUIRE(exact_policy_value(env, planner) == Catch::Approx(201.0));
    REQUIRE_NOTHROW(validate_policy(run("bc", {{"safety_alpha", 0.05}})));
    REQUIRE_NOTHROW(validate_policy(run("bcq", {{"delta", 0.1}, {"n_iterations", 30}})));
    REQUIRE_NOTHROW(validate_policy(run("mbs-qi", {{"delta", 0.1}, {"count_beta", 2}, {"n_iterations", 30}})));
    REQUIRE_NOTHROW(validate_policy(run("pmdp", {{"n_ensembles", 2},
                                                 {"penalty_beta", 0.5},
                                                 {"confidence_delta", 0.1},
                                                 {"temperature", 0.5},
                                                 {"n_iterations", 20}})));
    REQUIRE_NOTHROW(validate_policy(run("pois", {{"learning_rate", 0.05},
                                                 {"epochs", 5},
                                                 {"lambda_ess", 0.1},
                                                 {"safety_alpha", 0.0},
                                                 {"minibatch", 0},
                                                 {"objective", 1}})));
    REQUIRE_NOTHROW(validate_policy(run("bc-pois", {{"learning_rate", 0.05},
                                                    {"epochs", 5},
                                                    {"lambda_ess", 0.1},
                                                    {"safety_alpha", 0.05},
                                                    {"minibatch", 0},
                                                    {"objective", 0}})));
    REQUIRE_NOTHROW(validate_policy(run("bc-mini-pois", {{"learning_rate", 0.05},
                                                         {"epochs", 5},
                                                         {"lambda_ess", 0.1},
                                                         {"safety_alpha", 0.05},
                                                         {"minibatch", 16},
                                                         {"objective", 1}})));
}

TEST_CASE("ah validation names the offending field") {
    AHSpec unknown;
    unknown.algorithm_id = "dqn";
    REQUIRE_THROWS_WITH(validate_ah(unknown), Catch::Matchers::ContainsSubstring("dqn"));

    AHSpec missing;
    missing.algorithm_id = "horizon-mle";
    REQUIRE_THROWS_WITH(validate_ah(missing), Catch::Matchers::ContainsSubstring("missing parameter 'h'"));

    AHSpec extra;
    extra.algorithm_id = "bc";
    extra.params["safety_alpha"] = 0.1;
    extra.params["bogus"] = 1.0;
    REQUIRE_THROWS_WITH(validate_ah(extra), Catch::Matchers::ContainsSubstring("bogus"));

    AHSpec fractional;
    fractional.algorithm_id = "horizon-mle";
    fractional.params["h"] = 2.5;
    REQUIRE_THROWS_WITH(validate_ah(fractional), Catch::Matchers::ContainsSubstring("integer"));

    AHSpec comma;
    comma.algorithm_id = "bc";
    comma.params["safety_alpha"] = 0.0;
    comma.display_label = "a,b";
    REQUIRE_THROWS_AS(validate_ah(comma), std::invalid_argument);
}
