#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/rng.hpp"

namespace ssr {

// Rewards live on states: a step collects R(s') only when it stays in place
// (s' == s), so dwelling in a rewarding state pays once per step and passing
// through pays nothing.
struct TabularEnv {
    int n_states = 0;
    int n_actions = 0;
    std::vector<std::vector<std::vector<double>>> transition;
    std::vector<double> reward;
    int horizon = 1;
    std::vector<double> initial_dist;
    double gamma = 1.0;
    std::string tag;
};

inline double step_reward(const TabularEnv& env, int state, int next_state) {
    return next_state == state ? env.reward[static_cast<std::size_t>(next_state)] : 0.0;
}

inline void validate_env(const TabularEnv& env) {
    if (env.n_states < 1 || env.n_actions < 1) throw std::invalid_argument("env: sizes must be positive");
    if (env.horizon < 1) throw std::invalid_argument("env: horizon must be >= 1");
    if (static_cast<int>(env.transition.size()) != env.n_states ||
        static_cast<int>(env.reward.size()) != env.n_states ||
        static_cast<int>(env.initial_dist.size()) != env.n_states) {
        throw std::invalid_argument("env: table sizes do not match n_states");
    }
    double d0 = 0.0;
    for (double p : env.initial_dist) d0 += p;
    if (std::abs(d0 - 1.0) > 1e-9) throw std::invalid_argument("env: initial_dist does not sum to 1");
    for (int s = 0; s < env.n_states; ++s) {
        if (static_cast<int>(env.transition[static_cast<std::size_t>(s)].size()) != env.n_actions) {
            throw std::invalid_argument("env: transition row count mismatch");
        }
        for (int a = 0; a < env.n_actions; ++a) {
            const auto& row = env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
            if (static_cast<int>(row.size()) != env.n_states) throw std::invalid_argument("env: transition width mismatch");
            double sum = std::accumulate(row.begin(), row.end(), 0.0);
            if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("env: transition row does not sum to 1");
        }
    }
}

struct ChainConfig {
    int H = 6;
    double low_reward = 1.0 / 6.0;
    double high_reward = 201.0;
};

// Deterministic chain over states s_0..s_{H-1}: action 0 steps down (floor at
// s_0), action 1 steps up (ceiling at s_{H-1}). Only the endpoints carry
// reward, so the all-up trajectory earns high_reward exactly once, at its
// final (dwelling) step, and always-down earns H * low_reward.
inline TabularEnv make_chain_env(const ChainConfig& config = {}) {
    if (config.H < 2) throw std::invalid_argument("make_chain_env: H must be >= 2");
    TabularEnv env;
    env.n_states = config.H;
    env.n_actions = 2;
    env.horizon = config.H;
    env.tag = "chain";
    env.reward.assign(static_cast<std::size_t>(env.n_states), 0.0);
    env.reward.front() = config.low_reward;
    env.reward.back() = config.high_reward;
    env.initial_dist.assign(static_cast<std::size_t>(env.n_states), 0.0);
    env.initial_dist.front() = 1.0;
    env.transition.assign(static_cast<std::size_t>(env.n_states),
                          std::vector<std::vector<double>>(2, std::vector<double>(static_cast<std::size_t>(env.n_states), 0.0)));
    for (int s = 0; s < env.n_states; ++s) {
        int down = std::max(s - 1, 0);
        int up = std::min(s + 1, env.n_states - 1);
        env.transition[static_cast<std::size_t>(s)][0][static_cast<std::size_t>(down)] = 1.0;
        env.transition[static_cast<std::size_t>(s)][1][static_cast<std::size_t>(up)] = 1.0;
    }
    return env;
}

inline TabularPolicy uniform_behavior_policy(const TabularEnv& env) {
    return make_uniform_policy(env.n_states, env.n_actions);
}

inline Dataset rollout(const TabularEnv& env, const TabularPolicy& policy, int n_episodes, RngSeed seed) {
    if (policy.n_states() != env.n_states || policy.n_actions() != env.n_actions) {
        throw std::invalid_argument("rollout: policy dimensions do not match env");
    }
    if (n_episodes < 1) throw std::invalid_argument("rollout: n_episodes must be positive");
    Dataset dataset;
    dataset.gamma = env.gamma;
    dataset.n_states = env.n_states;
    dataset.n_actions = env.n_actions;
    dataset.env_tag = env.tag;
    dataset.trajectories.reserve(static_cast<std::size_t>(n_episodes));
    for (int e = 0; e < n_episodes; ++e) {
        Rng rng(derive(seed, "episode", static_cast<std::uint64_t>(e)));
        Trajectory traj;
        traj.steps.reserve(static_cast<std::size_t>(env.horizon));
        int state = rng.categorical(env.initial_dist);
        for (int t = 0; t < env.horizon; ++t) {
            int action = rng.categorical(policy.probs[static_cast<std::size_t>(state)]);
            int next = rng.categorical(env.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(action)]);
            Step s;
            s.state = state;
            s.action = action;
            s.reward = step_reward(env, state, next);
            s.next_state = next;
            s.behavior_propensity = policy.prob(state, action);
            traj.steps.push_back(s);
            state = next;
        }
        dataset.trajectories.push_back(std::move(traj));
    }
    return dataset;
}

namespace detail {

// Walk a deterministic env under a fixed action sequence (chain datasets).
inline Trajectory chain_trajectory(const TabularEnv& env, std::uint64_t action_bits) {
    Trajectory traj;
    traj.steps.reserve(static_cast<std::size_t>(env.horizon));
    int state = 0;
    for (int t = 0; t < env.horizon; ++t) {
        int action = static_cast<int>((action_bits >> t) & 1u);
        const auto& row = env.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(action)];
        int next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        Step s;
        s.state = state;
        s.action = action;
        s.reward = step_reward(env, state, next);
        s.next_state = next;
        s.behavior_propensity = 0.5;
        traj.steps.push_back(s);
        state = next;
    }
    return traj;
}

}  // namespace detail

// Deterministic stand-in for a uniform-behavior rollout: the all-up sequence
// appears exactly round(n / 2^H) times (its expected count), the rest are
// drawn uniformly from the other 2^H - 1 action sequences, then shuffled.
inline Dataset build_expected_composition_chain_dataset(const TabularEnv& env, int n_episodes, RngSeed seed) {
    if (env.tag != "chain" || env.n_actions != 2) {
        throw std::invalid_argument("build_expected_composition_chain_dataset: requires a chain env");
    }
    if (env.horizon < 2 || env.horizon > 30) throw std::invalid_argument("chain horizon out of supported range");
    if (n_episodes < 1) throw std::invalid_argument("n_episodes must be positive");
    const std::uint64_t n_sequences = std::uint64_t{1} << env.horizon;
    const std::uint64_t tau_h = n_sequences - 1;
    const int n_copies = static_cast<int>(std::llround(static_cast<double>(n_episodes) / static_cast<double>(n_sequences)));
    if (n_copies > n_episodes) throw std::invalid_argument("n_copies exceeds n_episodes");

    std::vector<std::uint64_t> patterns;
    patterns.reserve(static_cast<std::size_t>(n_episodes));
    for (int i = 0; i < n_copies; ++i) patterns.push_back(tau_h);
    Rng rng(derive(seed, "composition"));
    for (int i = n_copies; i < n_episodes; ++i) {
        patterns.push_back(rng.uniform_int(static_cast<std::uint64_t>(n_sequences - 1)));
    }
    rng.shuffle(patterns);

    Dataset dataset;
    dataset.gamma = env.gamma;
    dataset.n_states = env.n_states;
    dataset.n_actions = env.n_actions;
    dataset.env_tag = env.tag;
    dataset.trajectories.reserve(patterns.size());
    for (std::uint64_t bits : patterns) dataset.trajectories.push_back(detail::chain_trajectory(env, bits));
    return dataset;
}

inline TabularEnv make_random_mdp(int n_states, int n_actions, int horizon, double reward_sparsity, RngSeed seed) {
    if (n_states < 1 || n_actions < 1) throw std::invalid_argument("make_random_mdp: sizes must be positive");
    if (horizon < 1) throw std::invalid_argument("make_random_mdp: horizon must be >= 1");
    if (reward_sparsity < 0.0 || reward_sparsity > 1.0) throw std::invalid_argument("reward_sparsity must be in [0,1]");
    TabularEnv env;
    env.n_states = n_states;
    env.n_actions = n_actions;
    env.horizon = horizon;
    env.tag = "random-mdp";
    env.initial_dist.assign(static_cast<std::size_t>(n_states), 1.0 / n_states);
    env.transition.assign(static_cast<std::size_t>(n_states),
                          std::vector<std::vector<double>>(static_cast<std::size_t>(n_actions),
                                                           std::vector<double>(static_cast<std::size_t>(n_states), 0.0)));
    Rng rng(derive(seed, "random-mdp"));
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            auto& row = env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
            double total = 0.0;
            for (int k = 0; k < n_states; ++k) {
                double g = -std::log(1.0 - rng.uniform01());
                row[static_cast<std::size_t>(k)] = g;
                total += g;
            }
            for (double& p : row) p /= total;
        }
    }
    env.reward.assign(static_cast<std::size_t>(n_states), 0.0);
    int n_rewarded = static_cast<int>(std::llround(reward_sparsity * n_states));
    std::vector<int> order(static_cast<std::size_t>(n_states));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int i = 0; i < n_rewarded; ++i) {
        env.reward[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = rng.uniform_real(0.1, 1.0);
    }
    return env;
}

// Finite-horizon policy value from the initial distribution, by backward DP.
inline double exact_policy_value(const TabularEnv& env, const TabularPolicy& policy) {
    if (policy.n_states() != env.n_states || policy.n_actions() != env.n_actions) {
        throw std::invalid_argument("exact_policy_value: policy dimensions do not match env");
    }
    std::vector<double> v(static_cast<std::size_t>(env.n_states), 0.0);
    for (int t = env.horizon - 1; t >= 0; --t) {
        std::vector<double> next(static_cast<std::size_t>(env.n_states), 0.0);
        for (int s = 0; s < env.n_states; ++s) {
            double total = 0.0;
            for (int a = 0; a < env.n_actions; ++a) {
                double pa = policy.prob(s, a);
                if (pa == 0.0) continue;
                const auto& row = env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                double inner = 0.0;
                for (int k = 0; k < env.n_states; ++k) {
                    double p = row[static_cast<std::size_t>(k)];
                    if (p == 0.0) continue;
                    inner += p * (step_reward(env, s, k) + env.gamma * v[static_cast<std::size_t>(k)]);
                }
                total += pa * inner;
            }
            next[static_cast<std::size_t>(s)] = total;
        }
        v = std::move(next);
    }
    double value = 0.0;
    for (int s = 0; s < env.n_states; ++s) value += env.initial_dist[static_cast<std::size_t>(s)] * v[static_cast<std::size_t>(s)];
    return value;
}

// Infinite-horizon optimal Q by value iteration on the true model.
inline TabularQ optimal_q_value_iteration(const TabularEnv& env, double gamma, int n_iterations) {
    TabularQ q;
    q.values.assign(static_cast<std::size_t>(env.n_states),
                    std::vector<double>(static_cast<std::size_t>(env.n_actions), 0.0));
    for (int it = 0; it < n_iterations; ++it) {
        TabularQ next = q;
        for (int s = 0; s < env.n_states; ++s) {
            for (int a = 0; a < env.n_actions; ++a) {
                const auto& row = env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                double total = 0.0;
                for (int k = 0; k < env.n_states; ++k) {
                    double p = row[static_cast<std::size_t>(k)];
                    if (p == 0.0) continue;
                    const auto& qrow = q.values[static_cast<std::size_t>(k)];
                    double best = *std::max_element(qrow.begin(), qrow.end());
                    total += p * (step_reward(env, s, k) + gamma * best);
                }
                next.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = total;
            }
        }
        q = std::move(next);
    }
    return q;
}

}  // namespace ssr
