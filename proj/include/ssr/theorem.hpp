#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/envs.hpp"
#include "ssr/mle.hpp"
#include "ssr/ope.hpp"
#include "ssr/opl.hpp"
#include "ssr/parallel.hpp"
#include "ssr/select.hpp"
#include "ssr/stats.hpp"

namespace ssr {

enum class PartitionModel { Hypergeometric, Uniform };

// Distribution of how many of the n_copies special trajectories land in the
// train half of an even split. Hypergeometric is the exact law; the uniform
// mode spreads mass equally over the n_copies+1 outcomes.
inline std::vector<double> partition_distribution(int n_copies, int n_total,
                                                  PartitionModel model = PartitionModel::Hypergeometric) {
    if (n_total < 2 || n_total % 2 != 0) throw std::invalid_argument("partition_distribution: n_total must be even");
    if (n_copies < 0 || n_copies > n_total / 2) {
        throw std::invalid_argument("partition_distribution: need 0 <= n_copies <= n_total/2");
    }
    std::vector<double> p(static_cast<std::size_t>(n_copies) + 1, 0.0);
    if (model == PartitionModel::Uniform) {
        std::fill(p.begin(), p.end(), 1.0 / (n_copies + 1));
        return p;
    }
    const int half = n_total / 2;
    const double log_total = log_choose(n_total, half);
    for (int k = 0; k <= n_copies; ++k) {
        p[static_cast<std::size_t>(k)] =
            std::exp(log_choose(n_copies, k) + log_choose(n_total - n_copies, half - k) - log_total);
    }
    return p;
}

// P(all copies in train) + P(all copies in valid): the partitions where A_H
// cannot be both learned and evaluated.
inline double single_split_failure_prob(int n_copies, int n_total,
                                        PartitionModel model = PartitionModel::Hypergeometric) {
    if (n_copies == 0) return 1.0;
    const auto p = partition_distribution(n_copies, n_total, model);
    return p.front() + p.back();
}

inline double successful_split_prob(int n_copies, int n_total,
                                    PartitionModel model = PartitionModel::Hypergeometric) {
    if (n_copies == 0) return 0.0;
    const auto p = partition_distribution(n_copies, n_total, model);
    return 1.0 - p.front() - p.back();
}

inline double binomial_majority_bound(int K, double p) {
    const int majority = (K + 1) / 2;
    return binomial_tail_at_least(K, p, majority);
}

struct TheoremConfig {
    int H = 6;
    int n_episodes = 200;
    int n_copies = -1;
    std::vector<int> K_values = {1, 5};
    int n_trials = 1000;
    RngSeed seed;
    double ratio = 0.5;
    bool use_rollout = false;
    int n_workers = 1;
};

struct TheoremAnalytic {
    std::vector<double> partition;
    double failure = 0.0;
    double success = 0.0;
};

struct TheoremMcPerK {
    int K = 0;
    int failures = 0;
    int trials = 0;
    double rate = 0.0;
    double se = 0.0;
};

struct TheoremResult {
    TheoremAnalytic analytic;
    std::vector<TheoremMcPerK> per_k;
    double e_ss_fraction = 0.0;
    std::vector<std::vector<char>> trial_failures;
};

inline int theorem_default_copies(int H, int n_episodes) {
    return static_cast<int>(std::llround(static_cast<double>(n_episodes) / std::pow(2.0, H)));
}

namespace detail {

inline bool is_tau_h(const Trajectory& traj, int H) {
    if (traj.length() != H) return false;
    for (const Step& step : traj.steps) {
        if (step.action != 1) return false;
    }
    return true;
}

}  // namespace detail

// Full pipeline replications on the chain: per trial, build the dataset,
// score the horizon-h AH family with WIS over shared RRS splits, select per
// K (reusing the first K splits so K values are paired), retrain on the full
// dataset, and count a failure whenever the deployed policy is not optimal.
inline TheoremResult run_mc_experiment(const TheoremConfig& config) {
    if (config.H < 2) throw std::invalid_argument("run_mc_experiment: H must be >= 2");
    if (config.n_episodes < 2 || config.n_episodes % 2 != 0) {
        throw std::invalid_argument("run_mc_experiment: n_episodes must be even and >= 2");
    }
    if (config.n_trials < 1) throw std::invalid_argument("run_mc_experiment: n_trials must be >= 1");
    if (config.K_values.empty()) throw std::invalid_argument("run_mc_experiment: K_values empty");
    for (int K : config.K_values) {
        if (K < 1) throw std::invalid_argument("run_mc_experiment: K values must be >= 1");
    }

    const ChainConfig chain_config{config.H, 1.0 / 6.0, 201.0};
    const TabularEnv env = make_chain_env(chain_config);
    const int n_copies = config.n_copies >= 0 ? config.n_copies : theorem_default_copies(config.H, config.n_episodes);

    TheoremResult result;
    result.analytic.partition = partition_distribution(n_copies, config.n_episodes);
    result.analytic.failure = single_split_failure_prob(n_copies, config.n_episodes);
    result.analytic.success = successful_split_prob(n_copies, config.n_episodes);

    const int K_max = *std::max_element(config.K_values.begin(), config.K_values.end());
    const std::size_t n_k = config.K_values.size();
    result.trial_failures.assign(n_k, std::vector<char>(static_cast<std::size_t>(config.n_trials), 0));
    std::vector<char> e_ss_flags(static_cast<std::size_t>(config.n_trials), 0);

    const TabularPolicy behavior = uniform_behavior_policy(env);
    parallel_for(static_cast<std::size_t>(config.n_trials), config.n_workers, [&](std::size_t trial) {
        const RngSeed trial_seed = derive(config.seed, "trial", static_cast<std::uint64_t>(trial));
        const Dataset dataset = config.use_rollout
                                    ? rollout(env, behavior, config.n_episodes, trial_seed)
                                    : build_expected_composition_chain_dataset(env, config.n_episodes, trial_seed);
        const SplitPlan plan = rrs_splits(dataset.size(), K_max, config.ratio, derive(trial_seed, "plan"));

        // Per split: one MLE fit shared by the whole AH family, then one WIS
        // score per horizon.
        std::vector<std::vector<std::optional<double>>> cells(
            static_cast<std::size_t>(config.H), std::vector<std::optional<double>>(static_cast<std::size_t>(K_max)));
        for (int k = 0; k < K_max; ++k) {
            const Dataset train = subset_dataset(dataset, plan.repetitions[static_cast<std::size_t>(k)].first);
            const Dataset valid = subset_dataset(dataset, plan.repetitions[static_cast<std::size_t>(k)].second);
            const MleModel model = fit_mle_mdp(train);
            for (int h = 1; h <= config.H; ++h) {
                TabularPolicy policy = plan_horizon_h(model, h, config.H);
                try {
                    cells[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(k)] = wis_estimate(policy, valid);
                } catch (const UndefinedEstimate&) {
                }
            }
            if (k == 0) {
                int in_train = 0;
                for (const auto& i : plan.repetitions[0].first) {
                    if (detail::is_tau_h(dataset.trajectories[i], config.H)) ++in_train;
                }
                int total = 0;
                for (const auto& traj : dataset.trajectories) {
                    if (detail::is_tau_h(traj, config.H)) ++total;
                }
                if (in_train >= 1 && in_train <= total - 1) e_ss_flags[trial] = 1;
            }
        }

        const MleModel full_model = fit_mle_mdp(dataset);
        for (std::size_t ki = 0; ki < n_k; ++ki) {
            const int K = config.K_values[ki];
            int chosen = -1;
            double best = 0.0;
            for (int h = 1; h <= config.H; ++h) {
                double sum = 0.0;
                int defined = 0;
                for (int k = 0; k < K; ++k) {
                    const auto& cell = cells[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(k)];
                    if (cell.has_value()) {
                        sum += *cell;
                        ++defined;
                    }
                }
                if (defined == 0) continue;
                double aggregate = sum / defined;
                if (chosen < 0 || aggregate > best) {
                    chosen = h;
                    best = aggregate;
                }
            }
            bool failed = true;
            if (chosen > 0) {
                TabularPolicy deployed = plan_horizon_h(full_model, chosen, config.H);
                failed = std::abs(exact_policy_value(env, deployed) - chain_config.high_reward) > 1e-9;
            }
            result.trial_failures[ki][trial] = failed ? 1 : 0;
        }
    });

    for (std::size_t ki = 0; ki < n_k; ++ki) {
        TheoremMcPerK row;
        row.K = config.K_values[ki];
        row.trials = config.n_trials;
        for (char f : result.trial_failures[ki]) row.failures += f;
        row.rate = static_cast<double>(row.failures) / config.n_trials;
        row.se = std::sqrt(std::max(row.rate * (1.0 - row.rate), 0.0) / config.n_trials);
        result.per_k.push_back(row);
    }
    int e_ss_count = 0;
    for (char f : e_ss_flags) e_ss_count += f;
    result.e_ss_fraction = static_cast<double>(e_ss_count) / config.n_trials;
    return result;
}

}  // namespace ssr
