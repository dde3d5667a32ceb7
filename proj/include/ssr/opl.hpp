#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/envs.hpp"
#include "ssr/mle.hpp"
#include "ssr/rng.hpp"

namespace ssr {

struct LearnDiagnostics {
    std::vector<int> uniform_fallback_states;
    std::vector<int> threshold_ignored_states;
    std::vector<int> empty_admissible_states;
    std::vector<std::pair<int, int>> max_penalty_pairs;
    int skipped_batches = 0;
};

// The true model of a simulator, in MLE form, for planning oracles.
inline MleModel exact_model(const TabularEnv& env) {
    MleModel m;
    m.n_states = env.n_states;
    m.n_actions = env.n_actions;
    const auto S = static_cast<std::size_t>(env.n_states);
    const auto A = static_cast<std::size_t>(env.n_actions);
    m.count_sa.assign(S, std::vector<int>(A, 1));
    m.count_s.assign(S, env.n_actions);
    m.transition_mle = env.transition;
    m.reward_mle = env.reward;
    m.observed_mask.assign(S, std::vector<bool>(A, true));
    m.initial_dist = env.initial_dist;
    m.reward_sa.assign(S, std::vector<double>(A, 0.0));
    for (int s = 0; s < env.n_states; ++s) {
        for (int a = 0; a < env.n_actions; ++a) {
            double r = 0.0;
            for (int k = 0; k < env.n_states; ++k) {
                r += env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] *
                     step_reward(env, s, k);
            }
            m.reward_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = r;
        }
    }
    return m;
}

// Backward DP over h lookahead steps on the MLE model, maximizing only over
// observed actions: V_0 = 0, V_k(s) = r(s) + max_a sum_s' p(s'|s,a) V_{k-1}(s').
// The returned policy is greedy in the h-step value (ties to the lowest
// action index), so h=1 degenerates to the lowest observed action.
inline TabularPolicy plan_horizon_h(const MleModel& model, int h, int env_horizon,
                                    LearnDiagnostics* diagnostics = nullptr) {
    if (h < 1 || h > env_horizon) throw std::invalid_argument("plan_horizon_h: need 1 <= h <= env_horizon");
    const int S = model.n_states;
    const int A = model.n_actions;
    std::vector<double> v(static_cast<std::size_t>(S), 0.0);
    auto action_value = [&](int s, int a) {
        const auto& row = model.transition_mle[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        double total = 0.0;
        for (int k = 0; k < S; ++k) total += row[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)];
        return total;
    };
    for (int k = 1; k < h; ++k) {
        std::vector<double> next(static_cast<std::size_t>(S), 0.0);
        for (int s = 0; s < S; ++s) {
            double best = 0.0;
            bool any = false;
            for (int a = 0; a < A; ++a) {
                if (!model.observed(s, a)) continue;
                double q = action_value(s, a);
                if (!any || q > best) best = q;
                any = true;
            }
            next[static_cast<std::size_t>(s)] = model.reward_mle[static_cast<std::size_t>(s)] + (any ? best : 0.0);
        }
        v = std::move(next);
    }
    TabularPolicy policy = make_uniform_policy(S, A);
    for (int s = 0; s < S; ++s) {
        int best_action = -1;
        double best = 0.0;
        for (int a = 0; a < A; ++a) {
            if (!model.observed(s, a)) continue;
            double q = action_value(s, a);
            if (best_action < 0 || q > best) {
                best_action = a;
                best = q;
            }
        }
        if (best_action < 0) {
            if (diagnostics != nullptr) diagnostics->uniform_fallback_states.push_back(s);
            continue;
        }
        std::fill(policy.probs[static_cast<std::size_t>(s)].begin(), policy.probs[static_cast<std::size_t>(s)].end(), 0.0);
        policy.probs[static_cast<std::size_t>(s)][static_cast<std::size_t>(best_action)] = 1.0;
    }
    return policy;
}

inline TabularPolicy fit_bc(const Dataset& dataset, double safety_alpha, LearnDiagnostics* diagnostics = nullptr) {
    if (safety_alpha < 0.0 || safety_alpha >= 1.0) throw std::invalid_argument("fit_bc: safety_alpha must be in [0,1)");
    const MleModel model = fit_mle_mdp(dataset);
    TabularPolicy policy = make_uniform_policy(model.n_states, model.n_actions);
    for (int s = 0; s < model.n_states; ++s) {
        if (model.count_s[static_cast<std::size_t>(s)] == 0) {
            if (diagnostics != nullptr) diagnostics->uniform_fallback_states.push_back(s);
            continue;
        }
        std::vector<double> freq(static_cast<std::size_t>(model.n_actions), 0.0);
        for (int a = 0; a < model.n_actions; ++a) {
            freq[static_cast<std::size_t>(a)] =
                static_cast<double>(model.count_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) /
                model.count_s[static_cast<std::size_t>(s)];
        }
        std::vector<double> kept = freq;
        double total = 0.0;
        for (double& p : kept) {
            if (p < safety_alpha) p = 0.0;
            total += p;
        }
        if (total <= 0.0) {
            if (diagnostics != nullptr) diagnostics->threshold_ignored_states.push_back(s);
            kept = freq;
            total = std::accumulate(kept.begin(), kept.end(), 0.0);
        }
        for (double& p : kept) p /= total;
        policy.probs[static_cast<std::size_t>(s)] = std::move(kept);
    }
    return policy;
}

namespace detail {

// Per-(s,a) admissibility: observed and with empirical behavior probability
// above the BCQ threshold.
inline std::vector<std::vector<bool>> admissible_sets(const MleModel& model, double bcq_delta) {
    std::vector<std::vector<bool>> admissible(static_cast<std::size_t>(model.n_states),
                                              std::vector<bool>(static_cast<std::size_t>(model.n_actions), false));
    for (int s = 0; s < model.n_states; ++s) {
        if (model.count_s[static_cast<std::size_t>(s)] == 0) continue;
        for (int a = 0; a < model.n_actions; ++a) {
            int n = model.count_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
            if (n < 1) continue;
            double mu = static_cast<double>(n) / model.count_s[static_cast<std::size_t>(s)];
            if (mu > bcq_delta) admissible[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = true;
        }
    }
    return admissible;
}

inline std::pair<TabularPolicy, TabularQ> constrained_q_iteration(const Dataset& dataset, double bcq_delta,
                                                                  int count_beta, double gamma, int n_iterations,
                                                                  LearnDiagnostics* diagnostics) {
    if (bcq_delta < 0.0 || bcq_delta >= 1.0) throw std::invalid_argument("bcq_delta must be in [0,1)");
    if (n_iterations < 1) throw std::invalid_argument("n_iterations must be >= 1");
    const MleModel model = fit_mle_mdp(dataset);
    const int S = model.n_states;
    const int A = model.n_actions;
    const auto admissible = admissible_sets(model, bcq_delta);

    std::vector<bool> empty_flagged(static_cast<std::size_t>(S), false);
    TabularQ q;
    q.values.assign(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(A), 0.0));
    for (int it = 0; it < n_iterations; ++it) {
        TabularQ next = q;
        double max_change = 0.0;
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                if (!admissible[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) continue;
                const auto& row = model.transition_mle[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                double future = 0.0;
                for (int k = 0; k < S; ++k) {
                    double p = row[static_cast<std::size_t>(k)];
                    if (p == 0.0) continue;
                    double best = 0.0;
                    bool any = false;
                    for (int a2 = 0; a2 < A; ++a2) {
                        if (!admissible[static_cast<std::size_t>(k)][static_cast<std::size_t>(a2)]) continue;
                        double value = q.values[static_cast<std::size_t>(k)][static_cast<std::size_t>(a2)];
                        if (count_beta > 1 &&
                            model.count_sa[static_cast<std::size_t>(k)][static_cast<std::size_t>(a2)] < count_beta) {
                            value = 0.0;
                        }
                        if (!any || value > best) best = value;
                        any = true;
                    }
                    if (!any && diagnostics != nullptr && !empty_flagged[static_cast<std::size_t>(k)]) {
                        empty_flagged[static_cast<std::size_t>(k)] = true;
                        diagnostics->empty_admissible_states.push_back(k);
                    }
                    future += p * (any ? best : 0.0);
                }
                double updated = model.reward_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] + gamma * future;
                max_change = std::max(max_change,
                                      std::abs(updated - q.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]));
                next.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = updated;
            }
        }
        q = std::move(next);
        if (max_change < 1e-10) break;
    }

    TabularPolicy policy = make_uniform_policy(S, A);
    for (int s = 0; s < S; ++s) {
        int best_action = -1;
        double best = 0.0;
        for (int a = 0; a < A; ++a) {
            if (!admissible[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) continue;
            double value = q.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
            if (best_action < 0 || value > best) {
                best_action = a;
                best = value;
            }
        }
        if (best_action < 0) {
            if (diagnostics != nullptr) diagnostics->uniform_fallback_states.push_back(s);
            continue;
        }
        std::fill(policy.probs[static_cast<std::size_t>(s)].begin(), policy.probs[static_cast<std::size_t>(s)].end(), 0.0);
        policy.probs[static_cast<std::size_t>(s)][static_cast<std::size_t>(best_action)] = 1.0;
    }
    return {policy, q};
}

}  // namespace detail

// Tabular BCQ: exact Q iteration where both the backup max and the greedy
// policy range only over admissible actions. The seed is accepted for
// registry uniformity; the computation is deterministic.
inline std::pair<TabularPolicy, TabularQ> fit_bcq_tabular(const Dataset& dataset, double bcq_delta, double gamma,
                                                          int n_iterations, RngSeed seed,
                                                          LearnDiagnostics* diagnostics = nullptr) {
    (void)seed;
    return detail::constrained_q_iteration(dataset, bcq_delta, 1, gamma, n_iterations, diagnostics);
}

// MBS-QI: BCQ plus a count mask that zeroes the backed-up value of
// insufficiently visited next pairs. count_beta=1 reduces to BCQ.
inline std::pair<TabularPolicy, TabularQ> fit_mbs_tabular(const Dataset& dataset, double bcq_delta, int count_beta,
                                                          double gamma, int n_iterations,
                                                          LearnDiagnostics* diagnostics = nullptr) {
    if (count_beta < 1) throw std::invalid_argument("fit_mbs_tabular: count_beta must be >= 1");
    return detail::constrained_q_iteration(dataset, bcq_delta, count_beta, gamma, n_iterations, diagnostics);
}

inline double pmdp_epsilon(int count, double penalty_beta, double confidence_delta) {
    if (count < 1) return std::numeric_limits<double>::infinity();
    return penalty_beta * std::sqrt(2.0 * std::log(1.0 / confidence_delta) / count);
}

// Full-data penalized reward table: r_tilde = clamp(r_hat - eps, -1, 1), with
// unobserved pairs pinned at the maximum penalty.
inline std::vector<std::vector<double>> pmdp_penalized_rewards(const Dataset& dataset, double penalty_beta,
                                                               double confidence_delta) {
    const MleModel model = fit_mle_mdp(dataset);
    std::vector<std::vector<double>> table(static_cast<std::size_t>(model.n_states),
                                           std::vector<double>(static_cast<std::size_t>(model.n_actions), -1.0));
    for (int s = 0; s < model.n_states; ++s) {
        for (int a = 0; a < model.n_actions; ++a) {
            if (!model.observed(s, a)) continue;
            double eps = pmdp_epsilon(model.count_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)],
                                      penalty_beta, confidence_delta);
            double r = model.reward_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] - eps;
            table[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = std::clamp(r, -1.0, 1.0);
        }
    }
    return table;
}

// Pessimistic ensemble: N MLE models on disjoint trajectory shards, value
// iteration sampling one member per backup, Hoeffding reward penalty from
// full-data counts, softmax policy. Member-unobserved pairs back up their
// penalized reward only (pessimistic terminal).
inline TabularPolicy fit_pmdp_ensemble(const Dataset& dataset, int n_ensembles, double penalty_beta,
                                       double confidence_delta, double temperature, int n_iterations, RngSeed seed,
                                       LearnDiagnostics* diagnostics = nullptr) {
    if (n_ensembles < 1) throw std::invalid_argument("fit_pmdp_ensemble: n_ensembles must be >= 1");
    if (penalty_beta < 0.0) throw std::invalid_argument("fit_pmdp_ensemble: penalty_beta must be >= 0");
    if (!(confidence_delta > 0.0) || confidence_delta >= 1.0) {
        throw std::invalid_argument("fit_pmdp_ensemble: confidence_delta must be in (0,1)");
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("fit_pmdp_ensemble: temperature must be positive");
    if (n_iterations < 1) throw std::invalid_argument("fit_pmdp_ensemble: n_iterations must be >= 1");

    const MleModel full = fit_mle_mdp(dataset);
    const int S = full.n_states;
    const int A = full.n_actions;
    const double gamma = dataset.gamma;

    std::vector<std::size_t> order(dataset.trajectories.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shard_rng(derive(seed, "shards"));
    shard_rng.shuffle(order);
    std::vector<Dataset> shards(static_cast<std::size_t>(n_ensembles));
    for (auto& shard : shards) {
        shard.gamma = dataset.gamma;
        shard.n_states = dataset.n_states;
        shard.n_actions = dataset.n_actions;
        shard.env_tag = dataset.env_tag;
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        shards[i % static_cast<std::size_t>(n_ensembles)].trajectories.push_back(dataset.trajectories[order[i]]);
    }
    std::vector<MleModel> members;
    members.reserve(static_cast<std::size_t>(n_ensembles));
    for (const auto& shard : shards) {
        if (shard.trajectories.empty()) {
            MleModel empty;
            empty.n_states = S;
            empty.n_actions = A;
            empty.count_sa.assign(static_cast<std::size_t>(S), std::vector<int>(static_cast<std::size_t>(A), 0));
            empty.count_s.assign(static_cast<std::size_t>(S), 0);
            empty.transition_mle.assign(
                static_cast<std::size_t>(S),
                std::vector<std::vector<double>>(static_cast<std::size_t>(A),
                                                 std::vector<double>(static_cast<std::size_t>(S), 0.0)));
            empty.reward_mle.assign(static_cast<std::size_t>(S), 0.0);
            empty.reward_sa.assign(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(A), 0.0));
            empty.observed_mask.assign(static_cast<std::size_t>(S), std::vector<bool>(static_cast<std::size_t>(A), false));
            empty.initial_dist.assign(static_cast<std::size_t>(S), 0.0);
            members.push_back(std::move(empty));
        } else {
            members.push_back(fit_mle_mdp(shard));
        }
    }

    std::vector<std::vector<double>> eps(static_cast<std::size_t>(S),
                                         std::vector<double>(static_cast<std::size_t>(A), 0.0));
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            eps[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
                pmdp_epsilon(full.count_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)], penalty_beta,
                             confidence_delta);
            if (!full.observed(s, a) && diagnostics != nullptr) diagnostics->max_penalty_pairs.emplace_back(s, a);
        }
    }

    TabularQ q;
    q.values.assign(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(A), 0.0));
    Rng backup_rng(derive(seed, "backup"));
    for (int it = 0; it < n_iterations; ++it) {
        TabularQ next = q;
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                const auto m = static_cast<std::size_t>(backup_rng.uniform_int(static_cast<std::uint64_t>(n_ensembles)));
                const MleModel& member = members[m];
                double e = eps[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                if (!member.observed(s, a)) {
                    next.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = -1.0;
                    continue;
                }
                double r = std::clamp(member.reward_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] - e,
                                      -1.0, 1.0);
                const auto& row = member.transition_mle[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                double future = 0.0;
                for (int k = 0; k < S; ++k) {
                    double p = row[static_cast<std::size_t>(k)];
                    if (p == 0.0) continue;
                    const auto& qrow = q.values[static_cast<std::size_t>(k)];
                    future += p * *std::max_element(qrow.begin(), qrow.end());
                }
                next.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = r + gamma * future;
            }
        }
        q = std::move(next);
    }

    TabularPolicy policy = make_uniform_policy(S, A);
    for (int s = 0; s < S; ++s) {
        const auto& qrow = q.values[static_cast<std::size_t>(s)];
        double hi = *std::max_element(qrow.begin(), qrow.end());
        double total = 0.0;
        std::vector<double> row(static_cast<std::size_t>(A), 0.0);
        for (int a = 0; a < A; ++a) {
            row[static_cast<std::size_t>(a)] = std::exp((qrow[static_cast<std::size_t>(a)] - hi) / temperature);
            total += row[static_cast<std::size_t>(a)];
        }
        for (double& p : row) p /= total;
        policy.probs[static_cast<std::size_t>(s)] = std::move(row);
    }
    return policy;
}

enum class PoisObjective { IS, WIS };

struct PoisParams {
    std::vector<std::vector<double>> theta;
    double lambda_ess = 0.0;
    double safety_alpha = 0.0;
    double learning_rate = 0.05;
    int epochs = 100;
    int minibatch_size = 0;
};

struct PoisEvaluation {
    double objective = 0.0;
    std::vector<std::vector<double>> gradient;
    bool all_zero_weights = false;
};

inline TabularPolicy masked_softmax_policy(const std::vector<std::vector<double>>& theta,
                                           const std::vector<std::vector<bool>>& mask) {
    TabularPolicy policy;
    policy.probs.assign(theta.size(), {});
    for (std::size_t s = 0; s < theta.size(); ++s) {
        const auto& row = theta[s];
        std::vector<double> out(row.size(), 0.0);
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < row.size(); ++a) {
            if (mask[s][a]) hi = std::max(hi, row[a]);
        }
        double total = 0.0;
        for (std::size_t a = 0; a < row.size(); ++a) {
            if (!mask[s][a]) continue;
            out[a] = std::exp(row[a] - hi);
            total += out[a];
        }
        if (total <= 0.0) {
            std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(row.size()));
        } else {
            for (double& p : out) p /= total;
        }
        policy.probs[s] = std::move(out);
    }
    return policy;
}

// Objective J = V_hat(pi_theta) - lambda/ESS and its analytic gradient in
// theta, over the given trajectory subset. The gradient flows through the
// importance weights via the masked-softmax log-derivative.
inline PoisEvaluation pois_evaluate(const Dataset& dataset, const std::vector<std::size_t>& indices,
                                    const std::vector<std::vector<double>>& theta,
                                    const std::vector<std::vector<bool>>& mask, double lambda_ess,
                                    PoisObjective objective) {
    if (indices.empty()) throw std::invalid_argument("pois_evaluate: empty batch");
    const TabularPolicy policy = masked_softmax_policy(theta, mask);
    const std::size_t n = indices.size();
    std::vector<double> w(n, 0.0);
    std::vector<double> g(n, 0.0);
    double s1 = 0.0;
    double s2 = 0.0;
    double wg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const Trajectory& traj = dataset.trajectories[indices[j]];
        double weight = 1.0;
        for (const Step& step : traj.steps) {
            weight *= policy.prob(step.state, step.action) / step.behavior_propensity;
        }
        w[j] = weight;
        g[j] = return_of(traj, dataset.gamma);
        s1 += weight;
        s2 += weight * weight;
        wg += weight * g[j];
    }

    PoisEvaluation eval;
    eval.gradient.assign(theta.size(), std::vector<double>(theta.empty() ? 0 : theta[0].size(), 0.0));
    if (s1 <= 0.0) {
        eval.all_zero_weights = true;
        return eval;
    }

    double value = 0.0;
    if (objective == PoisObjective::IS) {
        value = wg / static_cast<double>(n);
    } else {
        value = wg / s1;
    }
    eval.objective = value - lambda_ess * s2 / (s1 * s1);

    for (std::size_t j = 0; j < n; ++j) {
        double c = 0.0;
        if (objective == PoisObjective::IS) {
            c = g[j] / static_cast<double>(n);
        } else {
            c = (g[j] * s1 - wg) / (s1 * s1);
        }
        c -= lambda_ess * (2.0 * w[j] / (s1 * s1) - 2.0 * s2 / (s1 * s1 * s1));
        double coef = c * w[j];
        if (coef == 0.0) continue;
        const Trajectory& traj = dataset.trajectories[indices[j]];
        for (const Step& step : traj.steps) {
            const auto s = static_cast<std::size_t>(step.state);
            for (std::size_t a = 0; a < eval.gradient[s].size(); ++a) {
                if (!mask[s][a]) continue;
                double indicator = (static_cast<int>(a) == step.action) ? 1.0 : 0.0;
                eval.gradient[s][a] += coef * (indicator - policy.probs[s][a]);
            }
        }
    }
    return eval;
}

inline std::vector<std::vector<bool>> pois_support_mask(const Dataset& dataset, double safety_alpha) {
    std::vector<std::vector<bool>> mask(static_cast<std::size_t>(dataset.n_states),
                                        std::vector<bool>(static_cast<std::size_t>(dataset.n_actions), true));
    if (safety_alpha <= 0.0) return mask;
    const TabularPolicy bc = fit_bc(dataset, safety_alpha);
    for (int s = 0; s < dataset.n_states; ++s) {
        for (int a = 0; a < dataset.n_actions; ++a) {
            mask[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = bc.prob(s, a) > 0.0;
        }
    }
    return mask;
}

inline TabularPolicy fit_pois(const Dataset& dataset, const PoisParams& params, PoisObjective objective, RngSeed seed,
                              const std::optional<TabularPolicy>& init = std::nullopt,
                              LearnDiagnostics* diagnostics = nullptr) {
    if (params.lambda_ess < 0.0) throw std::invalid_argument("fit_pois: lambda_ess must be >= 0");
    if (params.safety_alpha < 0.0 || params.safety_alpha >= 1.0) {
        throw std::invalid_argument("fit_pois: safety_alpha must be in [0,1)");
    }
    if (!(params.learning_rate > 0.0)) throw std::invalid_argument("fit_pois: learning_rate must be positive");
    if (params.epochs < 0) throw std::invalid_argument("fit_pois: epochs must be >= 0");
    if (params.minibatch_size < 0) throw std::invalid_argument("fit_pois: minibatch_size must be >= 0");

    const auto S = static_cast<std::size_t>(dataset.n_states);
    const auto A = static_cast<std::size_t>(dataset.n_actions);
    auto mask = pois_support_mask(dataset, params.safety_alpha);

    std::vector<std::vector<double>> theta;
    if (init.has_value()) {
        if (init->n_states() != dataset.n_states || init->n_actions() != dataset.n_actions) {
            throw std::invalid_argument("fit_pois: init policy dimensions do not match dataset");
        }
        theta.assign(S, std::vector<double>(A, 0.0));
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < A; ++a) {
                theta[s][a] = std::log(std::max(init->probs[s][a], 1e-6));
            }
        }
    } else if (!params.theta.empty()) {
        if (params.theta.size() != S || params.theta[0].size() != A) {
            throw std::invalid_argument("fit_pois: theta dimensions do not match dataset");
        }
        theta = params.theta;
    } else {
        theta.assign(S, std::vector<double>(A, 0.0));
    }

    const std::size_t n = dataset.trajectories.size();
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const bool full_batch = params.minibatch_size == 0 || static_cast<std::size_t>(params.minibatch_size) >= n;

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        if (full_batch) {
            PoisEvaluation eval = pois_evaluate(dataset, all, theta, mask, params.lambda_ess, objective);
            if (eval.all_zero_weights) {
                if (diagnostics != nullptr) diagnostics->skipped_batches += 1;
                continue;
            }
            for (std::size_t s = 0; s < S; ++s) {
                for (std::size_t a = 0; a < A; ++a) theta[s][a] += params.learning_rate * eval.gradient[s][a];
            }
        } else {
            std::vector<std::size_t> order = all;
            Rng rng(derive(seed, "epoch", static_cast<std::uint64_t>(epoch)));
            rng.shuffle(order);
            for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(params.minibatch_size)) {
                std::size_t stop = std::min(n, start + static_cast<std::size_t>(params.minibatch_size));
                std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(stop));
                PoisEvaluation eval = pois_evaluate(dataset, batch, theta, mask, params.lambda_ess, objective);
                if (eval.all_zero_weights) {
                    if (diagnostics != nullptr) diagnostics->skipped_batches += 1;
                    continue;
                }
                for (std::size_t s = 0; s < S; ++s) {
                    for (std::size_t a = 0; a < A; ++a) theta[s][a] += params.learning_rate * eval.gradient[s][a];
                }
            }
        }
    }
    return masked_softmax_policy(theta, mask);
}

}  // namespace ssr
