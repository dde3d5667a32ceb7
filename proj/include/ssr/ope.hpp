#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/mle.hpp"

namespace ssr {

struct UndefinedEstimate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OpeDiagnostics {
    int zero_weight_timesteps = 0;
};

inline double importance_weight(const Trajectory& trajectory, const TabularPolicy& policy) {
    double w = 1.0;
    for (const Step& step : trajectory.steps) {
        w *= policy.prob(step.state, step.action) / step.behavior_propensity;
    }
    return w;
}

inline double is_estimate(const TabularPolicy& policy, const Dataset& dataset) {
    double total = 0.0;
    for (const auto& traj : dataset.trajectories) {
        total += importance_weight(traj, policy) * return_of(traj, dataset.gamma);
    }
    return total / static_cast<double>(dataset.size());
}

inline double clipped_is_estimate(const TabularPolicy& policy, const Dataset& dataset, double clip_max) {
    if (!(clip_max > 0.0)) throw std::invalid_argument("clipped_is_estimate: clip_max must be positive");
    double total = 0.0;
    for (const auto& traj : dataset.trajectories) {
        double w = std::min(importance_weight(traj, policy), clip_max);
        total += w * return_of(traj, dataset.gamma);
    }
    return total / static_cast<double>(dataset.size());
}

// Self-normalized core sum_i (w_i / sum_j w_j) G_i; undefined when no
// trajectory overlaps the evaluation policy.
inline double wis_estimate(const TabularPolicy& policy, const Dataset& dataset) {
    std::vector<double> weights;
    weights.reserve(dataset.trajectories.size());
    double weight_sum = 0.0;
    for (const auto& traj : dataset.trajectories) {
        weights.push_back(importance_weight(traj, policy));
        weight_sum += weights.back();
    }
    if (weight_sum <= 0.0) {
        throw UndefinedEstimate("wis_estimate: evaluation policy has no overlap with the dataset");
    }
    // Normalizing each weight before multiplying keeps the single-trajectory
    // case exact: w/w is 1.0 in IEEE arithmetic, so the estimate is G(tau)
    // bit for bit.
    double value = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        value += (weights[i] / weight_sum) * return_of(dataset.trajectories[i], dataset.gamma);
    }
    return value;
}

inline double cwpdis_estimate(const TabularPolicy& policy, const Dataset& dataset,
                              OpeDiagnostics* diagnostics = nullptr) {
    const int max_len = dataset.max_length();
    std::vector<double> cumulative(dataset.trajectories.size(), 1.0);
    double value = 0.0;
    double discount = 1.0;
    for (int t = 0; t < max_len; ++t) {
        double denominator = 0.0;
        for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
            const auto& steps = dataset.trajectories[i].steps;
            if (static_cast<std::size_t>(t) >= steps.size()) continue;
            const Step& step = steps[static_cast<std::size_t>(t)];
            cumulative[i] *= policy.prob(step.state, step.action) / step.behavior_propensity;
            denominator += cumulative[i];
        }
        if (denominator > 0.0) {
            // Per-trajectory normalization keeps the n=1 case exact (w/w = 1).
            double mean_reward = 0.0;
            for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
                const auto& steps = dataset.trajectories[i].steps;
                if (static_cast<std::size_t>(t) >= steps.size() || cumulative[i] == 0.0) continue;
                mean_reward += (cumulative[i] / denominator) * steps[static_cast<std::size_t>(t)].reward;
            }
            value += discount * mean_reward;
        } else if (diagnostics != nullptr) {
            diagnostics->zero_weight_timesteps += 1;
        }
        discount *= dataset.gamma;
    }
    return value;
}

inline std::pair<double, TabularQ> fqe_tabular(const TabularPolicy& policy, const Dataset& dataset,
                                               int n_iterations = 0) {
    if (policy.n_states() != dataset.n_states || policy.n_actions() != dataset.n_actions) {
        throw std::invalid_argument("fqe_tabular: policy dimensions do not match dataset");
    }
    if (n_iterations <= 0) n_iterations = 2 * dataset.max_length();
    const MleModel model = fit_mle_mdp(dataset);
    const double gamma = dataset.gamma;
    TabularQ q;
    q.values.assign(static_cast<std::size_t>(dataset.n_states),
                    std::vector<double>(static_cast<std::size_t>(dataset.n_actions), 0.0));
    for (int it = 0; it < n_iterations; ++it) {
        TabularQ next = q;
        for (int s = 0; s < dataset.n_states; ++s) {
            for (int a = 0; a < dataset.n_actions; ++a) {
                if (!model.observed(s, a)) continue;
                const auto& row = model.transition_mle[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                double expectation = 0.0;
                for (int k = 0; k < dataset.n_states; ++k) {
                    double p = row[static_cast<std::size_t>(k)];
                    if (p == 0.0) continue;
                    double v = 0.0;
                    for (int a2 = 0; a2 < dataset.n_actions; ++a2) {
                        v += policy.prob(k, a2) * q.values[static_cast<std::size_t>(k)][static_cast<std::size_t>(a2)];
                    }
                    expectation += p * v;
                }
                next.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
                    model.reward_sa[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] + gamma * expectation;
            }
        }
        q = std::move(next);
    }
    double value = 0.0;
    for (int s = 0; s < dataset.n_states; ++s) {
        double v = 0.0;
        for (int a = 0; a < dataset.n_actions; ++a) {
            v += policy.prob(s, a) * q.values[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        }
        value += model.initial_dist[static_cast<std::size_t>(s)] * v;
    }
    return {value, q};
}

struct EstimatorOptions {
    double clip_max = 1e4;
    int fqe_iterations = 0;
};

using Estimator = std::function<std::optional<double>(const TabularPolicy&, const Dataset&)>;

inline const std::vector<std::string>& estimator_ids() {
    static const std::vector<std::string> ids = {"is", "is-clip", "wis", "cwpdis", "fqe"};
    return ids;
}

// String-addressable estimator; undefined estimates surface as nullopt so
// selection strategies can flag and skip the cell.
inline Estimator make_estimator(const std::string& id, const EstimatorOptions& options = {}) {
    if (id == "is") {
        return [](const TabularPolicy& p, const Dataset& d) -> std::optional<double> { return is_estimate(p, d); };
    }
    if (id == "is-clip") {
        double clip = options.clip_max;
        return [clip](const TabularPolicy& p, const Dataset& d) -> std::optional<double> {
            return clipped_is_estimate(p, d, clip);
        };
    }
    if (id == "wis") {
        return [](const TabularPolicy& p, const Dataset& d) -> std::optional<double> {
            try {
                return wis_estimate(p, d);
            } catch (const UndefinedEstimate&) {
                return std::nullopt;
            }
        };
    }
    if (id == "cwpdis") {
        return [](const TabularPolicy& p, const Dataset& d) -> std::optional<double> { return cwpdis_estimate(p, d); };
    }
    if (id == "fqe") {
        int iters = options.fqe_iterations;
        return [iters](const TabularPolicy& p, const Dataset& d) -> std::optional<double> {
            return fqe_tabular(p, d, iters).first;
        };
    }
    std::string valid;
    for (const auto& e : estimator_ids()) {
        if (!valid.empty()) valid += ", ";
        valid += e;
    }
    throw std::invalid_argument("unknown estimator id '" + id + "' (valid: " + valid + ")");
}

}  // namespace ssr
