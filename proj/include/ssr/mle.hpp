#pragma once

#include <stdexcept>
#include <vector>

#include "ssr/core.hpp"

namespace ssr {

// Maximum-likelihood tabular model of a dataset. Rewards are attributed to
// the departing state (reward_mle) and to the departing state-action pair
// (reward_sa); unobserved pairs keep zero rows and are excluded via
// observed_mask so downstream consumers can apply their own defaults.
struct MleModel {
    int n_states = 0;
    int n_actions = 0;
    std::vector<std::vector<int>> count_sa;
    std::vector<int> count_s;
    std::vector<std::vector<std::vector<double>>> transition_mle;
    std::vector<double> reward_mle;
    std::vector<std::vector<double>> reward_sa;
    std::vector<std::vector<bool>> observed_mask;
    std::vector<double> initial_dist;

    bool observed(int s, int a) const { return observed_mask[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]; }
};

inline MleModel fit_mle_mdp(const Dataset& dataset) {
    if (dataset.n_states < 1 || dataset.n_actions < 1) throw std::invalid_argument("fit_mle_mdp: bad dataset sizes");
    MleModel m;
    m.n_states = dataset.n_states;
    m.n_actions = dataset.n_actions;
    const auto S = static_cast<std::size_t>(m.n_states);
    const auto A = static_cast<std::size_t>(m.n_actions);
    m.count_sa.assign(S, std::vector<int>(A, 0));
    m.count_s.assign(S, 0);
    m.transition_mle.assign(S, std::vector<std::vector<double>>(A, std::vector<double>(S, 0.0)));
    m.reward_mle.assign(S, 0.0);
    m.reward_sa.assign(S, std::vector<double>(A, 0.0));
    m.observed_mask.assign(S, std::vector<bool>(A, false));
    m.initial_dist.assign(S, 0.0);

    for (const auto& traj : dataset.trajectories) {
        if (traj.steps.empty()) continue;
        m.initial_dist[static_cast<std::size_t>(traj.steps.front().state)] += 1.0;
        for (const Step& step : traj.steps) {
            const auto s = static_cast<std::size_t>(step.state);
            const auto a = static_cast<std::size_t>(step.action);
            m.count_sa[s][a] += 1;
            m.count_s[s] += 1;
            m.transition_mle[s][a][static_cast<std::size_t>(step.next_state)] += 1.0;
            m.reward_mle[s] += step.reward;
            m.reward_sa[s][a] += step.reward;
            m.observed_mask[s][a] = true;
        }
    }

    double n_traj = 0.0;
    for (double c : m.initial_dist) n_traj += c;
    if (n_traj > 0.0) {
        for (double& c : m.initial_dist) c /= n_traj;
    }
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            int n = m.count_sa[s][a];
            if (n == 0) continue;
            for (double& p : m.transition_mle[s][a]) p /= n;
            m.reward_sa[s][a] /= n;
        }
        if (m.count_s[s] > 0) m.reward_mle[s] /= m.count_s[s];
    }
    return m;
}

}  // namespace ssr
