#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/io.hpp"
#include "ssr/learners.hpp"
#include "ssr/ope.hpp"
#include "ssr/parallel.hpp"
#include "ssr/rng.hpp"
#include "ssr/stats.hpp"

namespace ssr {

using SplitPair = std::pair<std::vector<std::size_t>, std::vector<std::size_t>>;

struct SplitPlan {
    std::vector<SplitPair> repetitions;
    std::string scheme_tag;
};

struct SelectionReport {
    AHSpec chosen;
    ScoreTable score_table;
    TabularPolicy deployed_policy;
    std::string strategy_tag;
    RngSeed seed;
    double wall_time = 0.0;
};

inline SplitPlan rrs_splits(int n, int K, double ratio, RngSeed seed) {
    if (n < 2) throw std::invalid_argument("rrs_splits: need n >= 2");
    if (K < 1) throw std::invalid_argument("rrs_splits: need K >= 1");
    if (!(ratio > 0.0) || !(ratio < 1.0)) throw std::invalid_argument("rrs_splits: ratio must be in (0,1)");
    const auto n_train = static_cast<std::size_t>(std::floor(n * ratio));
    if (n_train == 0 || n_train == static_cast<std::size_t>(n)) {
        throw std::invalid_argument("rrs_splits: degenerate split (one side empty)");
    }
    SplitPlan plan;
    plan.scheme_tag = K == 1 ? "one-split" : "rrs";
    for (int k = 0; k < K; ++k) {
        std::vector<std::size_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive(seed, "rrs", static_cast<std::uint64_t>(k)));
        rng.shuffle(order);
        SplitPair split;
        split.first.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.second.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
        std::sort(split.first.begin(), split.first.end());
        std::sort(split.second.begin(), split.second.end());
        plan.repetitions.push_back(std::move(split));
    }
    return plan;
}

inline SplitPlan kfold_splits(int n, int M, RngSeed seed) {
    if (M < 2 || M > n) throw std::invalid_argument("kfold_splits: need 2 <= M <= n");
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive(seed, "kfold"));
    rng.shuffle(order);
    SplitPlan plan;
    plan.scheme_tag = "kfold";
    std::size_t start = 0;
    for (int m = 0; m < M; ++m) {
        std::size_t fold_size = static_cast<std::size_t>(n / M) + (m < n % M ? 1 : 0);
        SplitPair split;
        split.second.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                            order.begin() + static_cast<std::ptrdiff_t>(start + fold_size));
        split.first.reserve(static_cast<std::size_t>(n) - fold_size);
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i < start || i >= start + fold_size) split.first.push_back(order[i]);
        }
        std::sort(split.first.begin(), split.first.end());
        std::sort(split.second.begin(), split.second.end());
        plan.repetitions.push_back(std::move(split));
        start += fold_size;
    }
    return plan;
}

inline Dataset subset_dataset(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.gamma = dataset.gamma;
    out.n_states = dataset.n_states;
    out.n_actions = dataset.n_actions;
    out.env_tag = dataset.env_tag;
    out.trajectories.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= dataset.trajectories.size()) throw std::out_of_range("subset_dataset: index out of range");
        out.trajectories.push_back(dataset.trajectories[i]);
    }
    return out;
}

// Train each AH on every repetition's train side, score it with the named
// estimator on the valid side; undefined estimates and learner failures leave
// the cell unset. Per-cell learner seeds derive from (seed, ah, split).
inline ScoreTable score_strategy(const std::vector<AHSpec>& ahs, const Dataset& dataset,
                                 const std::string& estimator_id, const SplitPlan& plan, RngSeed seed,
                                 const EstimatorOptions& options = {}, int n_workers = 1) {
    if (ahs.empty()) throw std::invalid_argument("score_strategy: no AHs given");
    if (plan.repetitions.empty()) throw std::invalid_argument("score_strategy: empty split plan");
    const Estimator estimator = make_estimator(estimator_id, options);
    std::vector<LearnerFn> learners;
    learners.reserve(ahs.size());
    for (const auto& spec : ahs) learners.push_back(make_learner(spec));

    const std::size_t n_ahs = ahs.size();
    const std::size_t n_splits = plan.repetitions.size();
    std::vector<Dataset> trains;
    std::vector<Dataset> valids;
    trains.reserve(n_splits);
    valids.reserve(n_splits);
    for (const auto& split : plan.repetitions) {
        trains.push_back(subset_dataset(dataset, split.first));
        valids.push_back(subset_dataset(dataset, split.second));
    }

    std::vector<std::optional<double>> cells(n_ahs * n_splits);
    parallel_for(n_ahs * n_splits, n_workers, [&](std::size_t task) {
        const std::size_t i = task / n_splits;
        const std::size_t k = task % n_splits;
        try {
            TabularPolicy policy = learners[i](trains[k], derive(seed, static_cast<std::uint64_t>(i),
                                                                 static_cast<std::uint64_t>(k)));
            cells[task] = estimator(policy, valids[k]);
        } catch (const std::exception&) {
            cells[task] = std::nullopt;
        }
    });

    ScoreTable table;
    table.ahs = ahs;
    table.scheme_tag = plan.scheme_tag;
    table.cells.assign(n_ahs, std::vector<std::optional<double>>(n_splits));
    for (std::size_t i = 0; i < n_ahs; ++i) {
        for (std::size_t k = 0; k < n_splits; ++k) table.cells[i][k] = cells[i * n_splits + k];
    }
    finalize_score_table(table);
    return table;
}

// Nested K x 2 CV: each repetition halves the data, trains in both directions
// and averages the two estimates; a repetition is undefined if either
// direction is.
inline ScoreTable score_nested_cv(const std::vector<AHSpec>& ahs, const Dataset& dataset,
                                  const std::string& estimator_id, int K, RngSeed seed,
                                  const EstimatorOptions& options = {}, int n_workers = 1) {
    if (K < 1) throw std::invalid_argument("score_nested_cv: need K >= 1");
    const SplitPlan plan = rrs_splits(dataset.size(), K, 0.5, seed);
    const Estimator estimator = make_estimator(estimator_id, options);
    std::vector<LearnerFn> learners;
    learners.reserve(ahs.size());
    for (const auto& spec : ahs) learners.push_back(make_learner(spec));

    const std::size_t n_ahs = ahs.size();
    const std::size_t n_splits = plan.repetitions.size();
    std::vector<Dataset> firsts;
    std::vector<Dataset> seconds;
    for (const auto& split : plan.repetitions) {
        firsts.push_back(subset_dataset(dataset, split.first));
        seconds.push_back(subset_dataset(dataset, split.second));
    }

    std::vector<std::optional<double>> cells(n_ahs * n_splits);
    parallel_for(n_ahs * n_splits, n_workers, [&](std::size_t task) {
        const std::size_t i = task / n_splits;
        const std::size_t k = task % n_splits;
        try {
            TabularPolicy forward = learners[i](
                firsts[k], derive(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k), std::uint64_t{0}));
            TabularPolicy backward = learners[i](
                seconds[k], derive(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k), std::uint64_t{1}));
            auto a = estimator(forward, seconds[k]);
            auto b = estimator(backward, firsts[k]);
            if (a.has_value() && b.has_value()) cells[task] = 0.5 * (*a + *b);
        } catch (const std::exception&) {
            cells[task] = std::nullopt;
        }
    });

    ScoreTable table;
    table.ahs = ahs;
    table.scheme_tag = "nested-cv";
    table.cells.assign(n_ahs, std::vector<std::optional<double>>(n_splits));
    for (std::size_t i = 0; i < n_ahs; ++i) {
        for (std::size_t k = 0; k < n_splits; ++k) table.cells[i][k] = cells[i * n_splits + k];
    }
    finalize_score_table(table);
    return table;
}

enum class BcaMode { Mean, Lower, Upper };

inline BcaMode parse_bca_mode(const std::string& mode) {
    if (mode == "mean") return BcaMode::Mean;
    if (mode == "lower") return BcaMode::Lower;
    if (mode == "upper") return BcaMode::Upper;
    throw std::invalid_argument("unknown BCa mode '" + mode + "' (valid: mean, lower, upper)");
}

// Standard BCa summary of a bootstrap distribution: bias correction z0 from
// the fraction of resamples below the point estimate, acceleration from
// jackknife skewness, endpoints read off the sorted resamples at the
// adjusted quantiles (index floor(alpha * B)).
inline double bca_interval(double point, std::vector<double> bootstrap, const std::vector<double>& jackknife,
                           double confidence, BcaMode mode) {
    if (bootstrap.empty()) throw std::invalid_argument("bca_interval: empty bootstrap sample");
    if (!(confidence > 0.0) || !(confidence < 1.0)) throw std::invalid_argument("bca_interval: confidence in (0,1)");
    const auto B = static_cast<double>(bootstrap.size());
    if (mode == BcaMode::Mean) {
        return std::accumulate(bootstrap.begin(), bootstrap.end(), 0.0) / B;
    }
    const auto [lo, hi] = std::minmax_element(bootstrap.begin(), bootstrap.end());
    if (*lo == *hi) return *lo;

    double below = 0.0;
    for (double b : bootstrap) {
        if (b < point) below += 1.0;
    }
    double frac = below / B;
    frac = std::min(std::max(frac, 0.5 / B), 1.0 - 0.5 / B);
    const double z0 = normal_cdf_inv(frac);

    double acceleration = 0.0;
    if (jackknife.size() >= 2) {
        double mean = std::accumulate(jackknife.begin(), jackknife.end(), 0.0) / static_cast<double>(jackknife.size());
        double sum2 = 0.0;
        double sum3 = 0.0;
        for (double j : jackknife) {
            double d = mean - j;
            sum2 += d * d;
            sum3 += d * d * d;
        }
        if (sum2 > 0.0) acceleration = sum3 / (6.0 * std::pow(sum2, 1.5));
    }

    const double tail = (1.0 - confidence) / 2.0;
    const double z_alpha = mode == BcaMode::Lower ? normal_cdf_inv(tail) : normal_cdf_inv(1.0 - tail);
    const double denom = std::max(1.0 - acceleration * (z0 + z_alpha), 1e-12);
    const double alpha_adj = normal_cdf(z0 + (z0 + z_alpha) / denom);

    std::sort(bootstrap.begin(), bootstrap.end());
    auto index = static_cast<long>(std::floor(alpha_adj * B));
    index = std::max(0L, std::min(index, static_cast<long>(bootstrap.size()) - 1));
    return bootstrap[static_cast<std::size_t>(index)];
}

// Train once per AH on the train side, bootstrap the validation trajectories
// (resample indices shared across AHs), and summarize each AH's estimate
// distribution with BCa.
inline ScoreTable score_bca(const std::vector<AHSpec>& ahs, const Dataset& dataset, const std::string& estimator_id,
                            const SplitPair& split, int B, BcaMode mode, double confidence, RngSeed seed,
                            const EstimatorOptions& options = {}, int n_workers = 1) {
    if (B < 1) throw std::invalid_argument("score_bca: need B >= 1");
    const Estimator estimator = make_estimator(estimator_id, options);
    const Dataset train = subset_dataset(dataset, split.first);
    const Dataset valid = subset_dataset(dataset, split.second);
    const std::size_t nv = valid.trajectories.size();

    std::vector<std::vector<std::size_t>> resamples(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        Rng rng(derive(seed, "boot", static_cast<std::uint64_t>(b)));
        auto& indices = resamples[static_cast<std::size_t>(b)];
        indices.reserve(nv);
        for (std::size_t j = 0; j < nv; ++j) indices.push_back(static_cast<std::size_t>(rng.uniform_int(nv)));
    }
    std::vector<std::vector<std::size_t>> jack_indices(nv);
    for (std::size_t j = 0; j < nv; ++j) {
        for (std::size_t i = 0; i < nv; ++i) {
            if (i != j) jack_indices[j].push_back(i);
        }
    }

    ScoreTable table;
    table.ahs = ahs;
    table.scheme_tag = "bca";
    table.cells.assign(ahs.size(), std::vector<std::optional<double>>(1));
    std::vector<std::optional<double>> results(ahs.size());
    parallel_for(ahs.size(), n_workers, [&](std::size_t i) {
        TabularPolicy policy;
        try {
            policy = make_learner(ahs[i])(train, derive(seed, static_cast<std::uint64_t>(i), std::uint64_t{0}));
        } catch (const std::exception&) {
            return;
        }
        auto point = estimator(policy, valid);
        if (!point.has_value()) return;
        std::vector<double> bootstrap;
        bootstrap.reserve(static_cast<std::size_t>(B));
        for (const auto& indices : resamples) {
            auto value = estimator(policy, subset_dataset(valid, indices));
            if (value.has_value()) bootstrap.push_back(*value);
        }
        if (bootstrap.empty()) return;
        std::vector<double> jackknife;
        jackknife.reserve(nv);
        for (const auto& indices : jack_indices) {
            if (indices.empty()) continue;
            auto value = estimator(policy, subset_dataset(valid, indices));
            if (value.has_value()) jackknife.push_back(*value);
        }
        results[i] = bca_interval(*point, bootstrap, jackknife, confidence, mode);
    });
    for (std::size_t i = 0; i < ahs.size(); ++i) table.cells[i][0] = results[i];
    finalize_score_table(table);
    return table;
}

struct BvftResult {
    std::vector<std::vector<double>> per_eps;
    std::vector<double> losses;
    int best_index = 0;
};

// Tournament loss over candidate Q tables: at each resolution eps, transitions
// are grouped by the (Q_i, Q_j) value buckets of their (s,a); the candidate's
// own target r + gamma * max_a' Q_i(s',a') is projected onto group means, and
// the loss is the RMS residual of Q_i against that projection, maximized over
// j and minimized over the grid.
inline BvftResult bvft_loss(const std::vector<TabularQ>& qs, const Dataset& dataset, double gamma,
                            const std::vector<double>& eps_grid = {0.1, 0.2, 0.5, 0.7, 1.0, 3.0, 10.0}) {
    if (qs.empty()) throw std::invalid_argument("bvft_loss: no Q tables");
    if (eps_grid.empty()) throw std::invalid_argument("bvft_loss: empty eps grid");
    for (double eps : eps_grid) {
        if (!(eps > 0.0)) throw std::invalid_argument("bvft_loss: resolutions must be positive");
    }

    struct Transition {
        int state;
        int action;
        double reward;
        int next_state;
    };
    std::vector<Transition> transitions;
    for (const auto& traj : dataset.trajectories) {
        for (const Step& step : traj.steps) {
            transitions.push_back({step.state, step.action, step.reward, step.next_state});
        }
    }
    if (transitions.empty()) throw std::invalid_argument("bvft_loss: dataset has no transitions");
    const auto n = static_cast<double>(transitions.size());
    const std::size_t n_q = qs.size();

    std::vector<std::vector<double>> targets(n_q, std::vector<double>(transitions.size()));
    for (std::size_t j = 0; j < n_q; ++j) {
        for (std::size_t t = 0; t < transitions.size(); ++t) {
            const auto& row = qs[j].values[static_cast<std::size_t>(transitions[t].next_state)];
            targets[j][t] = transitions[t].reward + gamma * *std::max_element(row.begin(), row.end());
        }
    }

    BvftResult result;
    result.per_eps.assign(n_q, std::vector<double>(eps_grid.size(), 0.0));
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
        const double eps = eps_grid[e];
        for (std::size_t i = 0; i < n_q; ++i) {
            double worst = 0.0;
            for (std::size_t j = 0; j < n_q; ++j) {
                std::map<std::pair<long long, long long>, std::pair<double, double>> groups;
                for (const auto& tr : transitions) {
                    double qi = qs[i].values[static_cast<std::size_t>(tr.state)][static_cast<std::size_t>(tr.action)];
                    double qj = qs[j].values[static_cast<std::size_t>(tr.state)][static_cast<std::size_t>(tr.action)];
                    auto key = std::make_pair(static_cast<long long>(std::floor(qi / eps)),
                                              static_cast<long long>(std::floor(qj / eps)));
                    groups[key].first += 1.0;
                }
                for (std::size_t t = 0; t < transitions.size(); ++t) {
                    const auto& tr = transitions[t];
                    double qi = qs[i].values[static_cast<std::size_t>(tr.state)][static_cast<std::size_t>(tr.action)];
                    double qj = qs[j].values[static_cast<std::size_t>(tr.state)][static_cast<std::size_t>(tr.action)];
                    auto key = std::make_pair(static_cast<long long>(std::floor(qi / eps)),
                                              static_cast<long long>(std::floor(qj / eps)));
                    groups[key].second += targets[i][t];
                }
                double sq = 0.0;
                for (const auto& tr : transitions) {
                    double qi = qs[i].values[static_cast<std::size_t>(tr.state)][static_cast<std::size_t>(tr.action)];
                    double qj = qs[j].values[static_cast<std::size_t>(tr.state)][static_cast<std::size_t>(tr.action)];
                    auto key = std::make_pair(static_cast<long long>(std::floor(qi / eps)),
                                              static_cast<long long>(std::floor(qj / eps)));
                    const auto& group = groups.at(key);
                    double fitted = group.second / group.first;
                    double residual = qi - fitted;
                    sq += residual * residual;
                }
                worst = std::max(worst, std::sqrt(sq / n));
            }
            result.per_eps[i][e] = worst;
        }
    }
    result.losses.assign(n_q, 0.0);
    for (std::size_t i = 0; i < n_q; ++i) {
        result.losses[i] = *std::min_element(result.per_eps[i].begin(), result.per_eps[i].end());
    }
    result.best_index = static_cast<int>(std::min_element(result.losses.begin(), result.losses.end()) -
                                         result.losses.begin());
    return result;
}

// BVFT as a selection strategy: one split, per-AH FQE Q tables fit on the
// validation side, negated tournament losses as scores (so argmax still picks
// the winner).
inline ScoreTable score_bvft(const std::vector<AHSpec>& ahs, const Dataset& dataset, const SplitPair& split,
                             RngSeed seed, const std::vector<double>& eps_grid = {0.1, 0.2, 0.5, 0.7, 1.0, 3.0, 10.0},
                             int fqe_iterations = 0, int n_workers = 1) {
    const Dataset train = subset_dataset(dataset, split.first);
    const Dataset valid = subset_dataset(dataset, split.second);

    std::vector<std::optional<TabularQ>> q_tables(ahs.size());
    parallel_for(ahs.size(), n_workers, [&](std::size_t i) {
        try {
            TabularPolicy policy = make_learner(ahs[i])(train, derive(seed, static_cast<std::uint64_t>(i),
                                                                      std::uint64_t{0}));
            q_tables[i] = fqe_tabular(policy, valid, fqe_iterations).second;
        } catch (const std::exception&) {
        }
    });

    std::vector<TabularQ> qs;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < q_tables.size(); ++i) {
        if (q_tables[i].has_value()) {
            qs.push_back(*q_tables[i]);
            positions.push_back(i);
        }
    }
    ScoreTable table;
    table.ahs = ahs;
    table.scheme_tag = "bvft";
    table.cells.assign(ahs.size(), std::vector<std::optional<double>>(1));
    if (!qs.empty()) {
        BvftResult result = bvft_loss(qs, valid, dataset.gamma, eps_grid);
        for (std::size_t p = 0; p < positions.size(); ++p) table.cells[positions[p]][0] = -result.losses[p];
    }
    finalize_score_table(table);
    return table;
}

// Algorithm 1's final step: argmax over aggregates (lowest index wins ties),
// then refit the winner on the full dataset with a fresh derived seed.
inline SelectionReport select_and_retrain(const ScoreTable& table, const Dataset& dataset, RngSeed seed) {
    int chosen = -1;
    double best = 0.0;
    for (int i = 0; i < table.n_ahs(); ++i) {
        if (!table.aggregates[static_cast<std::size_t>(i)].has_value()) continue;
        double value = *table.aggregates[static_cast<std::size_t>(i)];
        if (chosen < 0 || value > best) {
            chosen = i;
            best = value;
        }
    }
    if (chosen < 0) throw std::runtime_error("select_and_retrain: no evaluable AH in the score table");
    SelectionReport report;
    report.chosen = table.ahs[static_cast<std::size_t>(chosen)];
    report.score_table = table;
    report.strategy_tag = table.scheme_tag;
    report.seed = seed;
    report.deployed_policy = make_learner(report.chosen)(dataset, derive(seed, "retrain"));
    return report;
}

inline double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("kendall_tau: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("kendall_tau: need at least 2 items");
    long concordant = 0;
    long discordant = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            double da = a[i] - a[j];
            double db = b[i] - b[j];
            double product = da * db;
            if (product > 0.0) ++concordant;
            if (product < 0.0) ++discordant;
        }
    }
    const double pairs = 0.5 * static_cast<double>(a.size()) * static_cast<double>(a.size() - 1);
    return static_cast<double>(concordant - discordant) / pairs;
}

}  // namespace ssr
