#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssr/core.hpp"

namespace ssr {

// 17 significant digits round-trips every finite double.
inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

inline long parse_long(const std::string& text, const std::string& where) {
    try {
        std::size_t pos = 0;
        long v = std::stol(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": expected integer, got '" + text + "'");
    }
}

inline double parse_double(const std::string& text, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": expected number, got '" + text + "'");
    }
}

}  // namespace detail

inline std::string dataset_meta_path(const std::string& csv_path) { return csv_path + ".meta.json"; }

inline void write_dataset_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "traj_id,t,state,action,reward,next_state,propensity\n";
    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
        const auto& steps = dataset.trajectories[i].steps;
        for (std::size_t t = 0; t < steps.size(); ++t) {
            const Step& s = steps[t];
            out << i << ',' << t << ',' << s.state << ',' << s.action << ',' << format_g17(s.reward) << ','
                << s.next_state << ',' << format_g17(s.behavior_propensity) << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path);

    nlohmann::json meta;
    meta["gamma"] = dataset.gamma;
    meta["n_states"] = dataset.n_states;
    meta["n_actions"] = dataset.n_actions;
    meta["env_tag"] = dataset.env_tag;
    std::ofstream mout(dataset_meta_path(path));
    if (!mout) throw std::runtime_error("cannot open " + dataset_meta_path(path) + " for writing");
    mout << meta.dump(2) << '\n';
    if (!mout) throw std::runtime_error("write failed for " + dataset_meta_path(path));
}

inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ifstream min(dataset_meta_path(path));
    if (!min) throw std::runtime_error("cannot open " + dataset_meta_path(path));

    Dataset dataset;
    nlohmann::json meta;
    try {
        min >> meta;
        dataset.gamma = meta.at("gamma").get<double>();
        dataset.n_states = meta.at("n_states").get<int>();
        dataset.n_actions = meta.at("n_actions").get<int>();
        dataset.env_tag = meta.at("env_tag").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(dataset_meta_path(path) + ": invalid metadata: " + e.what());
    }

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header line");
    ++line_no;

    long expected_traj = 0;
    long expected_t = 0;
    Trajectory current;
    auto flush = [&]() {
        if (!current.steps.empty()) {
            dataset.trajectories.push_back(std::move(current));
            current = Trajectory{};
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        auto fields = detail::split_csv(line);
        if (fields.size() != 7) throw std::runtime_error(where + ": expected 7 fields, got " + std::to_string(fields.size()));
        long traj_id = detail::parse_long(fields[0], where);
        long t = detail::parse_long(fields[1], where);
        if (traj_id == expected_traj + 1 && t == 0) {
            flush();
            expected_traj = traj_id;
            expected_t = 0;
        }
        if (traj_id != expected_traj || t != expected_t) {
            throw std::runtime_error(where + ": steps out of order, expected traj_id " +
                                     std::to_string(expected_traj) + " t " + std::to_string(expected_t));
        }
        Step s;
        s.state = static_cast<int>(detail::parse_long(fields[2], where));
        s.action = static_cast<int>(detail::parse_long(fields[3], where));
        s.reward = detail::parse_double(fields[4], where);
        s.next_state = static_cast<int>(detail::parse_long(fields[5], where));
        s.behavior_propensity = detail::parse_double(fields[6], where);
        current.steps.push_back(s);
        ++expected_t;
    }
    flush();
    return dataset;
}

inline void write_table_csv(const std::vector<std::vector<double>>& table, const std::string& path,
                            const std::string& value_name) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "state,action," << value_name << '\n';
    for (std::size_t s = 0; s < table.size(); ++s) {
        for (std::size_t a = 0; a < table[s].size(); ++a) {
            out << s << ',' << a << ',' << format_g17(table[s][a]) << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::vector<std::vector<double>> load_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header line");
    long line_no = 1;
    std::vector<std::vector<double>> table;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        auto fields = detail::split_csv(line);
        if (fields.size() != 3) throw std::runtime_error(where + ": expected 3 fields");
        long s = detail::parse_long(fields[0], where);
        long a = detail::parse_long(fields[1], where);
        double v = detail::parse_double(fields[2], where);
        if (s < 0 || a < 0) throw std::runtime_error(where + ": negative index");
        if (static_cast<std::size_t>(s) >= table.size()) table.resize(static_cast<std::size_t>(s) + 1);
        auto& row = table[static_cast<std::size_t>(s)];
        if (static_cast<std::size_t>(a) >= row.size()) row.resize(static_cast<std::size_t>(a) + 1, 0.0);
        row[static_cast<std::size_t>(a)] = v;
    }
    return table;
}

inline void write_policy_csv(const TabularPolicy& policy, const std::string& path) {
    write_table_csv(policy.probs, path, "prob");
}

inline TabularPolicy load_policy_csv(const std::string& path) {
    TabularPolicy policy;
    policy.probs = load_table_csv(path);
    validate_policy(policy);
    return policy;
}

// Per-split OPE scores for a grid of algorithm-hyperparameter candidates.
// Undefined cells stay unset and are excluded from the aggregate; a candidate
// with no defined cell is unevaluable (aggregate unset, ranked below all).
struct ScoreTable {
    std::vector<AHSpec> ahs;
    std::vector<std::vector<std::optional<double>>> cells;
    std::vector<std::optional<double>> aggregates;
    std::vector<int> n_undefined;
    std::string scheme_tag;

    int n_ahs() const { return static_cast<int>(ahs.size()); }
    int n_splits() const { return cells.empty() ? 0 : static_cast<int>(cells[0].size()); }
};

inline void finalize_score_table(ScoreTable& table) {
    table.aggregates.assign(table.cells.size(), std::nullopt);
    table.n_undefined.assign(table.cells.size(), 0);
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        double sum = 0.0;
        int defined = 0;
        for (const auto& cell : table.cells[i]) {
            if (cell.has_value()) {
                sum += *cell;
                ++defined;
            } else {
                ++table.n_undefined[i];
            }
        }
        if (defined > 0) table.aggregates[i] = sum / defined;
    }
}

inline void write_score_table_csv(const ScoreTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "ah_label";
    for (int k = 0; k < table.n_splits(); ++k) out << ",split_" << k;
    out << ",aggregate,n_undefined\n";
    for (std::size_t i = 0; i < table.ahs.size(); ++i) {
        out << ah_label(table.ahs[i]);
        for (const auto& cell : table.cells[i]) {
            out << ',' << (cell.has_value() ? format_g17(*cell) : std::string("nan"));
        }
        out << ',' << (table.aggregates[i].has_value() ? format_g17(*table.aggregates[i]) : std::string("nan"));
        out << ',' << table.n_undefined[i] << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

inline ScoreTable load_score_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header line");
    auto header = detail::split_csv(line);
    if (header.size() < 3 || header.front() != "ah_label") throw std::runtime_error(path + ": bad header");
    int n_splits = static_cast<int>(header.size()) - 3;

    ScoreTable table;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        auto fields = detail::split_csv(line);
        if (static_cast<int>(fields.size()) != n_splits + 3) throw std::runtime_error(where + ": wrong field count");
        AHSpec spec;
        spec.display_label = fields[0];
        table.ahs.push_back(spec);
        std::vector<std::optional<double>> row;
        for (int k = 0; k < n_splits; ++k) {
            const std::string& cell = fields[static_cast<std::size_t>(k) + 1];
            if (cell == "nan") {
                row.emplace_back(std::nullopt);
            } else {
                row.emplace_back(detail::parse_double(cell, where));
            }
        }
        table.cells.push_back(std::move(row));
        const std::string& agg = fields[fields.size() - 2];
        table.aggregates.push_back(agg == "nan" ? std::optional<double>{}
                                                : std::optional<double>{detail::parse_double(agg, where)});
        table.n_undefined.push_back(static_cast<int>(detail::parse_long(fields.back(), where)));
    }
    return table;
}

struct SummaryRecord {
    std::string strategy;
    std::string estimator;
    std::string chosen_label;
    double aggregate = 0.0;
    std::optional<double> true_value;
    std::uint64_t seed = 0;
};

inline void write_summary_json(const SummaryRecord& record, const std::string& path) {
    nlohmann::json j;
    j["strategy"] = record.strategy;
    j["estimator"] = record.estimator;
    j["chosen_label"] = record.chosen_label;
    j["aggregate"] = record.aggregate;
    if (record.true_value.has_value()) j["true_value"] = *record.true_value;
    j["seed"] = record.seed;
    j["versions"] = {{"ssr", kVersion}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace ssr
