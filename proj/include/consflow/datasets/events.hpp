#pragma once

/// @file events.hpp
/// @brief Continuous-time event tables: CSV ingestion, normalization and splits.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::datasets {

/// Rows (t, x) with t in [0, 1]; x is row-major [n, dim].
struct EventTable {
    std::size_t dim = 0;
    std::vector<double> t;
    std::vector<double> x;
    std::string provenance;
    double t_min = 0.0, t_max = 1.0;  ///< original time range before normalization
    std::vector<std::size_t> train, val, test;

    [[nodiscard]] std::size_t size() const { return t.size(); }

    /// Rows selected by `idx` as (t, x) arrays.
    void gather(const std::vector<std::size_t>& idx, std::vector<double>& ts, std::vector<double>& xs) const {
        ts.clear();
        xs.clear();
        ts.reserve(idx.size());
        xs.reserve(idx.size() * dim);
        for (std::size_t i : idx) {
            ts.push_back(t[i]);
            xs.insert(xs.end(), x.begin() + static_cast<long>(i * dim), x.begin() + static_cast<long>((i + 1) * dim));
        }
    }
};

/// Seeded 70/15/15 shuffle split; the three index sets are disjoint and cover all rows.
inline void split_table(EventTable& table, unsigned seed, double train_frac = 0.7, double val_frac = 0.15) {
    std::vector<std::size_t> idx(table.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n));
    const auto n_val = static_cast<std::size_t>(std::floor(val_frac * n));
    table.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
    table.val.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
    table.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_cell(const std::string& s, std::size_t line_no) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("csv parse error at line " + std::to_string(line_no) + ": '" + s + "' is not a number");
    }
    if (used != s.size()) {
        throw std::runtime_error("csv parse error at line " + std::to_string(line_no) + ": '" + s + "' is not a number");
    }
    if (!std::isfinite(v)) throw std::runtime_error("csv: non-finite value at line " + std::to_string(line_no));
    return v;
}

}  // namespace detail

/// Reads "t,x1,...,xD", min-max normalizes t into [0, 1] and splits 70/15/15.
inline EventTable load_events_csv(const std::string& path, unsigned split_seed = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open events file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("events file is empty: " + path);
    auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "t") {
        throw std::runtime_error("csv parse error at line 1: header must be t,x1,...,xD");
    }
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i] != "x" + std::to_string(i)) {
            throw std::runtime_error("csv parse error at line 1: expected column x" + std::to_string(i));
        }
    }
    EventTable table;
    table.dim = header.size() - 1;
    table.provenance = "file:" + path;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw std::runtime_error("csv parse error at line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        }
        table.t.push_back(detail::parse_cell(cells[0], line_no));
        for (std::size_t i = 1; i < cells.size(); ++i) table.x.push_back(detail::parse_cell(cells[i], line_no));
    }
    if (table.t.empty()) throw std::runtime_error("events file has no rows: " + path);
    const auto [mn, mx] = std::minmax_element(table.t.begin(), table.t.end());
    table.t_min = *mn;
    table.t_max = *mx;
    const double span = table.t_max - table.t_min;
    for (auto& v : table.t) v = span > 0.0 ? (v - table.t_min) / span : 0.0;
    split_table(table, split_seed);
    return table;
}

/// Writes the table (times mapped back to the original range) with round-trip precision.
inline void save_events_csv(const EventTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write events file: " + path);
    out << "t";
    for (std::size_t i = 1; i <= table.dim; ++i) out << ",x" << i;
    out << "\n" << std::setprecision(17);
    const double span = table.t_max - table.t_min;
    for (std::size_t r = 0; r < table.size(); ++r) {
        out << table.t_min + table.t[r] * span;
        for (std::size_t d = 0; d < table.dim; ++d) out << "," << table.x[r * table.dim + d];
        out << "\n";
    }
}

}  // namespace consflow::datasets
