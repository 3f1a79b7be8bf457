#include "opfenv/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace opfenv {

using nlohmann::json;

Dataset::Dataset(std::vector<std::string> columns, Eigen::MatrixXd rows)
    : columns_(std::move(columns)), rows_(std::move(rows)), split_boundary_(rows_.rows()) {
    if (static_cast<int>(columns_.size()) != rows_.cols()) {
        throw ValidationError("dataset: column names do not match row width");
    }
}

int Dataset::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i] == name) return static_cast<int>(i);
    }
    throw ValidationError("dataset has no column '" + name + "'");
}

bool Dataset::has_column(const std::string& name) const {
    for (const auto& col : columns_) {
        if (col == name) return true;
    }
    return false;
}

ColumnStats Dataset::stats_over(std::int64_t begin, std::int64_t end, int col) const {
    if (end <= begin) throw EmptyDataset("dataset slice is empty");
    ColumnStats stats;
    stats.min = rows_(begin, col);
    stats.max = rows_(begin, col);
    double sum = 0.0;
    for (std::int64_t r = begin; r < end; ++r) {
        const double v = rows_(r, col);
        stats.min = std::min(stats.min, v);
        stats.max = std::max(stats.max, v);
        sum += v;
    }
    stats.mean = sum / static_cast<double>(end - begin);
    return stats;
}

ColumnStats Dataset::stats_full(int col) const { return stats_over(0, n_rows(), col); }

ColumnStats Dataset::stats_train(int col) const { return stats_over(0, split_boundary_, col); }

Dataset split_dataset(Dataset dataset, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test_fraction must be in (0, 1)");
    }
    const std::int64_t n = dataset.n_rows();
    if (n == 0) throw EmptyDataset("cannot split an empty dataset");
    const auto n_test =
        static_cast<std::int64_t>(std::ceil(test_fraction * static_cast<double>(n)));
    dataset.split_boundary_ = n - n_test;
    return dataset;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void Dataset::save(const std::string& csv_path) const {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write dataset file: " + csv_path);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        out << (c ? "," : "") << columns_[c];
    }
    out << "\n";
    for (std::int64_t r = 0; r < n_rows(); ++r) {
        for (int c = 0; c < n_cols(); ++c) {
            out << (c ? "," : "") << format_double(rows_(r, c));
        }
        out << "\n";
    }

    json meta;
    meta["n_rows"] = n_rows();
    meta["split_boundary"] = split_boundary_;
    meta["columns"] = json::array();
    for (int c = 0; c < n_cols(); ++c) {
        const ColumnStats stats = stats_full(c);
        meta["columns"].push_back({{"name", columns_[static_cast<std::size_t>(c)]},
                                   {"min", stats.min},
                                   {"max", stats.max},
                                   {"mean", stats.mean}});
    }
    std::ofstream metaout(csv_path + ".meta.json");
    if (!metaout) throw IoError("cannot write dataset metadata: " + csv_path + ".meta.json");
    metaout << meta.dump(2) << "\n";
}

Dataset Dataset::load(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open dataset file: " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("dataset file is empty: " + csv_path);
    std::vector<std::string> columns;
    {
        std::istringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) columns.push_back(cell);
    }

    std::vector<double> values;
    std::int64_t n_rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::size_t count = 0;
        while (std::getline(row, cell, ',')) {
            values.push_back(std::stod(cell));
            ++count;
        }
        if (count != columns.size()) {
            throw ParseError("dataset row " + std::to_string(n_rows) + " has " +
                             std::to_string(count) + " cells, expected " +
                             std::to_string(columns.size()));
        }
        ++n_rows;
    }

    Eigen::MatrixXd rows(n_rows, static_cast<int>(columns.size()));
    for (std::int64_t r = 0; r < n_rows; ++r) {
        for (int c = 0; c < rows.cols(); ++c) {
            rows(r, c) = values[static_cast<std::size_t>(r * rows.cols() + c)];
        }
    }
    Dataset dataset(std::move(columns), std::move(rows));

    std::ifstream metain(csv_path + ".meta.json");
    if (metain) {
        json meta;
        try {
            metain >> meta;
        } catch (const json::exception& e) {
            throw ParseError(std::string("dataset metadata: ") + e.what());
        }
        if (meta.contains("split_boundary")) {
            dataset.split_boundary_ = meta.at("split_boundary").get<std::int64_t>();
        }
    }
    return dataset;
}

}  // namespace opfenv
