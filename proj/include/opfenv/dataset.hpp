#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "opfenv/errors.hpp"

namespace opfenv {

struct EmptyDataset : ValidationError {
    using ValidationError::ValidationError;
};

struct ColumnStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

/// Ordered rows of exogenous values with a contiguous train/test split.
/// Column names follow "<unit><index>:<quantity>", e.g. "load3:p_mw".
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> columns, Eigen::MatrixXd rows);

    std::int64_t n_rows() const { return rows_.rows(); }
    int n_cols() const { return static_cast<int>(rows_.cols()); }
    const std::vector<std::string>& columns() const { return columns_; }
    int column_index(const std::string& name) const;  // throws ValidationError
    bool has_column(const std::string& name) const;
    double at(std::int64_t row, int col) const { return rows_(row, col); }
    const Eigen::MatrixXd& rows() const { return rows_; }

    /// First test row; rows [boundary, n) are the held-out tail.
    std::int64_t split_boundary() const { return split_boundary_; }
    std::int64_t n_train() const { return split_boundary_; }
    std::int64_t n_test() const { return n_rows() - split_boundary_; }
    bool is_test_row(std::int64_t row) const { return row >= split_boundary_; }

    /// Statistics over all rows (the "known data range" used by samplers).
    ColumnStats stats_full(int col) const;
    /// Statistics over the training split only (used for observation scaling).
    ColumnStats stats_train(int col) const;

    void save(const std::string& csv_path) const;  // plus <csv_path>.meta.json
    static Dataset load(const std::string& csv_path);

    friend Dataset split_dataset(Dataset dataset, double test_fraction);

private:
    ColumnStats stats_over(std::int64_t begin, std::int64_t end, int col) const;

    std::vector<std::string> columns_;
    Eigen::MatrixXd rows_;
    std::int64_t split_boundary_ = 0;  // defaults to "all rows are training data"
};

/// Time-ordered holdout: the final ceil(fraction * N) rows become the test
/// split. Deterministic given the rows.
Dataset split_dataset(Dataset dataset, double test_fraction = 0.2);

}  // namespace opfenv
