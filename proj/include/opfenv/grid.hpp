#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "opfenv/errors.hpp"

namespace opfenv {

enum class BranchKind { line, transformer };

struct Bus {
    int id = 0;
    double base_voltage_kv = 0.0;
    double v_min_pu = 0.95;
    double v_max_pu = 1.05;
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double b_shunt_pu = 0.0;  // total line-charging susceptance, split half per terminal
    double rating_mva = 0.0;
    BranchKind kind = BranchKind::line;
};

struct Load {
    int bus = 0;
    double p_mw = 0.0;   // consumption positive
    double q_mvar = 0.0;
};

struct Generator {
    int bus = 0;
    double p_mw = 0.0;   // injection positive
    double q_mvar = 0.0;
    double p_max_mw = 0.0;
    double s_max_mva = 0.0;
    double price_active = 0.0;    // currency/MWh
    double price_reactive = 0.0;  // currency/Mvar^2 h
};

struct ExternalGrid {
    int bus = 0;  // slack
    double q_exchange_max_mvar = 0.0;
    std::pair<double, double> p_exchange_bounds_mw{0.0, 0.0};  // (lower, upper)
};

/// Static network description in per-unit. Immutable after load; share freely.
/// external_grids is a vector so that validate_grid can report missing or
/// duplicated slack records; a validated grid holds exactly one.
struct GridModel {
    double base_mva = 0.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::vector<ExternalGrid> external_grids;

    const ExternalGrid& external_grid() const { return external_grids.front(); }
    int slack_bus() const { return external_grids.front().bus; }
};

/// Bus-id to dense-index lookup built once per grid.
class GridIndex {
public:
    explicit GridIndex(const GridModel& grid);

    int of_bus(int bus_id) const;
    int slack_index() const { return slack_index_; }
    int size() const { return static_cast<int>(index_.size()); }

private:
    std::unordered_map<int, int> index_;
    int slack_index_ = -1;
};

enum class GridIssueKind {
    DanglingReference,
    DuplicateId,
    MissingSlack,
    MultipleSlack,
    Disconnected,
    BadVoltageBand,
    BadImpedance,
    BadRating,
    BadBase,
    BadCapability,
};

struct GridIssue {
    GridIssueKind kind;
    std::string message;
};

/// Diagnostic structural check. Empty result means the grid is usable.
std::vector<GridIssue> validate_grid(const GridModel& grid);

/// Dense nodal admittance matrix in per-unit, indexed by GridIndex order.
/// Throws SingularBranch conditions as ValidationError and DisconnectedGrid
/// as ValidationError via validate-style checks done here.
Eigen::MatrixXcd build_admittance_matrix(const GridModel& grid);

/// Parse a grid document (JSON text). Rejects malformed documents with
/// ParseError and structurally invalid grids with ValidationError.
GridModel load_grid_text(const std::string& text);
GridModel load_grid(const std::string& path);

/// Serialize back to the same document schema. load_grid(save) is the
/// identity on every numeric field.
std::string save_grid_text(const GridModel& grid);
void save_grid(const GridModel& grid, const std::string& path);

}  // namespace opfenv
