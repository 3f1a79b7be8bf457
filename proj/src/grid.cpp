#include "opfenv/grid.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace opfenv {

using nlohmann::json;

GridIndex::GridIndex(const GridModel& grid) {
    index_.reserve(grid.buses.size());
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        index_.emplace(grid.buses[i].id, static_cast<int>(i));
    }
    if (!grid.external_grids.empty()) {
        auto it = index_.find(grid.slack_bus());
        slack_index_ = it == index_.end() ? -1 : it->second;
    }
}

int GridIndex::of_bus(int bus_id) const {
    auto it = index_.find(bus_id);
    if (it == index_.end()) {
        throw ValidationError("unknown bus id " + std::to_string(bus_id));
    }
    return it->second;
}

namespace {

bool grid_connected(const GridModel& grid) {
    if (grid.buses.empty()) return true;
    std::unordered_map<int, std::vector<int>> adj;
    for (const auto& br : grid.branches) {
        adj[br.from_bus].push_back(br.to_bus);
        adj[br.to_bus].push_back(br.from_bus);
    }
    std::set<int> seen;
    std::vector<int> stack{grid.buses.front().id};
    while (!stack.empty()) {
        int b = stack.back();
        stack.pop_back();
        if (!seen.insert(b).second) continue;
        for (int nb : adj[b]) stack.push_back(nb);
    }
    return seen.size() == grid.buses.size();
}

}  // namespace

std::vector<GridIssue> validate_grid(const GridModel& grid) {
    std::vector<GridIssue> issues;
    auto add = [&](GridIssueKind kind, std::string msg) {
        issues.push_back({kind, std::move(msg)});
    };

    if (!(grid.base_mva > 0.0)) add(GridIssueKind::BadBase, "base_mva must be positive");

    std::set<int> bus_ids;
    for (const auto& bus : grid.buses) {
        if (!bus_ids.insert(bus.id).second) {
            add(GridIssueKind::DuplicateId, "duplicate bus id " + std::to_string(bus.id));
        }
        if (!(bus.base_voltage_kv > 0.0)) {
            add(GridIssueKind::BadBase, "bus " + std::to_string(bus.id) + ": base_voltage_kv must be positive");
        }
        if (!(bus.v_min_pu > 0.0 && bus.v_min_pu < bus.v_max_pu)) {
            add(GridIssueKind::BadVoltageBand,
                "bus " + std::to_string(bus.id) + ": requires 0 < v_min_pu < v_max_pu");
        }
    }

    auto check_bus_ref = [&](int bus, const std::string& what) {
        if (!bus_ids.count(bus)) {
            add(GridIssueKind::DanglingReference, what + " references absent bus " + std::to_string(bus));
        }
    };

    for (const auto& br : grid.branches) {
        check_bus_ref(br.from_bus, "branch");
        check_bus_ref(br.to_bus, "branch");
        if (br.from_bus == br.to_bus) {
            add(GridIssueKind::DanglingReference,
                "branch connects bus " + std::to_string(br.from_bus) + " to itself");
        }
        if (br.r_pu == 0.0 && br.x_pu == 0.0) {
            add(GridIssueKind::BadImpedance, "branch " + std::to_string(br.from_bus) + "-" +
                                                 std::to_string(br.to_bus) + " has r = x = 0");
        }
        if (!(br.rating_mva > 0.0)) {
            add(GridIssueKind::BadRating, "branch " + std::to_string(br.from_bus) + "-" +
                                              std::to_string(br.to_bus) + " rating_mva must be positive");
        }
    }
    for (const auto& load : grid.loads) check_bus_ref(load.bus, "load");
    for (const auto& gen : grid.generators) {
        check_bus_ref(gen.bus, "generator");
        if (gen.p_max_mw < 0.0 || gen.s_max_mva < gen.p_max_mw) {
            add(GridIssueKind::BadCapability,
                "generator at bus " + std::to_string(gen.bus) + ": requires 0 <= p_max_mw <= s_max_mva");
        }
    }

    if (grid.external_grids.empty()) {
        add(GridIssueKind::MissingSlack, "grid has no external_grid record");
    } else if (grid.external_grids.size() > 1) {
        add(GridIssueKind::MultipleSlack,
            "grid has " + std::to_string(grid.external_grids.size()) + " external_grid records");
    }
    for (const auto& ext : grid.external_grids) {
        check_bus_ref(ext.bus, "external_grid");
        if (ext.q_exchange_max_mvar < 0.0) {
            add(GridIssueKind::BadCapability, "external_grid q_exchange_max_mvar must be >= 0");
        }
        if (ext.p_exchange_bounds_mw.first > ext.p_exchange_bounds_mw.second) {
            add(GridIssueKind::BadCapability, "external_grid p_exchange_bounds_mw must be (lower <= upper)");
        }
    }

    if (!grid_connected(grid)) {
        add(GridIssueKind::Disconnected, "grid graph is not connected");
    }
    return issues;
}

Eigen::MatrixXcd build_admittance_matrix(const GridModel& grid) {
    for (const auto& br : grid.branches) {
        if (br.r_pu == 0.0 && br.x_pu == 0.0) {
            throw ValidationError("SingularBranch: branch " + std::to_string(br.from_bus) + "-" +
                                  std::to_string(br.to_bus) + " has zero impedance");
        }
    }
    if (!grid_connected(grid)) {
        throw ValidationError("DisconnectedGrid: grid graph is not connected");
    }

    const GridIndex index(grid);
    const int n = static_cast<int>(grid.buses.size());
    Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : grid.branches) {
        const int i = index.of_bus(br.from_bus);
        const int j = index.of_bus(br.to_bus);
        const std::complex<double> y_series = 1.0 / std::complex<double>(br.r_pu, br.x_pu);
        const std::complex<double> y_shunt(0.0, br.b_shunt_pu / 2.0);
        ybus(i, j) -= y_series;
        ybus(j, i) -= y_series;
        ybus(i, i) += y_series + y_shunt;
        ybus(j, j) += y_series + y_shunt;
    }
    return ybus;
}

namespace {

void require_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ParseError(where + ": unknown key '" + it.key() + "'");
        }
    }
    for (const auto& key : allowed) {
        if (!obj.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
    }
}

double num(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ParseError(where + ": '" + std::string(key) + "' must be a number");
    return v.get<double>();
}

int integer(const json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ParseError(where + ": '" + std::string(key) + "' must be an integer");
    return v.get<int>();
}

}  // namespace

GridModel load_grid_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("grid document: ") + e.what());
    }
    require_keys(doc, {"base_mva", "buses", "branches", "loads", "generators", "external_grid"}, "grid");

    GridModel grid;
    grid.base_mva = num(doc, "base_mva", "grid");

    for (const auto& b : doc.at("buses")) {
        require_keys(b, {"id", "base_voltage_kv", "v_min_pu", "v_max_pu"}, "bus");
        Bus bus;
        bus.id = integer(b, "id", "bus");
        bus.base_voltage_kv = num(b, "base_voltage_kv", "bus");
        bus.v_min_pu = num(b, "v_min_pu", "bus");
        bus.v_max_pu = num(b, "v_max_pu", "bus");
        grid.buses.push_back(bus);
    }
    for (const auto& b : doc.at("branches")) {
        require_keys(b, {"from_bus", "to_bus", "r_pu", "x_pu", "b_shunt_pu", "rating_mva", "kind"}, "branch");
        Branch br;
        br.from_bus = integer(b, "from_bus", "branch");
        br.to_bus = integer(b, "to_bus", "branch");
        br.r_pu = num(b, "r_pu", "branch");
        br.x_pu = num(b, "x_pu", "branch");
        br.b_shunt_pu = num(b, "b_shunt_pu", "branch");
        br.rating_mva = num(b, "rating_mva", "branch");
        const std::string kind = b.at("kind").get<std::string>();
        if (kind == "line") {
            br.kind = BranchKind::line;
        } else if (kind == "transformer") {
            br.kind = BranchKind::transformer;
        } else {
            throw ParseError("branch: kind must be 'line' or 'transformer'");
        }
        grid.branches.push_back(br);
    }
    for (const auto& l : doc.at("loads")) {
        require_keys(l, {"bus", "p_mw", "q_mvar"}, "load");
        grid.loads.push_back({integer(l, "bus", "load"), num(l, "p_mw", "load"), num(l, "q_mvar", "load")});
    }
    for (const auto& g : doc.at("generators")) {
        require_keys(g, {"bus", "p_mw", "q_mvar", "p_max_mw", "s_max_mva", "price_active", "price_reactive"},
                     "generator");
        Generator gen;
        gen.bus = integer(g, "bus", "generator");
        gen.p_mw = num(g, "p_mw", "generator");
        gen.q_mvar = num(g, "q_mvar", "generator");
        gen.p_max_mw = num(g, "p_max_mw", "generator");
        gen.s_max_mva = num(g, "s_max_mva", "generator");
        gen.price_active = num(g, "price_active", "generator");
        gen.price_reactive = num(g, "price_reactive", "generator");
        grid.generators.push_back(gen);
    }
    {
        auto parse_ext = [](const json& e) {
            require_keys(e, {"bus", "q_exchange_max_mvar", "p_exchange_bounds_mw"}, "external_grid");
            ExternalGrid ext;
            ext.bus = integer(e, "bus", "external_grid");
            ext.q_exchange_max_mvar = num(e, "q_exchange_max_mvar", "external_grid");
            const auto& bounds = e.at("p_exchange_bounds_mw");
            if (!bounds.is_array() || bounds.size() != 2) {
                throw ParseError("external_grid: p_exchange_bounds_mw must be [lower, upper]");
            }
            ext.p_exchange_bounds_mw = {bounds[0].get<double>(), bounds[1].get<double>()};
            return ext;
        };
        const auto& e = doc.at("external_grid");
        if (e.is_array()) {
            for (const auto& item : e) grid.external_grids.push_back(parse_ext(item));
        } else {
            grid.external_grids.push_back(parse_ext(e));
        }
    }

    const auto issues = validate_grid(grid);
    if (!issues.empty()) {
        std::ostringstream msg;
        msg << "grid document failed validation:";
        for (const auto& issue : issues) msg << "\n  - " << issue.message;
        throw ValidationError(msg.str());
    }
    return grid;
}

GridModel load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_grid_text(buf.str());
}

std::string save_grid_text(const GridModel& grid) {
    json doc;
    doc["base_mva"] = grid.base_mva;
    doc["buses"] = json::array();
    for (const auto& bus : grid.buses) {
        doc["buses"].push_back({{"id", bus.id},
                                {"base_voltage_kv", bus.base_voltage_kv},
                                {"v_min_pu", bus.v_min_pu},
                                {"v_max_pu", bus.v_max_pu}});
    }
    doc["branches"] = json::array();
    for (const auto& br : grid.branches) {
        doc["branches"].push_back({{"from_bus", br.from_bus},
                                   {"to_bus", br.to_bus},
                                   {"r_pu", br.r_pu},
                                   {"x_pu", br.x_pu},
                                   {"b_shunt_pu", br.b_shunt_pu},
                                   {"rating_mva", br.rating_mva},
                                   {"kind", br.kind == BranchKind::line ? "line" : "transformer"}});
    }
    doc["loads"] = json::array();
    for (const auto& load : grid.loads) {
        doc["loads"].push_back({{"bus", load.bus}, {"p_mw", load.p_mw}, {"q_mvar", load.q_mvar}});
    }
    doc["generators"] = json::array();
    for (const auto& gen : grid.generators) {
        doc["generators"].push_back({{"bus", gen.bus},
                                     {"p_mw", gen.p_mw},
                                     {"q_mvar", gen.q_mvar},
                                     {"p_max_mw", gen.p_max_mw},
                                     {"s_max_mva", gen.s_max_mva},
                                     {"price_active", gen.price_active},
                                     {"price_reactive", gen.price_reactive}});
    }
    doc["external_grid"] = {{"bus", grid.external_grid().bus},
                            {"q_exchange_max_mvar", grid.external_grid().q_exchange_max_mvar},
                            {"p_exchange_bounds_mw",
                             {grid.external_grid().p_exchange_bounds_mw.first,
                              grid.external_grid().p_exchange_bounds_mw.second}}};
    return doc.dump(2) + "\n";
}

void save_grid(const GridModel& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write grid file: " + path);
    out << save_grid_text(grid);
}

}  // namespace opfenv
