#include "opfenv/profiles.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "opfenv/rng.hpp"

namespace opfenv {

namespace {

// Anchors (hour, level) of the two daily archetypes; levels are fractions of
// the base power. Interpolated to the 96-point quarter-hour table below.
// The two classes peak at different hours, so the simultaneous system peak
// sits well below the sum of the per-unit peaks - the coupling structure
// that independent per-column sampling cannot reproduce.
constexpr std::array<std::pair<double, double>, 9> kHouseholdAnchors = {{
    {0.0, 0.60}, {5.0, 0.58}, {8.0, 0.66}, {16.0, 0.62}, {18.0, 0.74},
    {19.5, 1.00}, {21.0, 0.74}, {23.0, 0.64}, {24.0, 0.60},
}};

constexpr std::array<std::pair<double, double>, 9> kCommercialAnchors = {{
    {0.0, 0.58}, {6.0, 0.56}, {9.0, 0.68}, {11.5, 0.86}, {13.0, 1.00},
    {14.5, 0.86}, {17.0, 0.66}, {21.0, 0.60}, {24.0, 0.58},
}};

template <std::size_t N>
std::array<double, 96> tabulate(const std::array<std::pair<double, double>, N>& anchors) {
    std::array<double, 96> table{};
    for (int i = 0; i < 96; ++i) {
        const double hour = i * 0.25;
        std::size_t seg = 0;
        while (seg + 2 < anchors.size() && anchors[seg + 1].first <= hour) ++seg;
        const auto [h0, v0] = anchors[seg];
        const auto [h1, v1] = anchors[seg + 1];
        table[static_cast<std::size_t>(i)] = v0 + (v1 - v0) * (hour - h0) / (h1 - h0);
    }
    return table;
}

const std::array<double, 96>& shape_table(ProfileClass profile) {
    static const std::array<double, 96> household = tabulate(kHouseholdAnchors);
    static const std::array<double, 96> commercial = tabulate(kCommercialAnchors);
    return profile == ProfileClass::household ? household : commercial;
}

}  // namespace

double profile_shape(ProfileClass profile, int minute_of_day) {
    const auto& table = shape_table(profile);
    const int minute = ((minute_of_day % 1440) + 1440) % 1440;
    const double slot = minute / 15.0;
    const int i0 = static_cast<int>(slot);
    const int i1 = (i0 + 1) % 96;
    const double frac = slot - i0;
    return table[static_cast<std::size_t>(i0)] * (1.0 - frac) +
           table[static_cast<std::size_t>(i1)] * frac;
}

void SyntheticProfileConfig::validate() const {
    if (horizon < 100) throw ConfigError("profile horizon must be >= 100 timesteps");
    if (timestep_minutes <= 0 || timestep_minutes > 1440) {
        throw ConfigError("timestep_minutes must be in (0, 1440]");
    }
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise amplitude must be in [0, 1]");
    if (!(power_factor > 0.0 && power_factor <= 1.0)) {
        throw ConfigError("power_factor must be in (0, 1]");
    }
    for (const auto& gen : generators) {
        if (gen.price_min > gen.price_max) throw ConfigError("price range must be (min <= max)");
    }
}

Dataset generate_profiles(const SyntheticProfileConfig& config) {
    config.validate();
    RngStream rng(config.seed, 0x9e0f11e5ULL);
    const double tan_phi = std::tan(std::acos(config.power_factor));

    std::vector<std::string> columns;
    for (std::size_t l = 0; l < config.loads.size(); ++l) {
        columns.push_back("load" + std::to_string(l) + ":p_mw");
        columns.push_back("load" + std::to_string(l) + ":q_mvar");
    }
    for (std::size_t g = 0; g < config.generators.size(); ++g) {
        if (config.generators[g].p_base_mw > 0.0) {
            columns.push_back("gen" + std::to_string(g) + ":p_mw");
        }
    }
    for (std::size_t g = 0; g < config.generators.size(); ++g) {
        columns.push_back("gen" + std::to_string(g) + ":" + config.price_quantity);
    }

    Eigen::MatrixXd rows(config.horizon, static_cast<int>(columns.size()));
    for (std::int64_t r = 0; r < config.horizon; ++r) {
        const int minute = static_cast<int>((r * config.timestep_minutes) % 1440);
        int c = 0;
        for (const auto& load : config.loads) {
            const double wobble = 1.0 + config.noise * rng.uniform(-1.0, 1.0);
            const double shape = profile_shape(load.profile, minute - load.offset_minutes);
            const double p = load.base_p_mw * shape * wobble;
            rows(r, c++) = p;
            rows(r, c++) = p * tan_phi;
        }
        for (const auto& gen : config.generators) {
            if (gen.p_base_mw <= 0.0) continue;
            const double wobble = 1.0 + config.noise * rng.uniform(-1.0, 1.0);
            const double p = gen.p_base_mw * profile_shape(gen.profile, minute) * wobble;
            rows(r, c++) = std::clamp(p, 0.0, gen.p_base_mw);
        }
        for (const auto& gen : config.generators) {
            rows(r, c++) = rng.uniform(gen.price_min, gen.price_max);
        }
    }
    return Dataset(std::move(columns), std::move(rows));
}

}  // namespace opfenv
