#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opfenv/dataset.hpp"

namespace opfenv {

enum class ProfileClass { household, commercial };

struct LoadProfileSpec {
    double base_p_mw = 0.0;
    ProfileClass profile = ProfileClass::household;
    // Per-load phase shift of the daily shape (feeder diversity): loads of
    // one class peak at staggered times rather than in lockstep.
    int offset_minutes = 0;
};

struct GenProfileSpec {
    double price_min = 0.0;
    double price_max = 0.0;
    // Active-power column for scenarios whose generators have exogenous
    // setpoints (voltage control). p_base_mw <= 0 suppresses the column.
    double p_base_mw = 0.0;
    ProfileClass profile = ProfileClass::commercial;
};

struct SyntheticProfileConfig {
    std::int64_t horizon = 3360;  // rows; must be >= 100
    int timestep_minutes = 15;
    std::vector<LoadProfileSpec> loads;
    std::vector<GenProfileSpec> generators;
    std::string price_quantity = "price_active";  // column suffix for prices
    double noise = 0.1;                           // relative amplitude in [0, 1]
    double power_factor = 0.95;                   // Q = P * tan(acos(pf))
    std::uint64_t seed = 1;

    void validate() const;  // throws ConfigError
};

/// Daily archetype value in [0, 1] at a minute of day, linearly interpolated
/// over the fixed 96-point shape table.
double profile_shape(ProfileClass profile, int minute_of_day);

/// Per-load P follows base * (daily shape) * (1 + noise * u), u ~ U(-1, 1);
/// Q = P * tan(acos(power_factor)); prices are uniform per row.
Dataset generate_profiles(const SyntheticProfileConfig& config);

}  // namespace opfenv
