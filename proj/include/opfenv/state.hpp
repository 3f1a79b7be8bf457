#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace opfenv {

/// One sampled problem instance: everything the agent cannot control.
/// Vectors are aligned with GridModel::loads / GridModel::generators order.
/// gen_price holds reactive prices for voltage control and active prices for
/// economic dispatch. gen_p_mw holds the fixed active setpoints of the
/// voltage-control generators and stays empty for economic dispatch.
struct ExogenousState {
    Eigen::VectorXd load_p_mw;
    Eigen::VectorXd load_q_mvar;
    Eigen::VectorXd gen_p_mw;
    Eigen::VectorXd gen_price;

    // Provenance: dataset row for time-series draws, -1 for random samplers.
    std::int64_t row_id = -1;
    std::uint64_t sampler_seed = 0;
};

}  // namespace opfenv
