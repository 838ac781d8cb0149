#pragma once

#include <string>
#include <vector>

#include "mtdrive/pdm.hpp"
#include "mtdrive/scenario.hpp"

namespace mtdrive {

// One reasoning turn drawn on the plot; null trajectory turns are skipped.
struct BevTurnLayer {
    const Trajectory* trajectory = nullptr;
    const MetricReport* report = nullptr;
};

// Static SVG: drivable area, route, agents, expert, per-turn trajectories,
// and violation markers (red crosses for DAC points, yellow dots for NC
// boxes, blue dots for TTC boxes). Output is byte-deterministic.
void write_bev_svg(const std::string& path, const Scenario& scenario,
                   const std::vector<BevTurnLayer>& turns);

}  // namespace mtdrive
