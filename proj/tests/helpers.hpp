#pragma once

#include <algorithm>
#include <cmath>

#include "curio/harness.hpp"

namespace curio::testing {

// Hand-built oracle controller: turns toward the commanded object, drives to
// the middle of the watch band, then freezes. Reads the ground-truth arena
// state, which only test code may do.
class ScriptedWatchPolicy : public harness::EpisodePolicy {
 public:
  void begin_episode(const lang::Sentence&) override {}

  std::array<double, 4> act(const env::ObservationBundle&, const env::ArenaState& state) override {
    const auto& robot = state.robot;
    const auto to_target = state.objects[0].position - robot.position;
    const double distance = to_target.norm();
    const double heading_error =
        geom::wrap_angle(std::atan2(to_target.y, to_target.x) - robot.heading);

    if (std::abs(distance - 8.0) < 0.5 && std::abs(heading_error) < geom::deg_to_rad(8.0)) {
      return {0.0, 0.0, 0.0, 0.0};  // hold and let the streak build
    }
    const double omega = std::clamp(2.0 * heading_error, -2.0, 2.0);  // rad/s
    double v = 0.0;
    if (std::abs(heading_error) < geom::deg_to_rad(35.0)) {
      v = std::clamp(1.2 * (distance - 8.0), -6.0, 6.0) * std::cos(heading_error);
    }
    // track width 2 m: wheel speeds v -+ omega; commands are wheel / 10.
    const double left = (v - omega) / 10.0;
    const double right = (v + omega) / 10.0;
    return {std::clamp(left, -1.0, 1.0), std::clamp(right, -1.0, 1.0), 0.0, 0.0};
  }
};

}  // namespace curio::testing
