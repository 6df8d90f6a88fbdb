#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "curio/geom.hpp"
#include "curio/lang.hpp"

namespace curio::env {

using geom::Vec2;
using geom::Vec3;

enum class Shape : int { pillar = 0, pole, dumbbell, cone, hourglass };
enum class Color : int { red = 0, green, blue, cyan, magenta, yellow };

// Index-aligned with verb token order (token index = category + 1).
enum class ActionCategory : int {
  watch = 0,
  be_near,
  touch_top,
  push_forward,
  push_left,
  push_right,
};
inline constexpr int kNumActions = 6;

int noun_token(Shape s);
int adjective_token(Color c);
int verb_token(ActionCategory a);

// Fixed physical constants of the arena, robot, and success criteria.
struct ArenaParams {
  double arena_half = 10.0;        // walls at +-10 m
  double robot_clamp = 8.5;        // body center kept this far from walls
  double object_clamp = 9.0;       // object centers stay inside
  double min_separation = 4.0;     // spawn separation robot-object, object-object
  double body_half = 1.0;          // cube body, 2 m per side
  double body_height = 2.0;
  double wheel_track = 2.0;        // axle width used by the unicycle update
  double wheel_vel_max = 10.0;     // m/s
  double yaw_min_deg = -30.0, yaw_max_deg = 30.0;
  double pitch_min_deg = 0.0, pitch_max_deg = 90.0;
  double joint_vel_max_deg = 90.0;  // deg/s for both joints
  int substeps = 10;
  double dt = 0.025;  // seconds per substep; 0.25 s per step
  int max_steps = 30;

  // Arm: yaw rotates about z at the mount, pitch 0 deg points the boom
  // straight up, 90 deg horizontal forward.
  double arm_mount_forward = 0.8;
  double arm_mount_height = 1.8;
  double boom_length = 2.6;
  double boom_radius = 0.25;
  double hand_radius = 0.5;

  // Camera: on a short stalk at the body front, looking along the heading,
  // clear of the stowed boom column.
  double camera_forward = 1.25;
  double camera_height = 2.05;
  double camera_fov_deg = 90.0;
  double camera_far = 30.0;
  int image_size = 16;

  // Success thresholds.
  double facing_max_deg = 15.0;
  double watch_min_dist = 6.0, watch_max_dist = 10.0;
  double near_max_dist = 6.0;
  double touch_top_min_height = 3.75;
  double push_forward_min = 0.1;
  double push_lateral_min = 0.2;
  double push_wheel_gate = 5.0;  // m/s, strict upper bound for lateral pushes
  std::array<int, kNumActions> streak_required = {6, 5, 3, 3, 3, 3};
};

struct ObjectGeometry {
  double height;
  double collision_radius;  // vertical capsule proxy used for contacts/pushes
};
ObjectGeometry object_geometry(Shape s);
std::array<double, 3> color_rgb(Color c);

struct RobotState {
  Vec2 position;
  double heading = 0.0;  // radians, wrapped to (-pi, pi]
  double wheel_vel_left = 0.0, wheel_vel_right = 0.0;
  double yaw_angle_deg = 0.0;
  double pitch_angle_deg = 0.0;  // 0 = boom up, 90 = boom level
  double yaw_vel_deg = 0.0, pitch_vel_deg = 0.0;
};

struct ObjectInstance {
  Shape shape = Shape::pillar;
  Color color = Color::red;
  Vec2 position;
};

struct SuccessEvent {
  ActionCategory action;
  Color color;
  Shape shape;
  int step = 0;
  int object_index = 0;

  lang::Sentence sentence() const;
};

inline constexpr int kTouchSensors = 16;
inline constexpr int kProprioDims = 4;

struct ObservationBundle {
  std::vector<double> vision;  // image_size * image_size * 4, [row][col][rgbd]
  std::array<double, kTouchSensors> touch{};
  std::array<double, kProprioDims> proprioception{};
  lang::VoiceRows command_voice;   // 3 rows
  lang::VoiceRows feedback_voice;  // 1 row (silence) or 3 rows
};

struct MotorCommand {
  std::array<double, 4> value{};  // wheel L, wheel R, yaw vel, pitch vel in [-1, 1]

  static MotorCommand clamped(const std::array<double, 4>& v);
};

struct ArenaState {
  RobotState robot;
  std::array<ObjectInstance, 2> objects;  // [0] commanded target, [1] distractor
  int step_index = 0;
  // streaks[action][object]: consecutive steps the per-step condition held.
  std::array<std::array<int, 2>, kNumActions> streaks{};
  lang::Sentence command;
  bool done = false;
  std::mt19937_64 rng{0};
  std::array<double, kTouchSensors> last_touch{};  // contact fraction of the previous step
};

// Per-step, per-object inputs to the success predicates; exposed so the
// threshold fixtures can drive evaluate_success directly.
struct ObjectStepMetrics {
  static constexpr double kInfDistance = 1e9;
  double facing_deviation_deg = 180.0;
  double distance = kInfDistance;
  bool contact = false;            // any robot part touched the object this step
  bool touch_top_contact = false;  // hand contact while hand center >= min height
  double pushed_forward = 0.0;     // displacement along robot forward
  double pushed_left = 0.0;        // displacement along robot left
};

struct StepMetrics {
  std::array<ObjectStepMetrics, 2> objects;
  double max_wheel_speed = 0.0;  // max |wheel velocity| over the substeps
};

struct StepResult {
  ObservationBundle observation;
  double reward = 0.0;
  bool done = false;
  std::vector<SuccessEvent> events;  // at most one after prioritization
  StepMetrics metrics;               // per-object predicate inputs for this step
  // Per object, one entry per substep that resolved a contact:
  // {object displacement, penetration depth resolved}.
  std::array<std::vector<std::array<double, 2>>, 2> substep_pushes;
};

// Updates streaks in place and returns every category that just completed
// its required streak, before prioritization.
std::vector<SuccessEvent> evaluate_success(const ArenaParams& params, const StepMetrics& metrics,
                                           const std::array<ObjectInstance, 2>& objects,
                                           std::array<std::array<int, 2>, kNumActions>& streaks,
                                           int step_index);

// Applies the action constraints: Touch-the-Top suppresses pushes, competing
// pushes resolve by greatest distance pushed, remaining ties prefer the
// commanded goal and then the lowest (category, object) pair.
std::optional<SuccessEvent> apply_action_constraints(const std::vector<SuccessEvent>& candidates,
                                                     const StepMetrics& metrics,
                                                     const lang::Sentence& command);

class Arena {
 public:
  Arena() = default;

  // Places the robot and both objects; throws std::invalid_argument when the
  // sentence is not part of the scale's vocabulary.
  static Arena reset(uint64_t seed, const lang::Sentence& command,
                     const lang::ScaleConfig& scale, const ArenaParams& params = {});

  // Advances one control step; throws std::logic_error after done.
  StepResult step(const MotorCommand& command);

  const ArenaState& state() const { return state_; }
  ArenaState& mutable_state() { return state_; }
  const ArenaParams& params() const { return params_; }

  ObservationBundle observation() const;  // observation of the current state

  // Sensors (also exposed standalone for tests).
  std::vector<double> render_vision() const;
  std::array<double, kProprioDims> proprioception() const;

  // World-frame arm geometry for the current state.
  Vec3 arm_mount() const;
  Vec3 hand_center() const;
  geom::Capsule boom_capsule() const;

 private:
  ArenaParams params_;
  ArenaState state_;
};

std::array<double, kProprioDims> normalize_proprioception(const ArenaParams& params,
                                                          const RobotState& robot);
RobotState denormalize_proprioception(const ArenaParams& params,
                                      const std::array<double, kProprioDims>& values);

// One line per step: step, pose, arm angles, reward, done, event.
struct TraceRecord {
  int step = 0;
  RobotState robot;
  double reward = 0.0;
  bool done = false;
  std::optional<SuccessEvent> event;
};
void write_trace(std::ostream& out, const std::vector<TraceRecord>& records);

}  // namespace curio::env
