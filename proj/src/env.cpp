#include "curio/env.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace curio::env {

int noun_token(Shape s) { return lang::kNounBase + static_cast<int>(s); }
int adjective_token(Color c) { return lang::kAdjectiveBase + static_cast<int>(c); }
int verb_token(ActionCategory a) { return lang::kVerbBase + static_cast<int>(a); }

lang::Sentence SuccessEvent::sentence() const {
  return {verb_token(action), adjective_token(color), noun_token(shape)};
}

ObjectGeometry object_geometry(Shape s) {
  switch (s) {
    case Shape::pillar: return {4.0, 1.0};
    case Shape::pole: return {6.0, 0.5};
    case Shape::dumbbell: return {5.0, 1.0};
    case Shape::cone: return {4.0, 1.0};
    case Shape::hourglass: return {4.0, 1.0};
  }
  throw std::logic_error("unknown shape");
}

std::array<double, 3> color_rgb(Color c) {
  switch (c) {
    case Color::red: return {1.0, 0.0, 0.0};
    case Color::green: return {0.0, 1.0, 0.0};
    case Color::blue: return {0.0, 0.0, 1.0};
    case Color::cyan: return {0.0, 1.0, 1.0};
    case Color::magenta: return {1.0, 0.0, 1.0};
    case Color::yellow: return {1.0, 1.0, 0.0};
  }
  throw std::logic_error("unknown color");
}

MotorCommand MotorCommand::clamped(const std::array<double, 4>& v) {
  MotorCommand c;
  for (int i = 0; i < 4; ++i) c.value[static_cast<size_t>(i)] = std::clamp(v[static_cast<size_t>(i)], -1.0, 1.0);
  return c;
}

namespace {

Vec2 heading_forward(double heading) { return {std::cos(heading), std::sin(heading)}; }
Vec2 heading_left(double heading) { return {-std::sin(heading), std::cos(heading)}; }

struct ContactRecord {
  int patch = -1;
  bool hand = false;
  double hand_height = 0.0;
};

// Horizontal push that separates a probe point at `probe` from the object's
// vertical capsule proxy, honouring the vertical offset. Returns the depth
// resolved (0 when not in contact).
double resolve_point_capsule(const Vec3& probe, double combined_radius, const Vec2& fallback_dir,
                             double height, Vec2* object_pos) {
  const Vec3 axis_bottom{object_pos->x, object_pos->y, 0.0};
  const Vec3 axis_top{object_pos->x, object_pos->y, height};
  Vec3 closest;
  geom::closest_point_on_segment(axis_bottom, axis_top, probe, &closest);
  const double dz = probe.z - closest.z;
  if (std::abs(dz) >= combined_radius) return 0.0;
  const double h_required = std::sqrt(combined_radius * combined_radius - dz * dz);
  const Vec2 offset{probe.x - object_pos->x, probe.y - object_pos->y};
  const double h = offset.norm();
  if (h >= h_required) return 0.0;
  const double depth = h_required - h;
  const Vec2 dir = h > 1e-9 ? (offset * (-1.0 / h)) : fallback_dir;
  *object_pos = *object_pos + dir * depth;
  return depth;
}

int body_patch_from_contact(const Vec2& contact_local, const Vec2& half, bool* both_rows) {
  *both_rows = false;
  const double fx = std::abs(contact_local.x - half.x);
  const double bx = std::abs(contact_local.x + half.x);
  const double ly = std::abs(contact_local.y - half.y);
  const double ry = std::abs(contact_local.y + half.y);
  const double m = std::min({fx, bx, ly, ry});
  if (m == fx) {
    *both_rows = true;  // front face has a 2x2 grid; tall objects touch both rows
    return contact_local.y >= 0.0 ? 0 : 1;
  }
  if (m == bx) return 4;
  if (m == ly) return 5;
  return 6;
}

}  // namespace

Vec3 Arena::arm_mount() const {
  const Vec2 fwd = heading_forward(state_.robot.heading);
  const Vec2 xy = state_.robot.position + fwd * params_.arm_mount_forward;
  return {xy.x, xy.y, params_.arm_mount_height};
}

Vec3 Arena::hand_center() const {
  const double yaw = geom::deg_to_rad(state_.robot.yaw_angle_deg);
  const double pitch = geom::deg_to_rad(state_.robot.pitch_angle_deg);
  // Boom direction in the robot frame: pitch 0 points up, 90 level; yaw swings
  // the level component about z.
  const double horiz = std::sin(pitch);
  const Vec2 dir_xy = Vec2{std::cos(yaw), std::sin(yaw)}.rotated(state_.robot.heading) * horiz;
  const Vec3 dir{dir_xy.x, dir_xy.y, std::cos(pitch)};
  return arm_mount() + dir * params_.boom_length;
}

geom::Capsule Arena::boom_capsule() const {
  return {arm_mount(), hand_center(), params_.boom_radius};
}

Arena Arena::reset(uint64_t seed, const lang::Sentence& command, const lang::ScaleConfig& scale,
                   const ArenaParams& params) {
  if (!scale.contains(command))
    throw std::invalid_argument("sentence '" + command.text() + "' not in scale '" + scale.name + "'");
  Arena arena;
  arena.params_ = params;
  auto& st = arena.state_;
  st.command = command;
  st.rng.seed(seed);

  auto uniform = [&st](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(st.rng);
  };

  st.robot.position = {uniform(-params.robot_clamp, params.robot_clamp),
                       uniform(-params.robot_clamp, params.robot_clamp)};
  st.robot.heading = uniform(-geom::kPi, geom::kPi);

  auto place_object = [&](const std::vector<Vec2>& keep_away) {
    while (true) {
      Vec2 p{uniform(-params.object_clamp, params.object_clamp),
             uniform(-params.object_clamp, params.object_clamp)};
      bool ok = (p - st.robot.position).norm() >= params.min_separation;
      for (const auto& q : keep_away) ok = ok && (p - q).norm() >= params.min_separation;
      if (ok) return p;
    }
  };

  st.objects[0].color = static_cast<Color>(command.adjective - lang::kAdjectiveBase);
  st.objects[0].shape = static_cast<Shape>(command.noun - lang::kNounBase);
  st.objects[0].position = place_object({});

  // Distractor: uniform over the scale's (color, shape) pairs minus the target.
  const int pairs = scale.adjectives * scale.nouns;
  const int target_pair = static_cast<int>(st.objects[0].color) * scale.nouns +
                          static_cast<int>(st.objects[0].shape);
  int pick = static_cast<int>(std::uniform_int_distribution<int>(0, pairs - 2)(st.rng));
  if (pick >= target_pair) ++pick;
  st.objects[1].color = static_cast<Color>(pick / scale.nouns);
  st.objects[1].shape = static_cast<Shape>(pick % scale.nouns);
  st.objects[1].position = place_object({st.objects[0].position});

  return arena;
}

std::array<double, kProprioDims> normalize_proprioception(const ArenaParams& params,
                                                          const RobotState& robot) {
  const double vel_span = 2.0 * params.joint_vel_max_deg;
  return {
      (robot.yaw_angle_deg - params.yaw_min_deg) / (params.yaw_max_deg - params.yaw_min_deg),
      (robot.pitch_angle_deg - params.pitch_min_deg) / (params.pitch_max_deg - params.pitch_min_deg),
      (robot.yaw_vel_deg + params.joint_vel_max_deg) / vel_span,
      (robot.pitch_vel_deg + params.joint_vel_max_deg) / vel_span,
  };
}

RobotState denormalize_proprioception(const ArenaParams& params,
                                      const std::array<double, kProprioDims>& values) {
  RobotState r;
  r.yaw_angle_deg = params.yaw_min_deg + values[0] * (params.yaw_max_deg - params.yaw_min_deg);
  r.pitch_angle_deg = params.pitch_min_deg + values[1] * (params.pitch_max_deg - params.pitch_min_deg);
  r.yaw_vel_deg = values[2] * 2.0 * params.joint_vel_max_deg - params.joint_vel_max_deg;
  r.pitch_vel_deg = values[3] * 2.0 * params.joint_vel_max_deg - params.joint_vel_max_deg;
  return r;
}

std::array<double, kProprioDims> Arena::proprioception() const {
  return normalize_proprioception(params_, state_.robot);
}

std::vector<double> Arena::render_vision() const {
  const int size = params_.image_size;
  std::vector<double> image(static_cast<size_t>(size * size * 4), 0.0);

  struct Hit {
    double t = geom::kInf;
    std::array<double, 3> rgb{0.0, 0.0, 0.0};
  };

  const Vec2 fwd2 = heading_forward(state_.robot.heading);
  const Vec2 cam_xy = state_.robot.position + fwd2 * params_.camera_forward;
  const Vec3 origin{cam_xy.x, cam_xy.y, params_.camera_height};
  const Vec3 forward{fwd2.x, fwd2.y, 0.0};
  const Vec3 right{fwd2.y, -fwd2.x, 0.0};
  const Vec3 up{0.0, 0.0, 1.0};
  const double half_tan = std::tan(geom::deg_to_rad(params_.camera_fov_deg) / 2.0);

  const geom::Capsule boom = boom_capsule();
  const geom::Sphere hand{hand_center(), params_.hand_radius};
  constexpr std::array<double, 3> kGround{0.35, 0.35, 0.35};
  constexpr std::array<double, 3> kBoom{0.6, 0.6, 0.6};
  constexpr std::array<double, 3> kHand{0.9, 0.9, 0.9};

  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double u = (2.0 * (c + 0.5) / size - 1.0) * half_tan;
      const double v = (1.0 - 2.0 * (r + 0.5) / size) * half_tan;
      const Vec3 dir = (forward + right * u + up * v).normalized();
      const geom::Ray ray{origin, dir};

      Hit hit;
      auto consider = [&hit](double t, const std::array<double, 3>& rgb) {
        if (t < hit.t) hit = {t, rgb};
      };

      consider(geom::intersect_ground(ray, params_.arena_half), kGround);
      consider(geom::intersect(ray, boom), kBoom);
      consider(geom::intersect(ray, hand), kHand);

      for (const auto& obj : state_.objects) {
        const auto rgb = color_rgb(obj.color);
        const Vec2 p = obj.position;
        switch (obj.shape) {
          case Shape::pillar:
            consider(geom::intersect(ray, geom::CylinderZ{p, 1.0, 0.0, 4.0}), rgb);
            break;
          case Shape::pole:
            consider(geom::intersect(ray, geom::CylinderZ{p, 0.5, 0.0, 6.0}), rgb);
            break;
          case Shape::dumbbell:
            consider(geom::intersect(ray, geom::Sphere{{p.x, p.y, 1.0}, 1.0}), rgb);
            consider(geom::intersect(ray, geom::Sphere{{p.x, p.y, 4.0}, 1.0}), rgb);
            consider(geom::intersect(ray, geom::CylinderZ{p, 0.25, 1.0, 4.0}), rgb);
            break;
          case Shape::cone:
            consider(geom::intersect(ray, geom::ConeZ{p, 1.0, 0.0, 4.0}), rgb);
            break;
          case Shape::hourglass:
            consider(geom::intersect(ray, geom::ConeZ{p, 1.0, 0.0, 2.0}), rgb);
            consider(geom::intersect(ray, geom::ConeZ{p, 1.0, 4.0, 2.0}), rgb);
            break;
        }
      }

      const size_t base = (static_cast<size_t>(r) * static_cast<size_t>(size) + static_cast<size_t>(c)) * 4;
      if (hit.t <= params_.camera_far) {
        image[base + 0] = hit.rgb[0];
        image[base + 1] = hit.rgb[1];
        image[base + 2] = hit.rgb[2];
        image[base + 3] = hit.t / params_.camera_far;
      } else {
        image[base + 3] = 1.0;
      }
    }
  }
  return image;
}

ObservationBundle Arena::observation() const {
  ObservationBundle obs;
  obs.vision = render_vision();
  obs.touch = state_.last_touch;
  obs.proprioception = proprioception();
  obs.command_voice = lang::encode_sentence(state_.command);
  obs.feedback_voice = lang::silence();
  return obs;
}

std::vector<SuccessEvent> evaluate_success(const ArenaParams& params, const StepMetrics& metrics,
                                           const std::array<ObjectInstance, 2>& objects,
                                           std::array<std::array<int, 2>, kNumActions>& streaks,
                                           int step_index) {
  std::vector<SuccessEvent> fired;
  for (int obj = 0; obj < 2; ++obj) {
    const auto& m = metrics.objects[static_cast<size_t>(obj)];
    const bool facing = m.facing_deviation_deg < params.facing_max_deg;
    const bool wheels_slow = metrics.max_wheel_speed < params.push_wheel_gate;
    const std::array<bool, kNumActions> ok = {
        facing && m.distance > params.watch_min_dist && m.distance < params.watch_max_dist,
        facing && m.distance < params.near_max_dist && !m.contact,
        m.touch_top_contact,
        m.pushed_forward > params.push_forward_min,
        m.pushed_left > params.push_lateral_min && wheels_slow,
        -m.pushed_left > params.push_lateral_min && wheels_slow,
    };
    for (int a = 0; a < kNumActions; ++a) {
      auto& streak = streaks[static_cast<size_t>(a)][static_cast<size_t>(obj)];
      if (!ok[static_cast<size_t>(a)]) {
        streak = 0;
        continue;
      }
      ++streak;
      if (streak == params.streak_required[static_cast<size_t>(a)]) {
        fired.push_back({static_cast<ActionCategory>(a), objects[static_cast<size_t>(obj)].color,
                         objects[static_cast<size_t>(obj)].shape, step_index, obj});
      }
    }
  }
  return fired;
}

std::optional<SuccessEvent> apply_action_constraints(const std::vector<SuccessEvent>& candidates,
                                                     const StepMetrics& metrics,
                                                     const lang::Sentence& command) {
  if (candidates.empty()) return std::nullopt;
  std::vector<SuccessEvent> kept = candidates;

  const bool touch_top = std::any_of(kept.begin(), kept.end(), [](const SuccessEvent& e) {
    return e.action == ActionCategory::touch_top;
  });
  if (touch_top) {
    std::erase_if(kept, [](const SuccessEvent& e) {
      return e.action == ActionCategory::push_forward || e.action == ActionCategory::push_left ||
             e.action == ActionCategory::push_right;
    });
  }

  auto push_distance = [&metrics](const SuccessEvent& e) {
    const auto& m = metrics.objects[static_cast<size_t>(e.object_index)];
    switch (e.action) {
      case ActionCategory::push_forward: return m.pushed_forward;
      case ActionCategory::push_left: return m.pushed_left;
      case ActionCategory::push_right: return -m.pushed_left;
      default: return 0.0;
    }
  };
  const bool has_forward = std::any_of(kept.begin(), kept.end(), [](const SuccessEvent& e) {
    return e.action == ActionCategory::push_forward;
  });
  const bool has_lateral = std::any_of(kept.begin(), kept.end(), [](const SuccessEvent& e) {
    return e.action == ActionCategory::push_left || e.action == ActionCategory::push_right;
  });
  if (has_forward && has_lateral) {
    double best = -1.0;
    for (const auto& e : kept) best = std::max(best, push_distance(e));
    std::erase_if(kept, [&](const SuccessEvent& e) {
      const bool is_push = e.action == ActionCategory::push_forward ||
                           e.action == ActionCategory::push_left ||
                           e.action == ActionCategory::push_right;
      return is_push && push_distance(e) < best;
    });
  }

  if (kept.empty()) return std::nullopt;
  for (const auto& e : kept)
    if (e.sentence() == command) return e;
  auto best = std::min_element(kept.begin(), kept.end(), [](const SuccessEvent& a, const SuccessEvent& b) {
    return std::make_pair(static_cast<int>(a.action), a.object_index) <
           std::make_pair(static_cast<int>(b.action), b.object_index);
  });
  return *best;
}

StepResult Arena::step(const MotorCommand& raw_command) {
  if (state_.done) throw std::logic_error("step() called on a finished episode");
  auto& st = state_;
  const auto& p = params_;

  const MotorCommand command = MotorCommand::clamped(raw_command.value);
  const double target_vl = command.value[0] * p.wheel_vel_max;
  const double target_vr = command.value[1] * p.wheel_vel_max;
  const double target_yaw_vel = command.value[2] * p.joint_vel_max_deg;
  const double target_pitch_vel = command.value[3] * p.joint_vel_max_deg;

  const double start_vl = st.robot.wheel_vel_left;
  const double start_vr = st.robot.wheel_vel_right;
  const double start_yaw_vel = st.robot.yaw_vel_deg;
  const double start_pitch_vel = st.robot.pitch_vel_deg;

  const std::array<Vec2, 2> object_start{st.objects[0].position, st.objects[1].position};

  StepMetrics metrics;
  std::array<int, kTouchSensors> touch_substeps{};
  std::array<bool, 2> contact{false, false};
  std::array<bool, 2> touch_top_contact{false, false};
  std::array<std::vector<std::array<double, 2>>, 2> substep_pushes;

  for (int k = 1; k <= p.substeps; ++k) {
    std::array<bool, kTouchSensors> patch_hit{};
    auto mark_patch = [&patch_hit](int patch) { patch_hit[static_cast<size_t>(patch)] = true; };
    const double f = static_cast<double>(k) / p.substeps;
    const double vl = start_vl + (target_vl - start_vl) * f;
    const double vr = start_vr + (target_vr - start_vr) * f;
    const double yaw_vel = start_yaw_vel + (target_yaw_vel - start_yaw_vel) * f;
    const double pitch_vel = start_pitch_vel + (target_pitch_vel - start_pitch_vel) * f;

    metrics.max_wheel_speed = std::max({metrics.max_wheel_speed, std::abs(vl), std::abs(vr)});

    const double v = 0.5 * (vl + vr);
    const double omega = (vr - vl) / p.wheel_track;
    st.robot.heading = geom::wrap_angle(st.robot.heading + omega * p.dt);
    st.robot.position = st.robot.position + heading_forward(st.robot.heading) * (v * p.dt);
    st.robot.position.x = std::clamp(st.robot.position.x, -p.robot_clamp, p.robot_clamp);
    st.robot.position.y = std::clamp(st.robot.position.y, -p.robot_clamp, p.robot_clamp);

    st.robot.yaw_angle_deg = std::clamp(st.robot.yaw_angle_deg + yaw_vel * p.dt, p.yaw_min_deg, p.yaw_max_deg);
    st.robot.pitch_angle_deg =
        std::clamp(st.robot.pitch_angle_deg + pitch_vel * p.dt, p.pitch_min_deg, p.pitch_max_deg);
    st.robot.wheel_vel_left = vl;
    st.robot.wheel_vel_right = vr;
    st.robot.yaw_vel_deg = yaw_vel;
    st.robot.pitch_vel_deg = pitch_vel;

    // Quasi-static contact resolution: each robot part translates the object
    // by exactly the penetration it resolves.
    const geom::Capsule boom = boom_capsule();
    const Vec3 hand = hand_center();
    for (int i = 0; i < 2; ++i) {
      auto& obj = st.objects[static_cast<size_t>(i)];
      const auto geo = object_geometry(obj.shape);
      const Vec2 before = obj.position;
      double resolved = 0.0;
      const Vec2 fallback = (obj.position - st.robot.position).normalized();

      const auto body = geom::obb_circle_overlap(st.robot.position, st.robot.heading,
                                                 {p.body_half, p.body_half}, obj.position,
                                                 geo.collision_radius);
      if (body.hit) {
        obj.position = obj.position + body.mtv;
        resolved += body.depth;
        contact[static_cast<size_t>(i)] = true;
        bool both_rows = false;
        const int patch = body_patch_from_contact(body.contact_local, {p.body_half, p.body_half}, &both_rows);
        mark_patch(patch);
        if (both_rows) mark_patch(patch + 2);
      }

      // Boom contact: closest point between the boom segment and the object's
      // vertical axis segment decides where the push acts.
      {
        const Vec3 axis_bottom{obj.position.x, obj.position.y, 0.0};
        const Vec3 axis_top{obj.position.x, obj.position.y, geo.height};
        double s = 0.0, t = 0.0;
        Vec3 on_boom, on_axis;
        geom::closest_segment_segment(boom.a, boom.b, axis_bottom, axis_top, &s, &t, &on_boom, &on_axis);
        const double before_depth = resolved;
        resolved += resolve_point_capsule(on_boom, p.boom_radius + geo.collision_radius, fallback,
                                          geo.height, &obj.position);
        if (resolved > before_depth) {
          contact[static_cast<size_t>(i)] = true;
          mark_patch(8 + std::min(3, static_cast<int>(s * 4.0)));
        }
      }

      {
        const double before_depth = resolved;
        resolved += resolve_point_capsule(hand, p.hand_radius + geo.collision_radius, fallback,
                                          geo.height, &obj.position);
        if (resolved > before_depth) {
          contact[static_cast<size_t>(i)] = true;
          if (hand.z >= p.touch_top_min_height) touch_top_contact[static_cast<size_t>(i)] = true;
          const Vec2 toward = Vec2{obj.position.x - hand.x, obj.position.y - hand.y};
          int bin = 0;
          if (toward.norm() > 1e-9) {
            const Vec2 rel = toward.rotated(-st.robot.heading);
            const double angle = std::atan2(rel.y, rel.x);
            if (std::abs(angle) <= geom::kPi / 4.0) bin = 0;
            else if (angle > geom::kPi / 4.0 && angle <= 3.0 * geom::kPi / 4.0) bin = 1;
            else if (std::abs(angle) > 3.0 * geom::kPi / 4.0) bin = 2;
            else bin = 3;
          }
          mark_patch(12 + bin);
        }
      }

      obj.position.x = std::clamp(obj.position.x, -p.object_clamp, p.object_clamp);
      obj.position.y = std::clamp(obj.position.y, -p.object_clamp, p.object_clamp);
      if (resolved > 0.0)
        substep_pushes[static_cast<size_t>(i)].push_back({(obj.position - before).norm(), resolved});
    }
    for (int i = 0; i < kTouchSensors; ++i)
      if (patch_hit[static_cast<size_t>(i)]) ++touch_substeps[static_cast<size_t>(i)];
  }

  ++st.step_index;

  const Vec2 fwd = heading_forward(st.robot.heading);
  const Vec2 left = heading_left(st.robot.heading);
  for (int i = 0; i < 2; ++i) {
    auto& m = metrics.objects[static_cast<size_t>(i)];
    const Vec2 to_obj = st.objects[static_cast<size_t>(i)].position - st.robot.position;
    m.distance = to_obj.norm();
    const double angle = std::atan2(to_obj.y, to_obj.x);
    m.facing_deviation_deg = std::abs(geom::rad_to_deg(geom::wrap_angle(angle - st.robot.heading)));
    m.contact = contact[static_cast<size_t>(i)];
    m.touch_top_contact = touch_top_contact[static_cast<size_t>(i)];
    const Vec2 disp = st.objects[static_cast<size_t>(i)].position - object_start[static_cast<size_t>(i)];
    m.pushed_forward = disp.dot(fwd);
    m.pushed_left = disp.dot(left);
  }

  const auto candidates = evaluate_success(p, metrics, st.objects, st.streaks, st.step_index);
  const auto event = apply_action_constraints(candidates, metrics, st.command);
  if (event) st.streaks[static_cast<size_t>(static_cast<int>(event->action))][static_cast<size_t>(event->object_index)] = 0;

  StepResult result;
  result.metrics = metrics;
  result.substep_pushes = substep_pushes;
  if (event) result.events.push_back(*event);
  result.reward = (event && event->sentence() == st.command) ? 1.0 : 0.0;
  result.done = result.reward > 0.0 || st.step_index >= p.max_steps;
  st.done = result.done;

  for (int i = 0; i < kTouchSensors; ++i)
    st.last_touch[static_cast<size_t>(i)] =
        static_cast<double>(touch_substeps[static_cast<size_t>(i)]) / p.substeps;

  result.observation = observation();
  if (event) result.observation.feedback_voice = lang::encode_sentence(event->sentence());
  return result;
}

void write_trace(std::ostream& out, const std::vector<TraceRecord>& records) {
  out << "step,x,y,heading,yaw_deg,pitch_deg,reward,done,event\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f,%.9f,%.9f,%.3f,%d,", r.step,
                  r.robot.position.x, r.robot.position.y, r.robot.heading, r.robot.yaw_angle_deg,
                  r.robot.pitch_angle_deg, r.reward, r.done ? 1 : 0);
    out << buf << (r.event ? r.event->sentence().text() : "-") << "\n";
  }
}

}  // namespace curio::env
