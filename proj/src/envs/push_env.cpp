#include "hydo/envs/push_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "hydo/numerics/errors.hpp"

namespace hydo {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kPlacementRetries = 1000;

// push_align_2 layout: start left of a disc, goal right of it, rotated a quarter turn.
constexpr Pose kAlignStart{-0.3, 0.0, 0.0};
constexpr Pose kAlignGoal{0.3, 0.0, kPi / 2};
constexpr double kAlignDiscRadius = 0.1;
constexpr Pose kLineStart{0.0, -0.3, 0.0};

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

}  // namespace

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::align_se2: return "align_se2";
    case TaskKind::push_line_24: return "push_line_24";
    case TaskKind::push_align_2: return "push_align_2";
    case TaskKind::bimodal_sanity: return "bimodal_sanity";
    case TaskKind::cluttered: return "cluttered";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
  for (TaskKind t : {TaskKind::align_se2, TaskKind::push_line_24, TaskKind::push_align_2,
                     TaskKind::bimodal_sanity, TaskKind::cluttered}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown task '" + name + "'");
}

double wrap_angle(double theta) {
  double w = std::remainder(theta, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

Vec2 transform_point(const Pose& pose, Vec2 p) {
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  return {pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y};
}

double ObjectShape::circumradius() const {
  double r = 0.0;
  for (const Vec2& p : points) r = std::max(r, norm(p));
  return r;
}

ObjectShape make_square(double half_side, std::size_t count) {
  if (!(half_side > 0.0) || count == 0 || count % 4 != 0) {
    throw ConfigError("square needs a positive half side and a point count divisible by 4");
  }
  const std::size_t per_side = count / 4;
  const double h = half_side, step = 2.0 * h / static_cast<double>(per_side);
  const Vec2 corners[4] = {{-h, -h}, {h, -h}, {h, h}, {-h, h}};
  const Vec2 dirs[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  ObjectShape shape;
  for (int side = 0; side < 4; ++side) {
    for (std::size_t j = 0; j < per_side; ++j) {
      const double t = step * static_cast<double>(j);
      shape.points.push_back({corners[side].x + t * dirs[side].x, corners[side].y + t * dirs[side].y});
    }
  }
  return shape;
}

void EnvConfig::validate() const {
  if (!(x_min < x_max && y_min < y_max)) throw ConfigError("workspace bounds are not well ordered");
  if (!(success_threshold > 0.0)) throw ConfigError("success threshold must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
  if (obstacle_count < 0) throw ConfigError("obstacle_count must be non-negative");
  if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be non-negative");
  if (!(push_max > 0.0)) throw ConfigError("push_max must be positive");
  if (!(rotational_compliance >= 0.0)) throw ConfigError("rotational_compliance must be non-negative");
  if (!(obstacle_radius > 0.0)) throw ConfigError("obstacle_radius must be positive");
  if (obstacle_points == 0) throw ConfigError("obstacle_points must be positive");
  const double room = std::min(x_max - x_min, y_max - y_min);
  if (!(object_half_side > 0.0) || 4.0 * object_half_side >= room) {
    throw ConfigError("object does not fit the workspace");
  }
  make_square(object_half_side, object_points);
}

std::size_t PointObservation::object_count() const {
  std::size_t n = 0;
  for (double m : mask.values()) n += m > 0.5;
  return n;
}

DenseArray PointObservation::inputs() const {
  DenseArray x(size(), 5);
  for (std::size_t i = 0; i < size(); ++i) {
    x(i, 0) = positions(i, 0);
    x(i, 1) = positions(i, 1);
    x(i, 2) = flows(i, 0);
    x(i, 3) = flows(i, 1);
    x(i, 4) = mask[i];
  }
  return x;
}

void PointObservation::validate() const {
  const std::size_t n = positions.rows();
  if (positions.cols() != 2 || flows.rows() != n || flows.cols() != 2 || mask.rows() != n || mask.cols() != 1) {
    throw UsageError("observation has inconsistent shapes");
  }
  if (!flows.all_finite() || !positions.all_finite()) throw UsageError("observation is not finite");
  for (double m : mask.values()) {
    if (m != 0.0 && m != 1.0) throw UsageError("observation mask is not binary");
  }
  if (object_count() == 0) throw UsageError("observation has no object points");
}

Push decode_motion(std::span<const double> motion, double push_max) {
  if (motion.size() != 2) throw UsageError("motion parameter must have 2 entries");
  const double m1 = std::clamp(motion[0], -1.0, 1.0), m2 = std::clamp(motion[1], -1.0, 1.0);
  Push p;
  p.angle = kPi * m1;
  p.magnitude = push_max * (m2 + 1.0) / 2.0;
  p.vector = {p.magnitude * std::cos(p.angle), p.magnitude * std::sin(p.angle)};
  return p;
}

Pose apply_push(const Pose& pose, Vec2 contact, const Push& push, double circumradius,
                double rotational_compliance) {
  // Lever arm and push measured in object radii.
  const Vec2 r{contact.x - pose.x, contact.y - pose.y};
  const double turn = rotational_compliance * cross(r, push.vector) / (circumradius * circumradius);
  return {pose.x + push.vector.x, pose.y + push.vector.y, wrap_angle(pose.theta + turn)};
}

std::vector<Vec2> goal_flow(const Pose& pose, const Pose& goal, const ObjectShape& shape) {
  std::vector<Vec2> flows;
  flows.reserve(shape.points.size());
  for (const Vec2& p : shape.points) {
    const Vec2 g = transform_point(goal, p), c = transform_point(pose, p);
    flows.push_back({g.x - c.x, g.y - c.y});
  }
  return flows;
}

double mean_point_distance(const Pose& pose, const Pose& goal, const ObjectShape& shape) {
  double total = 0.0;
  for (const Vec2& f : goal_flow(pose, goal, shape)) total += norm(f);
  return total / static_cast<double>(shape.points.size());
}

void EpisodeTrace::validate() const {
  const std::size_t n = rewards.size();
  if (poses.size() != n + 1 || contacts.size() != n || motions.size() != n || distances.size() != n) {
    throw UsageError("episode trace has inconsistent lengths");
  }
}

PushEnv::PushEnv(EnvConfig config) : config_(config) {
  config_.validate();
  shape_ = make_square(config_.object_half_side, config_.object_points);
}

Pose PushEnv::sample_free_pose(RngStream& rng, double margin) const {
  const double rho = shape_.circumradius() + margin;
  for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
    Pose p{rng.uniform(config_.x_min + rho, config_.x_max - rho), rng.uniform(config_.y_min + rho, config_.y_max - rho),
           wrap_angle(rng.uniform(-kPi, kPi))};
    if (!collides(p)) return p;
  }
  throw EnvironmentError("no collision-free placement after " + std::to_string(kPlacementRetries) + " tries");
}

bool PushEnv::collides(const Pose& pose) const {
  const double rho = shape_.circumradius();
  for (const Obstacle& o : obstacles_) {
    if (norm({pose.x - o.center.x, pose.y - o.center.y}) < o.radius + rho) return true;
  }
  return false;
}

PointObservation PushEnv::reset(RngStream& rng, ResetMode mode) {
  obstacles_.clear();
  const double rho = shape_.circumradius();
  switch (config_.task) {
    case TaskKind::bimodal_sanity:
      pose_ = {};
      goal_ = {};
      break;
    case TaskKind::align_se2:
    case TaskKind::cluttered: {
      if (config_.task == TaskKind::cluttered) {
        for (int k = 0; k < config_.obstacle_count; ++k) {
          const double r = config_.obstacle_radius;
          int attempt = 0;
          for (; attempt < kPlacementRetries; ++attempt) {
            const Vec2 c{rng.uniform(config_.x_min + r, config_.x_max - r), rng.uniform(config_.y_min + r, config_.y_max - r)};
            const bool overlaps = std::any_of(obstacles_.begin(), obstacles_.end(), [&](const Obstacle& o) {
              return norm({c.x - o.center.x, c.y - o.center.y}) < o.radius + r;
            });
            if (!overlaps) {
              obstacles_.push_back({c, r});
              break;
            }
          }
          if (attempt == kPlacementRetries) throw EnvironmentError("could not place obstacle " + std::to_string(k));
        }
      }
      pose_ = sample_free_pose(rng, 0.0);
      // Goal is redrawn until the task is not already solved.
      for (int attempt = 0;; ++attempt) {
        goal_ = sample_free_pose(rng, 0.0);
        if (mean_point_distance(pose_, goal_, shape_) > 2.0 * config_.success_threshold) break;
        if (attempt == kPlacementRetries) throw EnvironmentError("could not place an unsolved goal");
      }
      break;
    }
    case TaskKind::push_line_24:
      if (mode == ResetMode::eval) {
        pose_ = kLineStart;
      } else {
        // Anywhere in the lower half, so the line is always ahead.
        pose_ = {rng.uniform(config_.x_min + rho, config_.x_max - rho), rng.uniform(config_.y_min + rho, 0.0),
                 wrap_angle(rng.uniform(-kPi, kPi))};
      }
      goal_ = nearest_goal(pose_);
      break;
    case TaskKind::push_align_2:
      obstacles_.push_back({{0.0, 0.0}, kAlignDiscRadius});
      goal_ = kAlignGoal;
      if (mode == ResetMode::eval) {
        pose_ = kAlignStart;
      } else {
        for (int attempt = 0;; ++attempt) {
          pose_ = {rng.uniform(config_.x_min + rho, -kAlignDiscRadius - rho), rng.uniform(config_.y_min + rho, config_.y_max - rho),
                   wrap_angle(rng.uniform(-kPi, kPi))};
          if (!collides(pose_)) break;
          if (attempt == kPlacementRetries) throw EnvironmentError("could not place the object");
        }
      }
      break;
  }
  noise_ = rng.split("dynamics");
  steps_ = 0;
  done_ = false;
  trace_ = EpisodeTrace{};
  trace_.poses.push_back(pose_);
  trace_.goal = goal_;
  trace_.obstacles = obstacles_;
  return observe();
}

Pose PushEnv::nearest_goal(const Pose& pose) const {
  switch (config_.task) {
    case TaskKind::bimodal_sanity: {
      const Pose up{0.0, kBimodalOffset, 0.0}, down{0.0, -kBimodalOffset, 0.0};
      return mean_point_distance(pose, up, shape_) <= mean_point_distance(pose, down, shape_) ? up : down;
    }
    case TaskKind::push_line_24:
      return {pose.x, kLineY + 2.0 * config_.success_threshold, pose.theta};
    default:
      return goal_;
  }
}

double PushEnv::distance() const { return mean_point_distance(pose_, nearest_goal(pose_), shape_); }

PointObservation PushEnv::observe() const {
  const std::size_t n_obj = shape_.points.size();
  const std::size_t n = n_obj + obstacles_.size() * config_.obstacle_points;
  PointObservation obs{DenseArray(n, 2), DenseArray(n, 2), DenseArray(n, 1)};
  // bimodal_sanity shows its nominal goal (the origin); other tasks show the goal being scored.
  const Pose shown = config_.task == TaskKind::bimodal_sanity ? goal_ : nearest_goal(pose_);
  const std::vector<Vec2> flows = goal_flow(pose_, shown, shape_);
  for (std::size_t i = 0; i < n_obj; ++i) {
    const Vec2 p = transform_point(pose_, shape_.points[i]);
    obs.positions(i, 0) = p.x;
    obs.positions(i, 1) = p.y;
    obs.flows(i, 0) = flows[i].x;
    obs.flows(i, 1) = flows[i].y;
    obs.mask[i] = 1.0;
  }
  std::size_t row = n_obj;
  for (const Obstacle& o : obstacles_) {
    for (std::size_t j = 0; j < config_.obstacle_points; ++j, ++row) {
      const double a = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(config_.obstacle_points);
      obs.positions(row, 0) = o.center.x + o.radius * std::cos(a);
      obs.positions(row, 1) = o.center.y + o.radius * std::sin(a);
    }
  }
  return obs;
}

Pose PushEnv::resolve(const Pose& from, Pose to) const {
  const double rho = shape_.circumradius();
  auto clip = [&](Pose& p) {
    p.x = std::clamp(p.x, config_.x_min + rho, config_.x_max - rho);
    p.y = std::clamp(p.y, config_.y_min + rho, config_.y_max - rho);
  };
  clip(to);
  // Project out of each penetrated disc along its normal. A few sweeps settle
  // the rare case of two touching discs.
  for (int sweep = 0; sweep < 4 && collides(to); ++sweep) {
    for (const Obstacle& o : obstacles_) {
      Vec2 d{to.x - o.center.x, to.y - o.center.y};
      const double reach = o.radius + rho;
      double len = norm(d);
      if (len >= reach) continue;
      if (len < 1e-12) {
        d = {from.x - o.center.x, from.y - o.center.y};
        len = norm(d);
        if (len < 1e-12) d = {1.0, 0.0}, len = 1.0;
      }
      to.x = o.center.x + reach * d.x / len;
      to.y = o.center.y + reach * d.y / len;
    }
    clip(to);
  }
  if (collides(to)) {
    // Wedged between a disc and a wall: translation is blocked, rotation kept.
    to.x = from.x;
    to.y = from.y;
  }
  return to;
}

StepResult PushEnv::step(std::size_t contact, std::span<const double> motion) {
  if (done_) throw UsageError("step called on a finished episode; call reset");
  if (contact >= shape_.points.size()) {
    throw UsageError("contact index " + std::to_string(contact) + " is not an object point");
  }
  const Push push = decode_motion(motion, config_.push_max);
  const Vec2 at = transform_point(pose_, shape_.points[contact]);
  Pose next = apply_push(pose_, at, push, shape_.circumradius(), config_.rotational_compliance);
  if (config_.noise_scale > 0.0) {
    next.x += config_.noise_scale * config_.push_max * noise_.normal();
    next.y += config_.noise_scale * config_.push_max * noise_.normal();
    next.theta = wrap_angle(next.theta + config_.noise_scale * 0.1 * noise_.normal());
  }
  const Pose before = pose_;
  pose_ = resolve(before, next);
  ++steps_;

  StepResult out;
  out.distance = distance();
  out.success = out.distance < config_.success_threshold;
  out.reward = -out.distance + (out.success ? 1.0 : 0.0);
  out.done = out.success || steps_ >= config_.max_steps;
  done_ = out.done;

  trace_.poses.push_back(pose_);
  trace_.contacts.push_back(contact);
  trace_.motions.push_back({motion[0], motion[1]});
  trace_.rewards.push_back(out.reward);
  trace_.distances.push_back(out.distance);
  trace_.success = out.success;
  if (config_.task == TaskKind::push_line_24 && !trace_.crossing_cell) {
    const Pose seg[2] = {before, pose_};
    trace_.crossing_cell = line_crossing_cell(seg, config_);
  }
  if (config_.task == TaskKind::push_align_2 && done_) trace_.route_side = route_side(trace_.poses, goal_);
  out.observation = observe();
  return out;
}

std::optional<int> line_crossing_cell(std::span<const Pose> poses, const EnvConfig& config) {
  const double y = PushEnv::kLineY;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const Pose& a = poses[i - 1];
    const Pose& b = poses[i];
    if ((a.y < y) == (b.y < y)) continue;  // either direction
    const double t = (y - a.y) / (b.y - a.y);
    const double x = a.x + t * (b.x - a.x);
    const double width = (config.x_max - config.x_min) / PushEnv::kLineCells;
    const int cell = static_cast<int>(std::floor((x - config.x_min) / width));
    return std::clamp(cell, 0, PushEnv::kLineCells - 1);
  }
  return std::nullopt;
}

int route_side(std::span<const Pose> poses, const Pose& goal) {
  if (poses.empty()) throw UsageError("route_side needs at least one pose");
  const Vec2 start{poses.front().x, poses.front().y};
  Vec2 dir{goal.x - start.x, goal.y - start.y};
  const double len = norm(dir);
  if (len > 0.0) dir = {dir.x / len, dir.y / len};
  double total = 0.0;
  for (const Pose& p : poses) total += cross(dir, {p.x - start.x, p.y - start.y});
  return total / static_cast<double>(poses.size()) > 0.0 ? 0 : 1;
}

int push_mode(std::span<const double> motion) {
  if (motion.size() != 2) throw UsageError("motion parameter must have 2 entries");
  return std::sin(kPi * std::clamp(motion[0], -1.0, 1.0)) > 0.0 ? 0 : 1;
}

std::optional<int> behavior_descriptor(const EpisodeTrace& trace, const EnvConfig& config) {
  if (!trace.success || trace.poses.empty()) return std::nullopt;
  switch (config.task) {
    case TaskKind::push_line_24: return line_crossing_cell(trace.poses, config);
    case TaskKind::push_align_2: return route_side(trace.poses, trace.goal);
    case TaskKind::bimodal_sanity: return trace.poses.back().y > 0.0 ? 0 : 1;
    default: return std::nullopt;
  }
}

std::size_t behavior_mode_count(const EnvConfig& config) {
  switch (config.task) {
    case TaskKind::push_line_24: return PushEnv::kLineCells;
    case TaskKind::push_align_2:
    case TaskKind::bimodal_sanity: return 2;
    default: return 0;
  }
}

nlohmann::json env_config_to_json(const EnvConfig& c) {
  return nlohmann::json{
      {"task", to_string(c.task)},
      {"x_min", c.x_min},
      {"x_max", c.x_max},
      {"y_min", c.y_min},
      {"y_max", c.y_max},
      {"success_threshold", c.success_threshold},
      {"max_steps", c.max_steps},
      {"obstacle_count", c.obstacle_count},
      {"noise_scale", c.noise_scale},
      {"push_max", c.push_max},
      {"rotational_compliance", c.rotational_compliance},
      {"obstacle_radius", c.obstacle_radius},
      {"obstacle_points", c.obstacle_points},
      {"object_points", c.object_points},
      {"object_half_side", c.object_half_side},
  };
}

EnvConfig env_config_from_json(const nlohmann::json& value) {
  if (!value.is_object()) throw ConfigError("env config must be an object");
  EnvConfig c;
  const nlohmann::json known = env_config_to_json(c);
  for (const auto& [key, v] : value.items()) {
    if (!known.contains(key)) throw ConfigError("unknown env key '" + key + "'");
  }
  auto read = [&](const char* key, auto& field) {
    if (!value.contains(key)) return;
    try {
      value.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("env key '") + key + "' has the wrong type");
    }
  };
  std::string task = to_string(c.task);
  read("task", task);
  c.task = task_kind_from_string(task);
  read("x_min", c.x_min);
  read("x_max", c.x_max);
  read("y_min", c.y_min);
  read("y_max", c.y_max);
  read("success_threshold", c.success_threshold);
  read("max_steps", c.max_steps);
  read("obstacle_count", c.obstacle_count);
  read("noise_scale", c.noise_scale);
  read("push_max", c.push_max);
  read("rotational_compliance", c.rotational_compliance);
  read("obstacle_radius", c.obstacle_radius);
  read("obstacle_points", c.obstacle_points);
  read("object_points", c.object_points);
  read("object_half_side", c.object_half_side);
  c.validate();
  return c;
}

std::string trace_to_json(const EpisodeTrace& trace, const EnvConfig& config) {
  using nlohmann::json;
  auto pose_json = [](const Pose& p) { return json::array({p.x, p.y, p.theta}); };
  json j;
  j["task"] = to_string(config.task);
  j["goal"] = pose_json(trace.goal);
  j["obstacles"] = json::array();
  for (const Obstacle& o : trace.obstacles) j["obstacles"].push_back({o.center.x, o.center.y, o.radius});
  j["poses"] = json::array();
  for (const Pose& p : trace.poses) j["poses"].push_back(pose_json(p));
  j["contacts"] = trace.contacts;
  j["motions"] = json::array();
  for (const auto& m : trace.motions) j["motions"].push_back({m[0], m[1]});
  j["rewards"] = trace.rewards;
  j["distances"] = trace.distances;
  j["success"] = trace.success;
  j["crossing_cell"] = trace.crossing_cell ? json(*trace.crossing_cell) : json(nullptr);
  j["route_side"] = trace.route_side ? json(*trace.route_side) : json(nullptr);
  const auto mode = behavior_descriptor(trace, config);
  j["mode"] = mode ? json(*mode) : json(nullptr);
  return j.dump();
}

EpisodeTrace trace_from_json(const std::string& text) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    auto pose_of = [](const json& a) { return Pose{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; };
    EpisodeTrace t;
    t.goal = pose_of(j.at("goal"));
    for (const json& o : j.at("obstacles")) t.obstacles.push_back({{o.at(0).get<double>(), o.at(1).get<double>()}, o.at(2).get<double>()});
    for (const json& p : j.at("poses")) t.poses.push_back(pose_of(p));
    t.contacts = j.at("contacts").get<std::vector<std::size_t>>();
    for (const json& m : j.at("motions")) t.motions.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
    t.rewards = j.at("rewards").get<std::vector<double>>();
    t.distances = j.at("distances").get<std::vector<double>>();
    t.success = j.at("success").get<bool>();
    if (!j.at("crossing_cell").is_null()) t.crossing_cell = j.at("crossing_cell").get<int>();
    if (!j.at("route_side").is_null()) t.route_side = j.at("route_side").get<int>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("trace: ") + e.what());
  } catch (const UsageError& e) {
    throw ParseError(std::string("trace: ") + e.what());
  }
}

}  // namespace hydo
