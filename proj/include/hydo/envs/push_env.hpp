#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydo/numerics/dense_array.hpp"
#include "hydo/numerics/rng.hpp"

namespace hydo {

enum class TaskKind { align_se2, push_line_24, push_align_2, bimodal_sanity, cluttered };

std::string to_string(TaskKind task);
TaskKind task_kind_from_string(const std::string& name);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

// Planar pose; theta kept in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  bool operator==(const Pose&) const = default;
};

double wrap_angle(double theta);
Vec2 transform_point(const Pose& pose, Vec2 local);

/// Boundary points in the object frame, counter-clockwise.
struct ObjectShape {
  std::vector<Vec2> points;
  double circumradius() const;  // max distance of a boundary point from the origin
};

// Axis-aligned square with `count` evenly spaced boundary points (count % 4 == 0),
// starting at the lower-left corner.
ObjectShape make_square(double half_side = 0.05, std::size_t count = 16);

struct Obstacle {
  Vec2 center;
  double radius = 0.06;
  bool operator==(const Obstacle&) const = default;
};

struct EnvConfig {
  TaskKind task = TaskKind::align_se2;
  double x_min = -0.5, x_max = 0.5;
  double y_min = -0.5, y_max = 0.5;
  double success_threshold = 0.03;
  int max_steps = 30;
  int obstacle_count = 0;  // cluttered only; push_align_2 always has its one disc
  double noise_scale = 0.0;
  double push_max = 0.1;
  double rotational_compliance = 0.5;
  double obstacle_radius = 0.06;
  std::size_t obstacle_points = 8;  // background points per disc
  std::size_t object_points = 16;
  double object_half_side = 0.05;

  void validate() const;  // ConfigError
  bool operator==(const EnvConfig&) const = default;
};

/// N x 2 positions and flows, N x 1 mask (1 object, 0 background).
struct PointObservation {
  DenseArray positions;
  DenseArray flows;
  DenseArray mask;

  std::size_t size() const { return positions.rows(); }
  std::size_t object_count() const;
  // N x 5 rows [x, y, flow_x, flow_y, mask], the encoder input.
  DenseArray inputs() const;
  void validate() const;  // UsageError
};

struct Push {
  double angle = 0.0;
  double magnitude = 0.0;
  Vec2 vector;
};

// angle = pi * m1, magnitude = push_max * (m2 + 1) / 2, motion clamped to [-1, 1] first.
Push decode_motion(std::span<const double> motion, double push_max);

// Quasi-static push of point `contact` (world frame) on an object at `pose`,
// before clipping and collision handling.
Pose apply_push(const Pose& pose, Vec2 contact, const Push& push, double circumradius,
                double rotational_compliance);

// goal_transform(p_i) - current_transform(p_i) per boundary point.
std::vector<Vec2> goal_flow(const Pose& pose, const Pose& goal, const ObjectShape& shape);
double mean_point_distance(const Pose& pose, const Pose& goal, const ObjectShape& shape);

enum class ResetMode { train, eval };

struct EpisodeTrace {
  std::vector<Pose> poses;  // initial pose, then one per step
  std::vector<std::size_t> contacts;
  std::vector<std::array<double, 2>> motions;
  std::vector<double> rewards;
  std::vector<double> distances;  // after each step
  Pose goal;
  std::vector<Obstacle> obstacles;
  bool success = false;
  std::optional<int> crossing_cell;  // push_line_24, emitted once
  std::optional<int> route_side;     // push_align_2, set when the episode ends

  std::size_t steps() const { return rewards.size(); }
  void validate() const;  // UsageError on inconsistent lengths
};

struct StepResult {
  PointObservation observation;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  double distance = 0.0;
};

/// Planar pushing environment. One instance per rollout worker.
class PushEnv {
 public:
  explicit PushEnv(EnvConfig config);

  PointObservation reset(RngStream& rng, ResetMode mode = ResetMode::train);
  StepResult step(std::size_t contact, std::span<const double> motion);

  // Observation for the current state without stepping.
  PointObservation observe() const;
  double distance() const;  // task distance used by the reward

  const EnvConfig& config() const { return config_; }
  const ObjectShape& shape() const { return shape_; }
  const Pose& pose() const { return pose_; }
  const Pose& goal() const { return goal_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const EpisodeTrace& trace() const { return trace_; }
  bool done() const { return done_; }

  // Two symmetric targets for bimodal_sanity.
  static constexpr double kBimodalOffset = 0.1;
  // push_line_24 geometry: horizontal line crossed in 24 equal cells spanning
  // the workspace width. The goal band sits two thresholds past it, so a
  // solved episode has always crossed.
  static constexpr double kLineY = 0.2;
  static constexpr int kLineCells = 24;

 private:
  Pose sample_free_pose(RngStream& rng, double margin) const;
  bool collides(const Pose& pose) const;
  Pose resolve(const Pose& from, Pose to) const;
  Pose nearest_goal(const Pose& pose) const;

  EnvConfig config_;
  ObjectShape shape_;
  Pose pose_;
  Pose goal_;
  std::vector<Obstacle> obstacles_;
  EpisodeTrace trace_;
  RngStream noise_;
  int steps_ = 0;
  bool done_ = true;
};

// Mode id per task; none when unsolved or the task has no descriptor.
// bimodal_sanity: 0 upper target, 1 lower.
std::optional<int> behavior_descriptor(const EpisodeTrace& trace, const EnvConfig& config);
// Size of the descriptor's mode space; 0 when the task has none.
std::size_t behavior_mode_count(const EnvConfig& config);

// Cell of the first centroid crossing of the target line, if any.
std::optional<int> line_crossing_cell(std::span<const Pose> poses, const EnvConfig& config);

// 0 when the mean signed lateral deviation of the centroid from the line
// start -> goal is positive (left of travel), 1 otherwise.
int route_side(std::span<const Pose> poses, const Pose& goal);

// Upper mode for a motion parameter: positive vertical push component.
int push_mode(std::span<const double> motion);

// Every field as JSON; parsing rejects unknown keys, missing keys keep defaults.
nlohmann::json env_config_to_json(const EnvConfig& config);
EnvConfig env_config_from_json(const nlohmann::json& value);  // ConfigError

// One JSON object per trace, for the analysis tools and plotting scripts.
std::string trace_to_json(const EpisodeTrace& trace, const EnvConfig& config);
EpisodeTrace trace_from_json(const std::string& text);  // ParseError

}  // namespace hydo
