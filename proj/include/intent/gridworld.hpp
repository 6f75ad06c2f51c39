#pragma once

#include "intent/core.hpp"

#include <array>
#include <compare>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace intent {

enum class Color : uint8_t { Red = 0, Blue = 1, Green = 2, Yellow = 3 };
enum class Shape : uint8_t { Square = 0, Circle = 1, Star = 2 };
inline constexpr int kNumColors = 4;
inline constexpr int kNumShapes = 3;
inline constexpr int kNumKinds = kNumColors * kNumShapes;

enum class Action : int64_t { Up = 0, Down = 1, Left = 2, Right = 3, Interact = 4 };
inline constexpr int64_t kNumActions = 5;

enum class Quality : uint8_t { Expert = 0, Medium = 1, Novice = 2 };
inline constexpr double kMediumExpertProb = 0.7;

const char* to_string(Color c);
const char* to_string(Shape s);
const char* to_string(Quality q);

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

int manhattan(Cell a, Cell b);

struct GridObject {
  Color color = Color::Red;
  Shape shape = Shape::Square;
  Cell cell;
  int kind() const { return static_cast<int>(color) * kNumShapes + static_cast<int>(shape); }
  bool operator==(const GridObject&) const = default;
};

/// Static layout of one episode. Objects never move.
struct GridSpec {
  int size = 7;
  std::vector<GridObject> objects;
  Cell agent_start;
  int target_index = 0;
  int max_steps = 32;

  const GridObject& target() const { return objects.at(static_cast<size_t>(target_index)); }
  bool in_bounds(Cell c) const { return c.row >= 0 && c.row < size && c.col >= 0 && c.col < size; }
  /// Index of the object occupying `c`, if any.
  std::optional<int> object_at(Cell c) const;
  /// Throws ContractViolation when any layout invariant is broken.
  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

enum class ObservationFormat : uint8_t { Symbolic = 0, Rendered = 1 };

inline constexpr int kRenderCellPixels = 8;

/// Shape of the observation tensor for a format/grid size.
struct ObservationShape {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  bool operator==(const ObservationShape&) const = default;
};
ObservationShape observation_shape(ObservationFormat format, int grid_size);

/// One-hot grid (one channel per colour/shape kind plus an agent channel) or
/// an RGB rendering with `kRenderCellPixels` pixels per cell.
torch::Tensor render_observation(const GridSpec& spec, Cell agent, ObservationFormat format);

/// Cell after applying `action` from `from`; blocked moves stay put.
Cell apply_move(const GridSpec& spec, Cell from, int64_t action);

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

inline constexpr double kStepReward = -0.01;
inline constexpr double kSuccessReward = 1.0;

/// Deterministic single-owner episode state machine.
class GridEnv {
 public:
  explicit GridEnv(GridSpec spec, ObservationFormat format = ObservationFormat::Symbolic);
  /// Starts the episode from an alternative cell; objects are unchanged.
  GridEnv(GridSpec spec, Cell start, ObservationFormat format);

  StepResult step(int64_t action);
  torch::Tensor observe() const { return render_observation(spec_, agent_, format_); }

  const GridSpec& spec() const { return spec_; }
  Cell agent() const { return agent_; }
  bool done() const { return done_; }
  bool success() const { return success_; }
  int steps() const { return steps_; }
  double total_reward() const { return total_reward_; }

 private:
  GridSpec spec_;
  ObservationFormat format_;
  Cell agent_;
  int steps_ = 0;
  bool done_ = false;
  bool success_ = false;
  double total_reward_ = 0.0;
};

/// BFS distance (in moves) from `from` to the target cell; nullopt if unreachable.
std::optional<int> shortest_path_length(const GridSpec& spec, Cell from);

/// First move of a shortest path, ties broken by lowest action id; nullopt if unreachable.
std::optional<int64_t> shortest_path_action(const GridSpec& spec, Cell from);

/// Scripted demonstrator. Unreachable targets fall back to uniform random.
int64_t expert_policy(const GridSpec& spec, Cell agent, Quality quality, std::mt19937_64& rng);

struct LayoutOptions {
  int size = 7;
  int max_steps = 32;
  int min_objects = 2;
  int max_objects = 6;
};

/// Random layout with distinct object kinds whose target is reachable within
/// 2*(size-1) moves of the start.
GridSpec random_solvable_spec(std::mt19937_64& rng, const LayoutOptions& options = {});

/// Fixed instruction vocabulary ("reach the <color> <shape>").
class Vocabulary {
 public:
  Vocabulary();
  int64_t size() const { return static_cast<int64_t>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  std::vector<int64_t> tokenize(std::string_view sentence) const;
  std::string detokenize(const std::vector<int64_t>& tokens) const;

 private:
  std::vector<std::string> words_;
};

const Vocabulary& default_vocabulary();

std::string task_sentence(Color color, Shape shape);
/// Token sequence of "reach the <color> <shape>" for the layout's target.
TextTokens text_for_task(const GridSpec& spec);

struct EpisodeResult {
  Trajectory trajectory;
  bool success = false;
  double raw_return = 0.0;
  int steps = 0;
  Cell start;
};

/// Drives an episode with a callback policy; the callback sees the env before each step.
using EpisodePolicy = std::function<int64_t(const GridEnv&)>;
EpisodeResult run_episode(const GridSpec& spec, Cell start, ObservationFormat format,
                          const EpisodePolicy& policy);

/// Replays `actions` from `start` and reports whether the target was reached.
bool replay_reaches_target(const GridSpec& spec, Cell start, const std::vector<int64_t>& actions);

}  // namespace intent
