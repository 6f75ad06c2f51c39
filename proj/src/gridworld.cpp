#include "intent/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>
#include <sstream>

namespace intent {

namespace {

constexpr std::array<std::array<int, 2>, 4> kMoveDelta{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

constexpr std::array<std::array<float, 3>, kNumColors> kColorRgb{{
    {1.0F, 0.0F, 0.0F},
    {0.0F, 0.0F, 1.0F},
    {0.0F, 1.0F, 0.0F},
    {1.0F, 1.0F, 0.0F},
}};

bool shape_pixel(Shape shape, int y, int x) {
  // (y, x) in [0, kRenderCellPixels); shapes sit inside a 1-pixel margin.
  const double c = (kRenderCellPixels - 1) / 2.0;
  const double dy = y - c;
  const double dx = x - c;
  switch (shape) {
    case Shape::Square: return y >= 1 && y <= 6 && x >= 1 && x <= 6;
    case Shape::Circle: return dy * dy + dx * dx <= 9.0;
    case Shape::Star:
      return (std::abs(dy) < 1.0 && std::abs(dx) <= 3.5) || (std::abs(dx) < 1.0 && std::abs(dy) <= 3.5) ||
             (std::abs(std::abs(dy) - std::abs(dx)) < 0.5 && std::abs(dx) <= 2.5);
  }
  return false;
}

// BFS distances to the target over cells the agent may enter.
std::vector<int> distances_to_target(const GridSpec& spec) {
  const int n = spec.size;
  std::vector<int> dist(static_cast<size_t>(n * n), -1);
  auto idx = [n](Cell c) { return static_cast<size_t>(c.row * n + c.col); };
  const Cell goal = spec.target().cell;
  std::deque<Cell> queue{goal};
  dist[idx(goal)] = 0;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    for (const auto& d : kMoveDelta) {
      const Cell next{cur.row + d[0], cur.col + d[1]};
      if (!spec.in_bounds(next) || dist[idx(next)] >= 0) continue;
      if (spec.object_at(next)) continue;
      dist[idx(next)] = dist[idx(cur)] + 1;
      queue.push_back(next);
    }
  }
  return dist;
}

}  // namespace

const char* to_string(Color c) {
  static constexpr std::array<const char*, kNumColors> names{"red", "blue", "green", "yellow"};
  return names.at(static_cast<size_t>(c));
}

const char* to_string(Shape s) {
  static constexpr std::array<const char*, kNumShapes> names{"square", "circle", "star"};
  return names.at(static_cast<size_t>(s));
}

const char* to_string(Quality q) {
  static constexpr std::array<const char*, 3> names{"expert", "medium", "novice"};
  return names.at(static_cast<size_t>(q));
}

int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

std::optional<int> GridSpec::object_at(Cell c) const {
  for (size_t i = 0; i < objects.size(); ++i)
    if (objects[i].cell == c) return static_cast<int>(i);
  return std::nullopt;
}

void GridSpec::validate() const {
  require(size >= 2 && size <= 64, "grid size out of range");
  require(objects.size() >= 2 && objects.size() <= 6, "layout needs 2..6 objects");
  require(target_index >= 0 && target_index < static_cast<int>(objects.size()), "target index out of range");
  require(max_steps >= 1, "max_steps must be positive");
  std::set<Cell> cells{agent_start};
  require(in_bounds(agent_start), "agent start outside grid");
  for (const auto& o : objects) {
    require(in_bounds(o.cell), "object outside grid");
    require(cells.insert(o.cell).second, "layout cells must be distinct");
  }
}

ObservationShape observation_shape(ObservationFormat format, int grid_size) {
  if (format == ObservationFormat::Symbolic) return {kNumKinds + 1, grid_size, grid_size};
  return {3, int64_t{grid_size} * kRenderCellPixels, int64_t{grid_size} * kRenderCellPixels};
}

torch::Tensor render_observation(const GridSpec& spec, Cell agent, ObservationFormat format) {
  const auto shape = observation_shape(format, spec.size);
  auto obs = torch::zeros({shape.channels, shape.height, shape.width});
  auto a = obs.accessor<float, 3>();
  if (format == ObservationFormat::Symbolic) {
    for (const auto& o : spec.objects) a[o.kind()][o.cell.row][o.cell.col] = 1.0F;
    a[kNumKinds][agent.row][agent.col] = 1.0F;
    return obs;
  }
  for (const auto& o : spec.objects) {
    const auto& rgb = kColorRgb[static_cast<size_t>(o.color)];
    for (int y = 0; y < kRenderCellPixels; ++y)
      for (int x = 0; x < kRenderCellPixels; ++x)
        if (shape_pixel(o.shape, y, x))
          for (int ch = 0; ch < 3; ++ch)
            a[ch][o.cell.row * kRenderCellPixels + y][o.cell.col * kRenderCellPixels + x] = rgb[static_cast<size_t>(ch)];
  }
  // Agent: white 4x4 block centred in its cell.
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x)
      for (int ch = 0; ch < 3; ++ch)
        a[ch][agent.row * kRenderCellPixels + y][agent.col * kRenderCellPixels + x] = 1.0F;
  return obs;
}

Cell apply_move(const GridSpec& spec, Cell from, int64_t action) {
  require(action >= 0 && action < kNumActions, "action id out of range");
  if (action == static_cast<int64_t>(Action::Interact)) return from;
  const auto& d = kMoveDelta[static_cast<size_t>(action)];
  const Cell next{from.row + d[0], from.col + d[1]};
  if (!spec.in_bounds(next)) return from;
  if (auto occupant = spec.object_at(next); occupant && *occupant != spec.target_index) return from;
  return next;
}

GridEnv::GridEnv(GridSpec spec, ObservationFormat format)
    : GridEnv(spec, spec.agent_start, format) {}

GridEnv::GridEnv(GridSpec spec, Cell start, ObservationFormat format)
    : spec_(std::move(spec)), format_(format), agent_(start) {
  spec_.validate();
  require(spec_.in_bounds(start) && !spec_.object_at(start), "start cell must be free");
}

StepResult GridEnv::step(int64_t action) {
  require(!done_, "step called after episode end");
  agent_ = apply_move(spec_, agent_, action);
  ++steps_;
  StepResult result;
  if (agent_ == spec_.target().cell) {
    result = {kSuccessReward, true};
    success_ = true;
  } else {
    result = {kStepReward, steps_ >= spec_.max_steps};
  }
  done_ = result.done;
  total_reward_ += result.reward;
  return result;
}

std::optional<int> shortest_path_length(const GridSpec& spec, Cell from) {
  const auto dist = distances_to_target(spec);
  const int d = dist[static_cast<size_t>(from.row * spec.size + from.col)];
  if (d < 0) return std::nullopt;
  return d;
}

std::optional<int64_t> shortest_path_action(const GridSpec& spec, Cell from) {
  const auto dist = distances_to_target(spec);
  const int here = dist[static_cast<size_t>(from.row * spec.size + from.col)];
  if (here <= 0) return std::nullopt;
  for (int64_t a = 0; a < 4; ++a) {
    const auto& d = kMoveDelta[static_cast<size_t>(a)];
    const Cell next{from.row + d[0], from.col + d[1]};
    if (!spec.in_bounds(next)) continue;
    if (dist[static_cast<size_t>(next.row * spec.size + next.col)] == here - 1) return a;
  }
  return std::nullopt;
}

int64_t expert_policy(const GridSpec& spec, Cell agent, Quality quality, std::mt19937_64& rng) {
  std::uniform_int_distribution<int64_t> uniform(0, kNumActions - 1);
  if (quality == Quality::Novice) return uniform(rng);
  if (quality == Quality::Medium) {
    std::bernoulli_distribution follow(kMediumExpertProb);
    if (!follow(rng)) return uniform(rng);
  }
  if (auto a = shortest_path_action(spec, agent)) return *a;
  return uniform(rng);
}

GridSpec random_solvable_spec(std::mt19937_64& rng, const LayoutOptions& options) {
  require(options.min_objects >= 2 && options.max_objects <= 6 && options.min_objects <= options.max_objects,
          "object count range must lie within [2, 6]");
  require(options.size * options.size > options.max_objects + 1, "grid too small for layout");
  const int diameter = 2 * (options.size - 1);
  std::uniform_int_distribution<int> count_dist(options.min_objects, options.max_objects);
  std::uniform_int_distribution<int> cell_dist(0, options.size * options.size - 1);
  for (;;) {
    GridSpec spec;
    spec.size = options.size;
    spec.max_steps = options.max_steps;
    const int n = count_dist(rng);
    std::vector<int> kinds(kNumKinds);
    std::iota(kinds.begin(), kinds.end(), 0);
    std::shuffle(kinds.begin(), kinds.end(), rng);
    std::set<int> used;
    auto fresh_cell = [&] {
      for (;;) {
        const int c = cell_dist(rng);
        if (used.insert(c).second) return Cell{c / options.size, c % options.size};
      }
    };
    for (int i = 0; i < n; ++i) {
      const int k = kinds[static_cast<size_t>(i)];
      spec.objects.push_back({static_cast<Color>(k / kNumShapes), static_cast<Shape>(k % kNumShapes), fresh_cell()});
    }
    spec.agent_start = fresh_cell();
    spec.target_index = std::uniform_int_distribution<int>(0, n - 1)(rng);
    const auto d = shortest_path_length(spec, spec.agent_start);
    if (d && *d <= diameter && *d <= spec.max_steps) return spec;
  }
}

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "reach", "the"};
  for (int c = 0; c < kNumColors; ++c) words_.emplace_back(to_string(static_cast<Color>(c)));
  for (int s = 0; s < kNumShapes; ++s) words_.emplace_back(to_string(static_cast<Shape>(s)));
}

std::vector<int64_t> Vocabulary::tokenize(std::string_view sentence) const {
  std::vector<int64_t> out;
  std::istringstream in{std::string(sentence)};
  std::string word;
  while (in >> word) {
    auto it = std::find(words_.begin(), words_.end(), word);
    require(it != words_.end(), "word not in vocabulary: " + word);
    out.push_back(it - words_.begin());
  }
  return out;
}

std::string Vocabulary::detokenize(const std::vector<int64_t>& tokens) const {
  std::string out;
  for (int64_t t : tokens) {
    require(t >= 0 && t < size(), "token out of vocabulary");
    if (!out.empty()) out += ' ';
    out += words_[static_cast<size_t>(t)];
  }
  return out;
}

const Vocabulary& default_vocabulary() {
  static const Vocabulary vocab;
  return vocab;
}

std::string task_sentence(Color color, Shape shape) {
  return std::string("reach the ") + to_string(color) + " " + to_string(shape);
}

TextTokens text_for_task(const GridSpec& spec) {
  const auto& t = spec.target();
  return {default_vocabulary().tokenize(task_sentence(t.color, t.shape))};
}

EpisodeResult run_episode(const GridSpec& spec, Cell start, ObservationFormat format,
                          const EpisodePolicy& policy) {
  GridEnv env(spec, start, format);
  std::vector<torch::Tensor> frames;
  EpisodeResult result;
  result.start = start;
  while (!env.done()) {
    frames.push_back(env.observe());
    const int64_t action = policy(env);
    result.trajectory.actions.push_back(action);
    env.step(action);
  }
  result.trajectory.observations = torch::stack(frames);
  result.success = env.success();
  result.raw_return = env.total_reward();
  result.steps = env.steps();
  return result;
}

bool replay_reaches_target(const GridSpec& spec, Cell start, const std::vector<int64_t>& actions) {
  GridEnv env(spec, start, ObservationFormat::Symbolic);
  for (int64_t a : actions) {
    if (env.done()) break;
    env.step(a);
  }
  return env.success();
}

}  // namespace intent
