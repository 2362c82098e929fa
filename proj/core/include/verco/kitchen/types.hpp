#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace verco::kitchen {

inline constexpr int kGridSize = 7;
inline constexpr int kWindowSize = 5;
inline constexpr int kWindowRadius = kWindowSize / 2;
inline constexpr int kNumAgents = 2;
inline constexpr int kDefaultHorizon = 100;

// Reward constants of the tomato-salad kitchen.
inline constexpr double kRewardChopCorrect = 0.2;
inline constexpr double kRewardDeliverCorrect = 1.0;
inline constexpr double kRewardDeliverWrong = -0.1;
inline constexpr double kRewardCollision = -0.01;
inline constexpr double kRewardStep = -0.001;

enum class MapId : std::uint8_t { kSingleRoom, kSeparateRooms };
enum class Dish : std::uint8_t { kTomatoSalad };

enum class CellKind : std::uint8_t {
  kFloor,
  kCounter,
  kTomatoSource,
  kCutboard,
  kPlateSource,
  kDelivery,
  kWall,
};
inline constexpr int kNumCellKinds = 7;

enum class ItemKind : std::uint8_t { kTomato, kPlate };
enum class ChopState : std::uint8_t { kWhole, kChopped, kNotApplicable };

struct Item {
  ItemKind kind = ItemKind::kTomato;
  ChopState chop = ChopState::kWhole;
  // Set on a plate once a chopped tomato has been put on it.
  std::optional<Dish> assembled;

  static Item whole_tomato() { return {ItemKind::kTomato, ChopState::kWhole, std::nullopt}; }
  static Item chopped_tomato() { return {ItemKind::kTomato, ChopState::kChopped, std::nullopt}; }
  static Item empty_plate() { return {ItemKind::kPlate, ChopState::kNotApplicable, std::nullopt}; }
  static Item salad() { return {ItemKind::kPlate, ChopState::kNotApplicable, Dish::kTomatoSalad}; }

  bool is_whole_tomato() const { return kind == ItemKind::kTomato && chop == ChopState::kWhole; }
  bool is_chopped_tomato() const { return kind == ItemKind::kTomato && chop == ChopState::kChopped; }
  bool is_empty_plate() const { return kind == ItemKind::kPlate && !assembled; }
  bool is_dish() const { return kind == ItemKind::kPlate && assembled.has_value(); }

  friend bool operator==(const Item&, const Item&) = default;
};

// Distinct item states used by encoders: whole tomato, chopped tomato,
// empty plate, tomato salad.
inline constexpr int kNumItemStates = 4;
int item_state_index(const Item& item);

struct Cell {
  CellKind kind = CellKind::kFloor;
  std::optional<Item> item;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class Direction : std::uint8_t { kNorth, kSouth, kWest, kEast };

struct Pos {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
  Pos step(Direction d) const;
};

bool in_bounds(Pos p);

struct AgentPose {
  Pos pos;
  Direction facing = Direction::kNorth;
  std::optional<Item> held;
  Pos faced_cell() const { return pos.step(facing); }
  friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

enum class Verb : std::uint8_t {
  kMoveUp,
  kMoveDown,
  kMoveLeft,
  kMoveRight,
  kPickUp,
  kPutDown,
  kChop,
  kDeliver,
  kNoop,
};
inline constexpr int kNumVerbs = 9;

struct AgentAction {
  Verb verb = Verb::kNoop;

  // Canonical phrase for the verb; one phrase per verb.
  std::string_view surface_text() const;
  static AgentAction from_surface_text(std::string_view text);
  static std::array<AgentAction, kNumVerbs> all();

  friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

std::optional<Direction> move_direction(Verb v);

struct KitchenState {
  MapId map = MapId::kSingleRoom;
  Dish task = Dish::kTomatoSalad;
  std::array<Cell, kGridSize * kGridSize> grid{};
  std::vector<AgentPose> agents;
  int timestep = 0;
  int horizon = kDefaultHorizon;
  std::uint64_t rng_seed = 0;
  bool done = false;

  Cell& at(Pos p) { return grid[static_cast<std::size_t>(p.row * kGridSize + p.col)]; }
  const Cell& at(Pos p) const { return grid[static_cast<std::size_t>(p.row * kGridSize + p.col)]; }
  // Index of the agent standing on p, if any.
  std::optional<int> agent_at(Pos p) const;

  friend bool operator==(const KitchenState&, const KitchenState&) = default;
};

// One visible cell of an observation window.
struct CellSnapshot {
  CellKind kind = CellKind::kFloor;
  std::optional<Item> item;
  std::optional<int> agent;  // index of the agent standing here
  friend bool operator==(const CellSnapshot&, const CellSnapshot&) = default;
};

struct ObservationWindow {
  int agent = 0;
  Pos center;
  // Row-major 5x5; nullopt marks an occluded (out-of-map) cell.
  std::array<std::optional<CellSnapshot>, kWindowSize * kWindowSize> cells{};
  std::optional<Item> own_held;
  Direction own_facing = Direction::kNorth;

  const std::optional<CellSnapshot>& at(int dr, int dc) const {
    return cells[static_cast<std::size_t>((dr + kWindowRadius) * kWindowSize + dc + kWindowRadius)];
  }
  friend bool operator==(const ObservationWindow&, const ObservationWindow&) = default;
};

enum class Event : std::uint8_t {
  kChoppedCorrect,
  kDeliveredCorrect,
  kDeliveredWrong,
  kCollision,
};

struct StepOutcome {
  std::vector<ObservationWindow> observations;
  double reward = 0.0;
  bool done = false;
  std::vector<Event> events;
  friend bool operator==(const StepOutcome&, const StepOutcome&) = default;
};

std::string_view to_string(MapId m);
std::string_view to_string(Dish d);
std::string_view to_string(Direction d);
std::string_view to_string(CellKind k);
std::string_view to_string(Event e);
MapId parse_map_id(std::string_view name);
Dish parse_dish(std::string_view name);

}  // namespace verco::kitchen
