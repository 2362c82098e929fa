#include "verco/kitchen/types.hpp"

#include <string>

#include "verco/common/error.hpp"

namespace verco::kitchen {

int item_state_index(const Item& item) {
  if (item.kind == ItemKind::kTomato) return item.chop == ChopState::kWhole ? 0 : 1;
  return item.assembled ? 3 : 2;
}

Pos Pos::step(Direction d) const {
  switch (d) {
    case Direction::kNorth: return {row - 1, col};
    case Direction::kSouth: return {row + 1, col};
    case Direction::kWest: return {row, col - 1};
    case Direction::kEast: return {row, col + 1};
  }
  return *this;
}

bool in_bounds(Pos p) { return p.row >= 0 && p.row < kGridSize && p.col >= 0 && p.col < kGridSize; }

namespace {
constexpr std::array<std::string_view, kNumVerbs> kSurface = {
    "move north", "move south", "move west",    "move east", "pick up",
    "put down",   "chop tomato", "deliver dish", "wait here",
};
}  // namespace

std::string_view AgentAction::surface_text() const { return kSurface[static_cast<std::size_t>(verb)]; }

AgentAction AgentAction::from_surface_text(std::string_view text) {
  for (std::size_t i = 0; i < kSurface.size(); ++i) {
    if (kSurface[i] == text) return AgentAction{static_cast<Verb>(i)};
  }
  throw FormatError("unknown action phrase: '" + std::string(text) + "'");
}

std::array<AgentAction, kNumVerbs> AgentAction::all() {
  std::array<AgentAction, kNumVerbs> out{};
  for (int i = 0; i < kNumVerbs; ++i) out[static_cast<std::size_t>(i)] = AgentAction{static_cast<Verb>(i)};
  return out;
}

std::optional<Direction> move_direction(Verb v) {
  switch (v) {
    case Verb::kMoveUp: return Direction::kNorth;
    case Verb::kMoveDown: return Direction::kSouth;
    case Verb::kMoveLeft: return Direction::kWest;
    case Verb::kMoveRight: return Direction::kEast;
    default: return std::nullopt;
  }
}

std::optional<int> KitchenState::agent_at(Pos p) const {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].pos == p) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string_view to_string(MapId m) { return m == MapId::kSingleRoom ? "single_room" : "separate_rooms"; }
std::string_view to_string(Dish) { return "tomato_salad"; }

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::kNorth: return "north";
    case Direction::kSouth: return "south";
    case Direction::kWest: return "west";
    case Direction::kEast: return "east";
  }
  return "?";
}

std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::kFloor: return "floor";
    case CellKind::kCounter: return "counter";
    case CellKind::kTomatoSource: return "tomato source";
    case CellKind::kCutboard: return "cutboard";
    case CellKind::kPlateSource: return "plate source";
    case CellKind::kDelivery: return "delivery";
    case CellKind::kWall: return "wall";
  }
  return "?";
}

std::string_view to_string(Event e) {
  switch (e) {
    case Event::kChoppedCorrect: return "chopped_correct";
    case Event::kDeliveredCorrect: return "delivered_correct";
    case Event::kDeliveredWrong: return "delivered_wrong";
    case Event::kCollision: return "collision";
  }
  return "?";
}

MapId parse_map_id(std::string_view name) {
  if (name == "single_room" || name == "A") return MapId::kSingleRoom;
  if (name == "separate_rooms" || name == "B") return MapId::kSeparateRooms;
  throw ConfigError("unknown map_id '" + std::string(name) + "' (expected single_room or separate_rooms)");
}

Dish parse_dish(std::string_view name) {
  if (name == "tomato_salad") return Dish::kTomatoSalad;
  throw ConfigError("unsupported task '" + std::string(name) + "' (only tomato_salad is implemented)");
}

}  // namespace verco::kitchen
