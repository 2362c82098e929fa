#include "verco/kitchen/kitchen_env.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "verco/common/embedded_data.hpp"
#include "verco/common/error.hpp"

namespace verco::kitchen {

namespace {

bool can_hold_item(CellKind k) { return k == CellKind::kCounter || k == CellKind::kCutboard; }

// Whether the recipe still needs a chopped tomato, i.e. none exists yet
// loose, plated or in hand.
bool chop_is_needed(const KitchenState& s) {
  auto satisfies = [](const std::optional<Item>& it) {
    return it && (it->is_chopped_tomato() || it->is_dish());
  };
  for (const auto& c : s.grid) {
    if (satisfies(c.item)) return false;
  }
  for (const auto& a : s.agents) {
    if (satisfies(a.held)) return false;
  }
  return true;
}

std::optional<Item> combine(const Item& held, const Item& resting) {
  if ((held.is_chopped_tomato() && resting.is_empty_plate()) ||
      (held.is_empty_plate() && resting.is_chopped_tomato())) {
    return Item::salad();
  }
  return std::nullopt;
}

bool put_down_possible(const KitchenState& s, const AgentPose& a) {
  if (!a.held) return false;
  const Pos f = a.faced_cell();
  if (!in_bounds(f)) return false;
  const Cell& c = s.at(f);
  if (!can_hold_item(c.kind)) return false;
  if (!c.item) return true;
  return combine(*a.held, *c.item).has_value();
}

bool pick_up_possible(const KitchenState& s, const AgentPose& a) {
  if (a.held) return false;
  const Pos f = a.faced_cell();
  if (!in_bounds(f)) return false;
  const Cell& c = s.at(f);
  return c.item.has_value() || c.kind == CellKind::kTomatoSource || c.kind == CellKind::kPlateSource;
}

bool chop_possible(const KitchenState& s, const AgentPose& a) {
  const Pos f = a.faced_cell();
  if (!in_bounds(f)) return false;
  const Cell& c = s.at(f);
  return c.kind == CellKind::kCutboard && c.item && c.item->is_whole_tomato();
}

bool deliver_possible(const KitchenState& s, const AgentPose& a) {
  const Pos f = a.faced_cell();
  return a.held && in_bounds(f) && s.at(f).kind == CellKind::kDelivery;
}

bool walkable(const KitchenState& s, Pos p) { return in_bounds(p) && s.at(p).kind == CellKind::kFloor; }

}  // namespace

Layout parse_layout(std::string_view text) {
  Layout layout;
  std::istringstream in{std::string(text)};
  std::string line;
  int row = 0;
  std::vector<std::pair<char, Pos>> starts;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == ';') continue;
    if (row >= kGridSize) throw FormatError("layout has more than 7 grid rows");
    if (static_cast<int>(line.size()) != kGridSize) {
      throw FormatError("layout row " + std::to_string(row) + " must have exactly 7 cells");
    }
    for (int col = 0; col < kGridSize; ++col) {
      CellKind kind{};
      const char ch = line[static_cast<std::size_t>(col)];
      switch (ch) {
        case '.': kind = CellKind::kFloor; break;
        case '-': kind = CellKind::kCounter; break;
        case 'T': kind = CellKind::kTomatoSource; break;
        case 'C': kind = CellKind::kCutboard; break;
        case 'P': kind = CellKind::kPlateSource; break;
        case 'D': kind = CellKind::kDelivery; break;
        case '#': kind = CellKind::kWall; break;
        case '1':
        case '2':
          kind = CellKind::kFloor;
          starts.emplace_back(ch, Pos{row, col});
          break;
        default:
          throw FormatError(std::string("unknown layout character '") + ch + "'");
      }
      layout.cells[static_cast<std::size_t>(row * kGridSize + col)] = kind;
    }
    ++row;
  }
  if (row != kGridSize) throw FormatError("layout must have exactly 7 grid rows");
  std::sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (starts.size() != static_cast<std::size_t>(kNumAgents) || starts[0].first != '1' || starts[1].first != '2') {
    throw FormatError("layout must place exactly one '1' and one '2'");
  }
  for (const auto& [ch, p] : starts) layout.starts.push_back(p);
  return layout;
}

const Layout& canonical_layout(MapId map) {
  static const Layout single = parse_layout(embedded_file("layouts/single_room.txt"));
  static const Layout separate = parse_layout(embedded_file("layouts/separate_rooms.txt"));
  return map == MapId::kSingleRoom ? single : separate;
}

KitchenState create(MapId map, Dish task, std::uint64_t seed, int horizon) {
  if (task != Dish::kTomatoSalad) throw ConfigError("only tomato_salad is supported");
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  const Layout& layout = canonical_layout(map);
  KitchenState s;
  s.map = map;
  s.task = task;
  s.horizon = horizon;
  s.rng_seed = seed;
  for (std::size_t i = 0; i < s.grid.size(); ++i) s.grid[i].kind = layout.cells[i];
  for (const Pos& p : layout.starts) s.agents.push_back(AgentPose{p, Direction::kNorth, std::nullopt});
  return s;
}

KitchenState create(std::string_view map_name, std::string_view task_name, std::uint64_t seed, int horizon) {
  return create(parse_map_id(map_name), parse_dish(task_name), seed, horizon);
}

double reward_for(std::span<const Event> events) {
  int chopped = 0, delivered = 0, wrong = 0, collisions = 0;
  for (Event e : events) {
    switch (e) {
      case Event::kChoppedCorrect: ++chopped; break;
      case Event::kDeliveredCorrect: ++delivered; break;
      case Event::kDeliveredWrong: ++wrong; break;
      case Event::kCollision: ++collisions; break;
    }
  }
  return kRewardChopCorrect * chopped + kRewardDeliverCorrect * delivered + kRewardDeliverWrong * wrong +
         kRewardCollision * collisions + kRewardStep;
}

bool is_legal(const KitchenState& s, int agent, Verb verb) {
  const AgentPose& a = s.agents.at(static_cast<std::size_t>(agent));
  switch (verb) {
    case Verb::kMoveUp:
    case Verb::kMoveDown:
    case Verb::kMoveLeft:
    case Verb::kMoveRight:
    case Verb::kNoop: return true;
    case Verb::kPickUp: return pick_up_possible(s, a);
    case Verb::kPutDown: return put_down_possible(s, a);
    case Verb::kChop: return chop_possible(s, a);
    case Verb::kDeliver: return deliver_possible(s, a);
  }
  return false;
}

std::vector<AgentAction> legal_actions(const KitchenState& s, int agent) {
  if (agent < 0 || agent >= static_cast<int>(s.agents.size())) throw UsageError("agent index out of range");
  std::vector<AgentAction> out;
  for (const AgentAction& a : AgentAction::all()) {
    if (is_legal(s, agent, a.verb)) out.push_back(a);
  }
  return out;
}

StepOutcome step(KitchenState& s, std::span<const AgentAction> joint) {
  if (s.done) throw UsageError("step called on a finished episode");
  if (joint.size() != s.agents.size()) throw UsageError("joint action must have one entry per agent");

  StepOutcome out;
  const int n = static_cast<int>(s.agents.size());

  // Movement: facing always turns; the position changes only onto free floor.
  std::vector<std::optional<Pos>> target(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& a = s.agents[static_cast<std::size_t>(i)];
    if (auto d = move_direction(joint[static_cast<std::size_t>(i)].verb)) {
      a.facing = *d;
      const Pos t = a.pos.step(*d);
      if (walkable(s, t)) target[static_cast<std::size_t>(i)] = t;
    }
  }
  if (n == 2 && target[0] && target[1]) {
    const bool same = *target[0] == *target[1];
    const bool swap = *target[0] == s.agents[1].pos && *target[1] == s.agents[0].pos;
    if (same || swap) {
      target[0].reset();
      target[1].reset();
      out.events.push_back(Event::kCollision);
    }
  }
  // Moving into a teammate who stays put is blocked; iterate to a fixpoint so
  // a blocked mover in turn blocks whoever targets its cell.
  for (bool changed = true; changed;) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      auto& ti = target[static_cast<std::size_t>(i)];
      if (!ti) continue;
      for (int j = 0; j < n; ++j) {
        if (j == i || target[static_cast<std::size_t>(j)]) continue;
        if (*ti == s.agents[static_cast<std::size_t>(j)].pos) {
          ti.reset();
          out.events.push_back(Event::kCollision);
          changed = true;
          break;
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (target[static_cast<std::size_t>(i)]) s.agents[static_cast<std::size_t>(i)].pos = *target[static_cast<std::size_t>(i)];
  }

  // Interactions resolve in agent order; each re-checks legality against the
  // state left by the previous one.
  bool delivered_correct = false;
  for (int i = 0; i < n; ++i) {
    auto& a = s.agents[static_cast<std::size_t>(i)];
    const Verb v = joint[static_cast<std::size_t>(i)].verb;
    const Pos f = a.faced_cell();
    switch (v) {
      case Verb::kPickUp:
        if (pick_up_possible(s, a)) {
          Cell& c = s.at(f);
          if (c.item) {
            a.held = c.item;
            c.item.reset();
          } else if (c.kind == CellKind::kTomatoSource) {
            a.held = Item::whole_tomato();
          } else {
            a.held = Item::empty_plate();
          }
        }
        break;
      case Verb::kPutDown:
        if (put_down_possible(s, a)) {
          Cell& c = s.at(f);
          c.item = c.item ? combine(*a.held, *c.item) : a.held;
          a.held.reset();
        }
        break;
      case Verb::kChop:
        if (chop_possible(s, a)) {
          const bool needed = chop_is_needed(s);
          s.at(f).item = Item::chopped_tomato();
          if (needed) out.events.push_back(Event::kChoppedCorrect);
        }
        break;
      case Verb::kDeliver:
        if (deliver_possible(s, a)) {
          if (a.held->is_dish() && a.held->assembled == s.task) {
            out.events.push_back(Event::kDeliveredCorrect);
            delivered_correct = true;
          } else {
            out.events.push_back(Event::kDeliveredWrong);
          }
          a.held.reset();
        }
        break;
      default: break;
    }
  }

  s.timestep += 1;
  out.reward = reward_for(out.events);
  s.done = delivered_correct || s.timestep >= s.horizon;
  out.done = s.done;
  out.observations = all_views(s);
  return out;
}

ObservationWindow local_view(const KitchenState& s, int agent) {
  if (agent < 0 || agent >= static_cast<int>(s.agents.size())) throw UsageError("agent index out of range");
  const AgentPose& a = s.agents[static_cast<std::size_t>(agent)];
  ObservationWindow w;
  w.agent = agent;
  w.center = a.pos;
  w.own_held = a.held;
  w.own_facing = a.facing;
  for (int dr = -kWindowRadius; dr <= kWindowRadius; ++dr) {
    for (int dc = -kWindowRadius; dc <= kWindowRadius; ++dc) {
      const Pos p{a.pos.row + dr, a.pos.col + dc};
      auto& slot = w.cells[static_cast<std::size_t>((dr + kWindowRadius) * kWindowSize + dc + kWindowRadius)];
      if (!in_bounds(p)) continue;
      const Cell& c = s.at(p);
      slot = CellSnapshot{c.kind, c.item, s.agent_at(p)};
    }
  }
  return w;
}

std::vector<ObservationWindow> all_views(const KitchenState& s) {
  std::vector<ObservationWindow> out;
  for (int i = 0; i < static_cast<int>(s.agents.size()); ++i) out.push_back(local_view(s, i));
  return out;
}

std::vector<Pos> reachable_floor(const KitchenState& s, Pos from) {
  std::vector<Pos> out;
  if (!walkable(s, from)) return out;
  std::array<bool, kGridSize * kGridSize> seen{};
  std::deque<Pos> queue{from};
  seen[static_cast<std::size_t>(from.row * kGridSize + from.col)] = true;
  while (!queue.empty()) {
    const Pos p = queue.front();
    queue.pop_front();
    out.push_back(p);
    for (Direction d : {Direction::kNorth, Direction::kSouth, Direction::kWest, Direction::kEast}) {
      const Pos q = p.step(d);
      if (!walkable(s, q)) continue;
      auto& flag = seen[static_cast<std::size_t>(q.row * kGridSize + q.col)];
      if (flag) continue;
      flag = true;
      queue.push_back(q);
    }
  }
  return out;
}

std::string render_ascii(const KitchenState& s) {
  std::string out;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const Pos p{r, c};
      const Cell& cell = s.at(p);
      char ch = '?';
      if (auto who = s.agent_at(p)) {
        ch = static_cast<char>('1' + *who);
      } else if (cell.item) {
        constexpr char kItemGlyph[] = {'t', 'x', 'o', 's'};
        ch = kItemGlyph[item_state_index(*cell.item)];
      } else {
        switch (cell.kind) {
          case CellKind::kFloor: ch = '.'; break;
          case CellKind::kCounter: ch = '-'; break;
          case CellKind::kTomatoSource: ch = 'T'; break;
          case CellKind::kCutboard: ch = 'C'; break;
          case CellKind::kPlateSource: ch = 'P'; break;
          case CellKind::kDelivery: ch = 'D'; break;
          case CellKind::kWall: ch = '#'; break;
        }
      }
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace verco::kitchen
