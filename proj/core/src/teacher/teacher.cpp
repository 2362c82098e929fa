#include "verco/teacher/teacher.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "verco/common/embedded_data.hpp"
#include "verco/common/error.hpp"
#include "verco/kitchen/kitchen_env.hpp"
#include "verco/textgen/vocabulary.hpp"

namespace verco::teacher {

using kitchen::AgentPose;
using kitchen::CellKind;
using kitchen::Direction;
using kitchen::Item;
using kitchen::KitchenState;
using kitchen::Pos;
using kitchen::Verb;

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(sep, start);
    out.push_back(trim(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

// Non-comment, non-empty lines split on '|'.
std::vector<std::vector<std::string>> table_rows(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == ';') continue;
    rows.push_back(split(t, '|'));
  }
  return rows;
}

const std::set<std::string, std::less<>> kPredicates = {
    "dish_held",  "dish_loose",        "chopped_held", "chopped_loose",  "plate_held", "plate_loose",
    "whole_held", "whole_on_cutboard", "whole_loose",  "holder_can_cut", "separated",  "plate_on_cutboard",
};
const std::set<std::string, std::less<>> kSelectors = {
    "holder_dish", "holder_chopped", "holder_plate", "holder_whole", "nearest_dish",
    "plate_fetcher", "chopper", "taker", "tomato_side", "plate_clearer",
};

// --- world reconstruction and geometry ---------------------------------------

KitchenState reconstruct(std::span<const prompt::TextObservation> obs, const TaskProgress& progress) {
  KitchenState s = kitchen::create(progress.map, kitchen::Dish::kTomatoSalad, 0);
  for (const auto& [pos, item] : progress.items) s.at(pos).item = item;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& w = obs[i].source_window;
    s.agents[i] = AgentPose{w.center, w.own_facing, w.own_held};
  }
  return s;
}

using CellTest = std::function<bool(const KitchenState&, Pos)>;

bool walkable(const KitchenState& s, Pos p) { return kitchen::in_bounds(p) && s.at(p).kind == CellKind::kFloor; }

constexpr std::array<Direction, 4> kDirs = {Direction::kNorth, Direction::kSouth, Direction::kWest, Direction::kEast};

// Steps from the agent to some floor cell adjacent to a target cell, over its
// own floor region and ignoring the teammate.
std::optional<int> distance_to(const KitchenState& s, int agent, const CellTest& target) {
  const Pos start = s.agents[static_cast<std::size_t>(agent)].pos;
  std::array<int, kitchen::kGridSize * kitchen::kGridSize> dist;
  dist.fill(-1);
  std::deque<Pos> queue{start};
  dist[static_cast<std::size_t>(start.row * kitchen::kGridSize + start.col)] = 0;
  while (!queue.empty()) {
    const Pos p = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(p.row * kitchen::kGridSize + p.col)];
    for (Direction dir : kDirs) {
      const Pos q = p.step(dir);
      if (kitchen::in_bounds(q) && target(s, q)) return d;
    }
    for (Direction dir : kDirs) {
      const Pos q = p.step(dir);
      if (!walkable(s, q)) continue;
      auto& dq = dist[static_cast<std::size_t>(q.row * kitchen::kGridSize + q.col)];
      if (dq >= 0) continue;
      dq = d + 1;
      queue.push_back(q);
    }
  }
  return std::nullopt;
}

struct Route {
  Verb first = Verb::kNoop;
  std::vector<Pos> cells;  // positions visited after the current one
};

// First action of a shortest plan over (position, facing) that ends facing a
// target cell, then the interaction itself. The teammate's cell is blocked
// unless ignore_teammate is set.
std::optional<Route> next_step(const KitchenState& s, int agent, const CellTest& target, Verb interaction,
                               bool ignore_teammate = false) {
  const AgentPose& me = s.agents[static_cast<std::size_t>(agent)];
  const Pos other = s.agents[static_cast<std::size_t>(1 - agent)].pos;
  auto faced_ok = [&](Pos p, Direction f) {
    const Pos q = p.step(f);
    return kitchen::in_bounds(q) && target(s, q);
  };
  if (faced_ok(me.pos, me.facing)) return Route{interaction, {}};
  struct Node {
    Pos pos;
    Direction facing;
    int parent;
    Verb via;
  };
  auto key = [](Pos p, Direction f) {
    return static_cast<std::size_t>((p.row * kitchen::kGridSize + p.col) * 4 + static_cast<int>(f));
  };
  std::vector<bool> seen(kitchen::kGridSize * kitchen::kGridSize * 4, false);
  seen[key(me.pos, me.facing)] = true;
  std::vector<Node> nodes{Node{me.pos, me.facing, -1, Verb::kNoop}};
  constexpr std::array<Verb, 4> kMoves = {Verb::kMoveUp, Verb::kMoveDown, Verb::kMoveLeft, Verb::kMoveRight};
  for (std::size_t head = 0; head < nodes.size(); ++head) {
    const Node n = nodes[head];
    for (Verb v : kMoves) {
      const Direction d = *kitchen::move_direction(v);
      Pos np = n.pos.step(d);
      if (!walkable(s, np) || (!ignore_teammate && np == other)) np = n.pos;
      if (seen[key(np, d)]) continue;
      seen[key(np, d)] = true;
      nodes.push_back(Node{np, d, static_cast<int>(head), v});
      if (!faced_ok(np, d)) continue;
      Route r;
      std::vector<int> chain;
      for (int i = static_cast<int>(nodes.size()) - 1; i > 0; i = nodes[static_cast<std::size_t>(i)].parent) chain.push_back(i);
      r.first = nodes[static_cast<std::size_t>(chain.back())].via;
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) r.cells.push_back(nodes[static_cast<std::size_t>(*it)].pos);
      return r;
    }
  }
  return std::nullopt;
}

bool item_is(const std::optional<Item>& it, const std::function<bool(const Item&)>& f) { return it && f(*it); }

CellTest cell_item(std::function<bool(const Item&)> f) {
  return [f](const KitchenState& s, Pos p) { return item_is(s.at(p).item, f); };
}
CellTest cell_kind(CellKind k) {
  return [k](const KitchenState& s, Pos p) { return s.at(p).kind == k; };
}

const auto kWhole = [](const Item& i) { return i.is_whole_tomato(); };
const auto kChopped = [](const Item& i) { return i.is_chopped_tomato(); };
const auto kPlate = [](const Item& i) { return i.is_empty_plate(); };
const auto kDish = [](const Item& i) { return i.is_dish(); };

bool free_holder(const KitchenState& s, Pos p) {
  const CellKind k = s.at(p).kind;
  return (k == CellKind::kCounter || k == CellKind::kCutboard) && !s.at(p).item;
}
bool free_counter(const KitchenState& s, Pos p) { return s.at(p).kind == CellKind::kCounter && !s.at(p).item; }

bool regions_disjoint(const KitchenState& s) {
  const auto region = kitchen::reachable_floor(s, s.agents[0].pos);
  return std::find(region.begin(), region.end(), s.agents[1].pos) == region.end();
}

// Counters that both agents can stand next to.
CellTest shared_free_counter(const KitchenState& s) {
  std::set<std::pair<int, int>> both;
  std::array<std::set<std::pair<int, int>>, 2> touch;
  for (int a = 0; a < 2; ++a) {
    for (const Pos& p : kitchen::reachable_floor(s, s.agents[static_cast<std::size_t>(a)].pos)) {
      for (Direction d : kDirs) {
        const Pos q = p.step(d);
        if (kitchen::in_bounds(q) && s.at(q).kind == CellKind::kCounter) touch[static_cast<std::size_t>(a)].insert({q.row, q.col});
      }
    }
  }
  for (const auto& c : touch[0]) {
    if (touch[1].contains(c)) both.insert(c);
  }
  return [both](const KitchenState& st, Pos p) { return both.contains({p.row, p.col}) && !st.at(p).item; };
}

struct Plan {
  CellTest target;
  Verb interaction = Verb::kNoop;
  // What the hands must hold first: nothing, or an item satisfying `needs`.
  bool needs_empty_hands = false;
  std::function<bool(const Item&)> needs;
};

std::optional<Plan> plan_for(const KitchenState& s, std::string_view subtask) {
  if (subtask == "fetch_tomato") return Plan{cell_kind(CellKind::kTomatoSource), Verb::kPickUp, true, {}};
  if (subtask == "take_tomato") {
    return Plan{[](const KitchenState& st, Pos p) { return st.at(p).kind == CellKind::kCounter && item_is(st.at(p).item, kWhole); },
                Verb::kPickUp, true, {}};
  }
  if (subtask == "cut_tomato") {
    return Plan{[](const KitchenState& st, Pos p) { return st.at(p).kind == CellKind::kCutboard && !st.at(p).item; },
                Verb::kPutDown, false, kWhole};
  }
  if (subtask == "chop_tomato") {
    return Plan{[](const KitchenState& st, Pos p) { return st.at(p).kind == CellKind::kCutboard && item_is(st.at(p).item, kWhole); },
                Verb::kChop, false, {}};
  }
  if (subtask == "pass_tomato") return Plan{shared_free_counter(s), Verb::kPutDown, false, kWhole};
  if (subtask == "pass_plate") return Plan{shared_free_counter(s), Verb::kPutDown, false, kPlate};
  if (subtask == "pass_dish") return Plan{shared_free_counter(s), Verb::kPutDown, false, kDish};
  if (subtask == "fetch_plate") {
    return Plan{[](const KitchenState& st, Pos p) { return st.at(p).kind == CellKind::kPlateSource || item_is(st.at(p).item, kPlate); },
                Verb::kPickUp, true, {}};
  }
  if (subtask == "clear_cutboard") {
    return Plan{[](const KitchenState& st, Pos p) { return st.at(p).kind == CellKind::kCutboard && item_is(st.at(p).item, kPlate); },
                Verb::kPickUp, true, {}};
  }
  if (subtask == "plate_tomato") return Plan{cell_item(kChopped), Verb::kPutDown, false, kPlate};
  if (subtask == "put_on_plate") return Plan{cell_item(kPlate), Verb::kPutDown, false, kChopped};
  if (subtask == "drop_item") return Plan{free_counter, Verb::kPutDown, false, [](const Item&) { return true; }};
  if (subtask == "pick_dish") return Plan{cell_item(kDish), Verb::kPickUp, true, {}};
  if (subtask == "deliver_dish") return Plan{cell_kind(CellKind::kDelivery), Verb::kDeliver, false, kDish};
  return std::nullopt;  // stay_clear, hold_plate, continue
}

struct Resolved {
  Assignment assignment;
  std::vector<Pos> route;  // cells the agent wants to pass, ignoring the teammate
};

// Resolves an assigned subtask into what the agent should do next; the
// subtask may be rewritten (already done, or unreachable).
Resolved resolve(const KitchenState& s, int agent, std::string subtask) {
  const AgentPose& me = s.agents[static_cast<std::size_t>(agent)];
  auto idle = [](std::string name) { return Resolved{Assignment{std::move(name), TargetItem::kNone, Verb::kNoop}, {}}; };
  if (subtask == "fetch_plate" && item_is(me.held, kPlate)) subtask = "hold_plate";
  auto plan = plan_for(s, subtask);
  if (!plan) return idle(subtask);
  if (plan->needs && !item_is(me.held, plan->needs)) return idle("stay_clear");
  CellTest target = plan->target;
  Verb interaction = plan->interaction;
  if (plan->needs_empty_hands && me.held) {
    // Park whatever is in hand first, unless the target itself is unreachable.
    if (!distance_to(s, agent, plan->target)) return idle("stay_clear");
    target = free_counter;
    interaction = Verb::kPutDown;
  }
  auto free_route = next_step(s, agent, target, interaction, true);
  if (!free_route && me.held && regions_disjoint(s)) {
    // Hand the item over the shared counter instead.
    subtask = me.held->is_dish() ? "pass_dish" : me.held->kind == kitchen::ItemKind::kPlate ? "pass_plate" : "pass_tomato";
    target = shared_free_counter(s);
    interaction = Verb::kPutDown;
    free_route = next_step(s, agent, target, interaction, true);
  }
  if (!free_route) return idle("stay_clear");
  // Blocked only by the teammate: wait for it to clear the way.
  auto route = next_step(s, agent, target, interaction);
  const Verb next = route && route->cells.size() <= free_route->cells.size() + 2 ? route->first : Verb::kNoop;
  return Resolved{Assignment{subtask, TargetItem::kNone, next}, free_route->cells};
}

// Step off the teammate's route, or wait when already clear of it.
Verb clear_of(const KitchenState& s, int agent, const std::vector<Pos>& route) {
  const Pos here = s.agents[static_cast<std::size_t>(agent)].pos;
  const Pos other = s.agents[static_cast<std::size_t>(1 - agent)].pos;
  auto on_route = [&](Pos p) { return std::find(route.begin(), route.end(), p) != route.end(); };
  if (!on_route(here)) return Verb::kNoop;
  for (Verb v : {Verb::kMoveUp, Verb::kMoveDown, Verb::kMoveLeft, Verb::kMoveRight}) {
    const Pos q = here.step(*kitchen::move_direction(v));
    if (walkable(s, q) && q != other && !on_route(q)) return v;
  }
  for (Verb v : {Verb::kMoveUp, Verb::kMoveDown, Verb::kMoveLeft, Verb::kMoveRight}) {
    const Pos q = here.step(*kitchen::move_direction(v));
    if (walkable(s, q) && q != other) return v;
  }
  return Verb::kNoop;
}

// Moves that would collide (same destination or a swap) are cancelled by the
// environment; let one agent wait instead.
void yield_on_conflict(const KitchenState& s, std::vector<Assignment>& assigned) {
  std::array<Pos, 2> dest;
  bool moving[2];
  for (std::size_t i = 0; i < 2; ++i) {
    dest[i] = s.agents[i].pos;
    moving[i] = false;
    if (auto d = kitchen::move_direction(assigned[i].next)) {
      const Pos q = s.agents[i].pos.step(*d);
      if (walkable(s, q)) {
        dest[i] = q;
        moving[i] = true;
      }
    }
  }
  if (!moving[0] || !moving[1]) return;
  const bool same = dest[0] == dest[1];
  const bool swap = dest[0] == s.agents[1].pos && dest[1] == s.agents[0].pos;
  if (!same && !swap) return;
  const std::size_t waiter = assigned[0].subtask == "stay_clear" && assigned[1].subtask != "stay_clear" ? 0 : 1;
  assigned[waiter].next = Verb::kNoop;
}

TargetItem parse_target(std::string_view t, const std::optional<Item>& held) {
  if (t == "tomato") return TargetItem::kTomato;
  if (t == "plate") return TargetItem::kPlate;
  if (t == "dish") return TargetItem::kDish;
  if (t == "held") {
    if (!held) return TargetItem::kNone;
    if (held->is_dish()) return TargetItem::kDish;
    return held->kind == kitchen::ItemKind::kPlate ? TargetItem::kPlate : TargetItem::kTomato;
  }
  return TargetItem::kNone;
}

}  // namespace

int count_words(std::string_view text) {
  int n = 0;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) {
    if (std::any_of(w.begin(), w.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); })) ++n;
  }
  return n;
}

Message Message::make(int sender, std::string text) {
  const int words = count_words(text);
  if (words == 0) throw UsageError("message text is empty");
  if (words > kMaxMessageWords) {
    throw UsageError("message has " + std::to_string(words) + " words, more than " + std::to_string(kMaxMessageWords));
  }
  return Message{sender, std::move(text), words};
}

TaskProgress summarize(const KitchenState& state) {
  TaskProgress p;
  p.map = state.map;
  for (int r = 0; r < kitchen::kGridSize; ++r) {
    for (int c = 0; c < kitchen::kGridSize; ++c) {
      if (const auto& it = state.at(Pos{r, c}).item) p.items.emplace_back(Pos{r, c}, *it);
    }
  }
  return p;
}

std::vector<ScriptedTeacher::Rule> ScriptedTeacher::parse_rules(std::string_view text) {
  std::vector<Rule> rules;
  for (const auto& row : table_rows(text)) {
    if (row.size() != 4) throw FormatError("teacher rule needs 4 '|' separated fields: " + row.front());
    Rule r;
    r.name = row[0];
    for (const auto& c : split(row[1], '&')) {
      const bool negated = !c.empty() && c.front() == '!';
      const std::string pred = negated ? trim(std::string_view(c).substr(1)) : c;
      if (!kPredicates.contains(pred)) throw FormatError("unknown teacher predicate '" + pred + "' in rule " + r.name);
      r.conditions.emplace_back(pred, negated);
    }
    auto parse_assignment = [&](const std::string& field, std::string& selector, std::string& subtask) {
      const auto parts = split(field, ':');
      if (parts.size() != 2) throw FormatError("malformed assignment '" + field + "' in rule " + r.name);
      selector = parts[0];
      subtask = parts[1];
    };
    std::string second_selector;
    parse_assignment(row[2], r.selector, r.first_subtask);
    parse_assignment(row[3], second_selector, r.second_subtask);
    if (!kSelectors.contains(r.selector)) throw FormatError("unknown selector '" + r.selector + "' in rule " + r.name);
    if (second_selector != "other") throw FormatError("second assignment of rule " + r.name + " must use 'other'");
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<ScriptedTeacher::Subtask> ScriptedTeacher::parse_subtasks(std::string_view text) {
  std::vector<Subtask> out;
  for (const auto& row : table_rows(text)) {
    if (row.size() != 3) throw FormatError("subtask line needs 3 '|' separated fields: " + row.front());
    static const std::set<std::string, std::less<>> kTargets = {"tomato", "plate", "dish", "held", "none"};
    if (!kTargets.contains(row[1])) throw FormatError("unknown target item '" + row[1] + "'");
    out.push_back(Subtask{row[0], row[1], row[2]});
  }
  return out;
}

ScriptedTeacher::ScriptedTeacher()
    : ScriptedTeacher(embedded_file("teacher/rules.txt"), embedded_file("teacher/subtasks.txt")) {}

ScriptedTeacher::ScriptedTeacher(std::string_view rules, std::string_view subtasks)
    : rules_(parse_rules(rules)), subtasks_(parse_subtasks(subtasks)) {
  for (const auto& r : rules_) {
    subtask(r.first_subtask);
    subtask(r.second_subtask);
  }
  for (const char* required : {"stay_clear", "hold_plate", "continue"}) subtask(required);
}

const ScriptedTeacher::Subtask& ScriptedTeacher::subtask(std::string_view name) const {
  for (const auto& s : subtasks_) {
    if (s.name == name) return s;
  }
  throw FormatError("teacher references unknown subtask '" + std::string(name) + "'");
}

std::vector<std::string> ScriptedTeacher::message_words() const {
  std::vector<std::string> words{","};
  for (const auto& s : subtasks_) {
    for (auto& w : textgen::tokenize_words(s.text)) words.push_back(std::move(w));
  }
  for (const auto& a : kitchen::AgentAction::all()) {
    for (auto& w : textgen::tokenize_words(a.surface_text())) words.push_back(std::move(w));
  }
  return words;
}

Labels ScriptedTeacher::plan(std::span<const prompt::TextObservation> observations, const TaskProgress& progress) const {
  if (observations.size() != static_cast<std::size_t>(kitchen::kNumAgents)) {
    throw UsageError("the scripted teacher needs one observation per agent (two)");
  }
  const KitchenState s = reconstruct(observations, progress);

  auto holder = [&](const auto& f) -> std::optional<int> {
    for (int a = 0; a < 2; ++a) {
      if (item_is(s.agents[static_cast<std::size_t>(a)].held, f)) return a;
    }
    return std::nullopt;
  };
  auto any_cell = [&](const CellTest& t) {
    for (int r = 0; r < kitchen::kGridSize; ++r) {
      for (int c = 0; c < kitchen::kGridSize; ++c) {
        if (t(s, Pos{r, c})) return true;
      }
    }
    return false;
  };
  auto nearest = [&](const CellTest& t, const std::function<bool(int)>& eligible) -> std::optional<int> {
    std::optional<int> best;
    int best_d = 0;
    for (int a = 0; a < 2; ++a) {
      if (eligible && !eligible(a)) continue;
      if (auto d = distance_to(s, a, t); d && (!best || *d < best_d)) {
        best = a;
        best_d = *d;
      }
    }
    return best;
  };
  const CellTest empty_cutboard = [](const KitchenState& st, Pos p) {
    return st.at(p).kind == CellKind::kCutboard && !st.at(p).item;
  };
  const CellTest whole_on_board = [](const KitchenState& st, Pos p) {
    return st.at(p).kind == CellKind::kCutboard && item_is(st.at(p).item, kWhole);
  };
  const CellTest plate_on_board = [](const KitchenState& st, Pos p) {
    return st.at(p).kind == CellKind::kCutboard && item_is(st.at(p).item, kPlate);
  };
  const CellTest whole_on_counter = [](const KitchenState& st, Pos p) {
    return st.at(p).kind == CellKind::kCounter && item_is(st.at(p).item, kWhole);
  };

  auto predicate = [&](std::string_view name) -> bool {
    if (name == "dish_held") return holder(kDish).has_value();
    if (name == "dish_loose") return any_cell(cell_item(kDish));
    if (name == "chopped_held") return holder(kChopped).has_value();
    if (name == "chopped_loose") return any_cell(cell_item(kChopped));
    if (name == "plate_held") return holder(kPlate).has_value();
    if (name == "plate_loose") return any_cell(cell_item(kPlate));
    if (name == "whole_held") return holder(kWhole).has_value();
    if (name == "whole_on_cutboard") return any_cell(whole_on_board);
    if (name == "whole_loose") return any_cell(whole_on_counter);
    if (name == "holder_can_cut") {
      auto h = holder(kWhole);
      return h && distance_to(s, *h, empty_cutboard).has_value();
    }
    if (name == "separated") return regions_disjoint(s);
    if (name == "plate_on_cutboard") return any_cell(plate_on_board);
    return false;
  };
  auto select = [&](std::string_view name) -> std::optional<int> {
    if (name == "holder_dish") return holder(kDish);
    if (name == "holder_chopped") return holder(kChopped);
    if (name == "holder_plate") return holder(kPlate);
    if (name == "holder_whole") return holder(kWhole);
    if (name == "nearest_dish") {
      auto can_deliver = [&](int a) { return distance_to(s, a, cell_kind(CellKind::kDelivery)).has_value(); };
      if (auto a = nearest(cell_item(kDish), can_deliver)) return a;
      return nearest(cell_item(kDish), {});
    }
    if (name == "plate_clearer") return nearest(plate_on_board, {});
    if (name == "plate_fetcher") {
      // Ranked by distance to the plate so the choice stays put while walking.
      const CellTest plate = [](const KitchenState& st, Pos p) {
        return st.at(p).kind == CellKind::kPlateSource || item_is(st.at(p).item, kPlate);
      };
      auto reaches_chopped = [&](int a) { return distance_to(s, a, cell_item(kChopped)).has_value(); };
      return nearest(plate, reaches_chopped);
    }
    if (name == "chopper") return nearest(whole_on_board, {});
    if (name == "tomato_side") return nearest(cell_kind(CellKind::kTomatoSource), {});
    if (name == "taker") {
      auto can_cut = [&](int a) { return distance_to(s, a, cell_kind(CellKind::kCutboard)).has_value(); };
      if (auto a = nearest(whole_on_counter, can_cut)) return a;
      return nearest(whole_on_counter, {});
    }
    return std::nullopt;
  };

  Labels out;
  std::array<std::string, 2> chosen{"continue", "continue"};
  out.rule = "default";
  for (const Rule& r : rules_) {
    bool ok = true;
    for (const auto& [pred, negated] : r.conditions) ok = ok && (predicate(pred) != negated);
    if (!ok) continue;
    auto first = select(r.selector);
    if (!first) continue;
    chosen[static_cast<std::size_t>(*first)] = r.first_subtask;
    chosen[static_cast<std::size_t>(1 - *first)] = r.second_subtask;
    out.rule = r.name;
    break;
  }
  if (out.rule == "default") spdlog::debug("teacher: no rule fired, sending the default message");

  std::array<Resolved, 2> resolved;
  for (int j = 0; j < 2; ++j) {
    resolved[static_cast<std::size_t>(j)] = out.rule == "default"
                                                ? Resolved{Assignment{"continue", TargetItem::kNone, Verb::kNoop}, {}}
                                                : resolve(s, j, chosen[static_cast<std::size_t>(j)]);
  }
  for (int j = 0; j < 2; ++j) {
    Assignment a = resolved[static_cast<std::size_t>(j)].assignment;
    if (a.subtask == "stay_clear") a.next = clear_of(s, j, resolved[static_cast<std::size_t>(1 - j)].route);
    a.target = parse_target(subtask(a.subtask).target, s.agents[static_cast<std::size_t>(j)].held);
    out.assigned.push_back(std::move(a));
  }
  yield_on_conflict(s, out.assigned);
  for (int i = 0; i < 2; ++i) {
    const Assignment& a = out.assigned[static_cast<std::size_t>(1 - i)];
    std::string text = subtask(a.subtask).text;
    if (a.subtask != "continue") {
      text += " , ";
      text += kitchen::AgentAction{a.next}.surface_text();
    }
    out.messages.push_back(Message::make(i, std::move(text)));
  }
  return out;
}

std::vector<Message> ScriptedTeacher::label(std::span<const prompt::TextObservation> observations,
                                            const TaskProgress& progress) const {
  return plan(observations, progress).messages;
}

}  // namespace verco::teacher
