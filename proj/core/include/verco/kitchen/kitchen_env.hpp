#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verco/kitchen/types.hpp"

namespace verco::kitchen {

// A parsed layout fixture: cell kinds plus agent start cells.
struct Layout {
  std::array<CellKind, kGridSize * kGridSize> cells{};
  std::vector<Pos> starts;
};

// Parses the plain-text grid legend documented in core/data/layouts/README.md.
Layout parse_layout(std::string_view text);
// The bundled layout for a map id.
const Layout& canonical_layout(MapId map);

// Fresh state on the canonical layout. Throws ConfigError for an unsupported
// task or a non-positive horizon.
KitchenState create(MapId map, Dish task, std::uint64_t seed, int horizon = kDefaultHorizon);
KitchenState create(std::string_view map_name, std::string_view task_name, std::uint64_t seed,
                    int horizon = kDefaultHorizon);

// Advances the state by one joint action. Actions that are not legal at
// resolution time have no effect beyond the step penalty. Throws UsageError
// when called on a finished episode or with the wrong number of actions.
StepOutcome step(KitchenState& state, std::span<const AgentAction> joint_action);

ObservationWindow local_view(const KitchenState& state, int agent);
std::vector<ObservationWindow> all_views(const KitchenState& state);

// Candidate action set for one agent; never empty (noop is always legal).
std::vector<AgentAction> legal_actions(const KitchenState& state, int agent);
bool is_legal(const KitchenState& state, int agent, Verb verb);

// Flood fill over floor cells reachable from `from`.
std::vector<Pos> reachable_floor(const KitchenState& state, Pos from);

// One character per cell plus agent glyphs, rows separated by '\n'.
std::string render_ascii(const KitchenState& state);

// Team reward for a multiset of events, including the per-step penalty.
double reward_for(std::span<const Event> events);

}  // namespace verco::kitchen
