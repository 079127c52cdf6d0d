#include "gridball/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace gridball::env {

namespace {

int Clamp(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

int Cheb(int ax, int ay, int bx, int by) {
  return std::max(std::abs(ax - bx), std::abs(ay - by));
}

int Sign(int v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

struct Dir {
  int dx, dy;
};

// Indexed by Action - kMoveLeft; must match the enum order.
constexpr Dir kMoveDirs[8] = {
    {-1, 0},   // left
    {-1, -1},  // top left
    {0, -1},   // top
    {1, -1},   // top right
    {1, 0},    // right
    {1, 1},    // bottom right
    {0, 1},    // bottom
    {-1, 1},   // bottom left
};

bool IsMove(int a) { return a >= kMoveLeft && a <= kMoveBottomLeft; }

int MoveToward(int dx, int dy) {
  // 8-direction move action for a desired displacement; kIdle when zero.
  const int sx = Sign(dx);
  const int sy = Sign(dy);
  for (int i = 0; i < 8; ++i) {
    if (kMoveDirs[i].dx == sx && kMoveDirs[i].dy == sy) return kMoveLeft + i;
  }
  return kIdle;
}

int GoalTop(const FieldConfig& c) { return (c.height - c.goal_height) / 2; }

// Goal mouth defended by `t` sits on that team's own end line.
int GoalLineX(const FieldConfig& c, Team t) { return t == Team::kHome ? 0 : c.width - 1; }

bool InGoalMouth(const FieldConfig& c, Team defending, int x, int y) {
  return x == GoalLineX(c, defending) && y >= GoalTop(c) && y < GoalTop(c) + c.goal_height;
}

// Attack-frame x: distance of progress toward the opponent goal.
int AttackX(const FieldConfig& c, Team t, int x) {
  return t == Team::kHome ? x : c.width - 1 - x;
}

bool InOpponentHalf(const FieldConfig& c, Team t, int x) {
  return AttackX(c, t, x) >= c.width / 2;
}

bool InPenaltyBox(const FieldConfig& c, Team attacking, int x, int y) {
  const int depth = c.width - 1 - AttackX(c, attacking, x);
  const int cy2 = c.height - 1;
  return depth <= 5 && std::abs(2 * y - cy2) <= 2 * (c.goal_height / 2 + 2);
}

std::vector<std::pair<int, int>> LaneCells(int x0, int y0, int x1, int y1) {
  // Bresenham line, excluding the start cell.
  std::vector<std::pair<int, int>> cells;
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  int x = x0, y = y0;
  while (!(x == x1 && y == y1)) {
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
    cells.emplace_back(x, y);
  }
  return cells;
}

int BallX(const MatchState& s) { return s.ball.owned ? s.players[s.ball.owner].x : s.ball.x; }
int BallY(const MatchState& s) { return s.ball.owned ? s.players[s.ball.owner].y : s.ball.y; }

int PlayerAt(const MatchState& s, int x, int y, std::optional<Team> team,
             std::span<const int> order) {
  for (int idx : order) {
    const auto& p = s.players[idx];
    if (p.x == x && p.y == y && (!team || p.team == *team)) return idx;
  }
  return -1;
}

// Per-step processing order: blocks alternate priority by step parity so that
// neither side systematically wins simultaneous claims.
std::vector<int> FairnessOrder(const MatchState& s) {
  const int ppt = PlayersPerTeam(s.config);
  std::vector<int> order;
  order.reserve(2 * ppt);
  const bool home_first = (s.steps_elapsed % 2) == 0;
  const int first = home_first ? 0 : ppt;
  const int second = home_first ? ppt : 0;
  for (int i = 0; i < ppt; ++i) order.push_back(first + i);
  for (int i = 0; i < ppt; ++i) order.push_back(second + i);
  return order;
}

void GiveBall(MatchState& s, int player, std::vector<RewardEvent>& events) {
  const Team new_team = s.players[player].team;
  const Team prev_team = s.ball.owned ? s.players[s.ball.owner].team : s.ball.last_owner_team;
  s.ball.owned = true;
  s.ball.owner = player;
  s.ball.x = s.players[player].x;
  s.ball.y = s.players[player].y;
  if (new_team != prev_team) {
    events.push_back({RewardEvent::Kind::kPossessionChange, new_team, player, 0, false});
    // A turnover invalidates the loser's pending secondary-attack window.
    s.last_pass_step[static_cast<int>(prev_team)] = -1000;
    s.last_pass_receiver[static_cast<int>(prev_team)] = -1;
  }
  s.ball.last_owner_team = new_team;
}

void DropBall(MatchState& s, int x, int y) {
  s.ball.owned = false;
  s.ball.owner = -1;
  s.ball.x = Clamp(x, 0, s.config.width - 1);
  s.ball.y = Clamp(y, 0, s.config.height - 1);
}

int KeeperIndex(const MatchState& s, Team t) {
  return TeamBlockBegin(s.config, t) + s.config.team_size;
}

int NearestPlayerOfTeam(const MatchState& s, Team t, int x, int y) {
  int best = -1, best_d = 1 << 30;
  const int begin = TeamBlockBegin(s.config, t);
  for (int i = begin; i < begin + PlayersPerTeam(s.config); ++i) {
    const int d = Cheb(s.players[i].x, s.players[i].y, x, y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

struct FormationSlot {
  int x, y;
};

std::vector<FormationSlot> HomeFormation(const FieldConfig& c) {
  // Documented in the README formation table; away mirrors x.
  const int cy = c.height / 2;
  std::vector<FormationSlot> slots = {
      {c.width / 3, cy - 3},
      {c.width / 3, cy + 3},
      {c.width / 4, cy},
      {c.width / 3 + 2, cy - 1},
  };
  if (c.team_size > static_cast<int>(slots.size())) {
    throw std::invalid_argument("team_size beyond the formation table (max 4 outfielders)");
  }
  slots.resize(c.team_size);
  return slots;
}

void PlaceFormation(MatchState& s) {
  const auto& c = s.config;
  const auto slots = HomeFormation(c);
  const int cy = c.height / 2;
  for (int side = 0; side < 2; ++side) {
    const Team t = side == 0 ? Team::kHome : Team::kAway;
    const int begin = TeamBlockBegin(c, t);
    for (int i = 0; i < c.team_size; ++i) {
      auto& p = s.players[begin + i];
      p.x = t == Team::kHome ? slots[i].x : c.width - 1 - slots[i].x;
      p.y = slots[i].y;
      p.facing_dx = t == Team::kHome ? 1 : -1;
      p.facing_dy = 0;
      p.sprinting = false;
      p.dribbling = false;
    }
    auto& keeper = s.players[begin + c.team_size];
    keeper.x = t == Team::kHome ? 1 : c.width - 2;
    keeper.y = cy;
    keeper.facing_dx = t == Team::kHome ? 1 : -1;
    keeper.facing_dy = 0;
    keeper.sprinting = false;
    keeper.dribbling = false;
  }
}

void KickoffAfterGoal(MatchState& s, Team kicking) {
  PlaceFormation(s);
  const int taker = TeamBlockBegin(s.config, kicking);
  auto& p = s.players[taker];
  p.x = s.config.width / 2 - (kicking == Team::kHome ? 1 : 0);
  p.y = s.config.height / 2;
  s.ball.owned = true;
  s.ball.owner = taker;
  s.ball.x = p.x;
  s.ball.y = p.y;
  s.ball.last_owner_team = kicking;
  s.mode = GameMode::kKickoff;
}

struct ShotOutcome {
  bool goal = false;
};

double ShotSuccessProbability(const FieldConfig& c, int dist) {
  if (dist <= 1) return 1.0;
  (void)c;
  return std::max(0.02, 1.0 - 0.18 * (dist - 1));
}

// --- step sub-phases --------------------------------------------------------

void ResolveShot(MatchState& s, int shooter, std::vector<RewardEvent>& events,
                 bool& goal_scored) {
  const auto& c = s.config;
  const Team t = s.players[shooter].team;
  const Team defending = Opponent(t);
  const auto& p = s.players[shooter];
  events.push_back({RewardEvent::Kind::kShotTaken, t, shooter, 0,
                    InPenaltyBox(c, t, p.x, p.y)});
  const int gx = GoalLineX(c, defending);
  const int gy = Clamp(p.y, GoalTop(c), GoalTop(c) + c.goal_height - 1);
  if (!s.ball.owned || s.ball.owner != shooter) {
    // Kicking a loose ball: take it first.
    GiveBall(s, shooter, events);
  }
  const auto lane = LaneCells(p.x, p.y, gx, gy);
  const auto order = FairnessOrder(s);
  for (const auto& [x, y] : lane) {
    const int blocker = PlayerAt(s, x, y, defending, order);
    if (blocker >= 0) {
      GiveBall(s, blocker, events);
      return;
    }
  }
  const int dist = Cheb(p.x, p.y, gx, gy);
  if (s.rng.Bernoulli(ShotSuccessProbability(c, dist))) {
    s.score[static_cast<int>(t)] += 1;
    const int diff = s.score[0] - s.score[1];
    events.push_back({RewardEvent::Kind::kGoal, t, shooter, diff, false});
    const int ti = static_cast<int>(t);
    if (s.steps_elapsed - s.last_pass_step[ti] <= c.secondary_attack_window &&
        s.last_pass_receiver[ti] == shooter) {
      events.push_back({RewardEvent::Kind::kSecondaryAttack, t, shooter, 0, false});
    }
    goal_scored = true;
    if (!s.scenario_active) KickoffAfterGoal(s, defending);
  } else {
    // Saved wide: the defending keeper restarts play.
    GiveBall(s, KeeperIndex(s, defending), events);
  }
}

void ResolvePass(MatchState& s, int passer, bool long_pass,
                 std::vector<RewardEvent>& events) {
  const auto& c = s.config;
  const Team t = s.players[passer].team;
  const auto& p = s.players[passer];
  events.push_back({long_pass ? RewardEvent::Kind::kLongPassTaken
                              : RewardEvent::Kind::kShortPassTaken,
                    t, passer, 0, false});
  if (!s.ball.owned || s.ball.owner != passer) {
    GiveBall(s, passer, events);
  }
  const int range = long_pass ? c.long_pass_range : c.short_pass_range;
  // Receiver: short pass goes to the nearest teammate in range, long pass to
  // the teammate with the most attacking progress in range.
  int receiver = -1;
  int best_key = long_pass ? -1 : (1 << 30);
  const int begin = TeamBlockBegin(c, t);
  for (int i = begin; i < begin + PlayersPerTeam(c); ++i) {
    if (i == passer) continue;
    const int d = Cheb(s.players[i].x, s.players[i].y, p.x, p.y);
    if (d > range || d == 0) continue;
    if (long_pass) {
      const int key = AttackX(c, t, s.players[i].x);
      if (key > best_key) {
        best_key = key;
        receiver = i;
      }
    } else {
      if (d < best_key) {
        best_key = d;
        receiver = i;
      }
    }
  }
  int tx, ty;
  if (receiver >= 0) {
    tx = s.players[receiver].x;
    ty = s.players[receiver].y;
  } else {
    tx = p.x + p.facing_dx * range;
    ty = p.y + p.facing_dy * range;
  }
  const auto lane = LaneCells(p.x, p.y, tx, ty);
  const int flyover = long_pass ? c.long_pass_flyover : 0;
  const auto order = FairnessOrder(s);
  const Team opp = Opponent(t);
  for (size_t i = 0; i < lane.size(); ++i) {
    if (static_cast<int>(i) < flyover) continue;
    const auto& [x, y] = lane[i];
    if (x < 0 || x >= c.width || y < 0 || y >= c.height) {
      // Ball sails out: possession to the nearest opponent (throw-in analog).
      events.push_back({RewardEvent::Kind::kOutOfBounds, t, passer, 0, false});
      const int cx = Clamp(x, 0, c.width - 1);
      const int cy = Clamp(y, 0, c.height - 1);
      GiveBall(s, NearestPlayerOfTeam(s, opp, cx, cy), events);
      return;
    }
    const int interceptor = PlayerAt(s, x, y, opp, order);
    if (interceptor >= 0) {
      GiveBall(s, interceptor, events);
      return;
    }
    if (receiver >= 0 && x == tx && y == ty) break;
  }
  if (receiver >= 0) {
    GiveBall(s, receiver, events);
    events.push_back({RewardEvent::Kind::kPassCompleted, t, receiver, 0, false});
    s.last_pass_step[static_cast<int>(t)] = s.steps_elapsed;
    s.last_pass_receiver[static_cast<int>(t)] = receiver;
  } else {
    DropBall(s, tx, ty);
  }
}

void ResolveSlide(MatchState& s, int slider, std::vector<RewardEvent>& events) {
  const Team t = s.players[slider].team;
  events.push_back({RewardEvent::Kind::kSlideTaken, t, slider, 0, false});
  if (!s.ball.owned) return;
  const int carrier = s.ball.owner;
  if (s.players[carrier].team == t) return;
  if (Cheb(s.players[slider].x, s.players[slider].y, s.players[carrier].x,
           s.players[carrier].y) > 1) {
    return;
  }
  if (s.rng.Bernoulli(s.config.slide_prob)) {
    GiveBall(s, slider, events);
    events.push_back({RewardEvent::Kind::kSuccessfulSlide, t, slider, 0, false});
  }
}

void MovePlayer(MatchState& s, int idx, int action) {
  const auto& c = s.config;
  auto& p = s.players[idx];
  const Dir d = kMoveDirs[action - kMoveLeft];
  p.facing_dx = d.dx;
  p.facing_dy = d.dy;
  const int steps = p.sprinting ? 2 : 1;
  for (int k = 0; k < steps; ++k) {
    int nx = Clamp(p.x + d.dx, 0, c.width - 1);
    int ny = Clamp(p.y + d.dy, 0, c.height - 1);
    if (p.is_keeper) {
      // Keepers stay inside their box.
      const Team t = p.team;
      const int gx = GoalLineX(c, t);
      const int lo_x = t == Team::kHome ? 0 : c.width - 3;
      const int hi_x = t == Team::kHome ? 2 : c.width - 1;
      (void)gx;
      nx = Clamp(nx, lo_x, hi_x);
      ny = Clamp(ny, GoalTop(c) - 1, GoalTop(c) + c.goal_height);
    }
    p.x = nx;
    p.y = ny;
    if (s.ball.owned && s.ball.owner == idx) {
      s.ball.x = nx;
      s.ball.y = ny;
    }
  }
}

int KeeperAction(const MatchState& s, int k) {
  const auto& c = s.config;
  const auto& p = s.players[k];
  if (s.ball.owned && s.ball.owner == k) return kLongPass;
  const int bx = BallX(s), by = BallY(s);
  const int home_x = p.team == Team::kHome ? 1 : c.width - 2;
  if (!s.ball.owned && Cheb(p.x, p.y, bx, by) <= 3) {
    if (p.x == bx && p.y == by) return kIdle;
    return MoveToward(bx - p.x, by - p.y);
  }
  // Hold the goal line, tracking the ball's height across the goal mouth.
  const int ty = Clamp(by, GoalTop(c), GoalTop(c) + c.goal_height - 1);
  if (p.x != home_x) return MoveToward(home_x - p.x, ty - p.y);
  if (p.y != ty) return MoveToward(0, ty - p.y);
  return kIdle;
}

}  // namespace

int ActionCount(const FieldConfig& config) {
  return config.sticky_actions ? kStickyActionCount : kBaseActionCount;
}

int TeamBlockBegin(const FieldConfig& c, Team t) {
  return t == Team::kHome ? 0 : PlayersPerTeam(c);
}

Team TeamOf(const MatchState& s, int player) {
  return player < PlayersPerTeam(s.config) ? Team::kHome : Team::kAway;
}

bool IsKeeperIndex(const FieldConfig& c, int player) {
  const int ppt = PlayersPerTeam(c);
  return player % ppt == ppt - 1;
}

std::vector<int> ControlledIndices(const MatchState& s) {
  std::vector<int> out = ControlledIndices(s, Team::kHome);
  const auto away = ControlledIndices(s, Team::kAway);
  out.insert(out.end(), away.begin(), away.end());
  return out;
}

std::vector<int> ControlledIndices(const MatchState& s, Team t) {
  std::vector<int> out;
  const int begin = TeamBlockBegin(s.config, t);
  const int count = s.config.scripted_keepers ? s.config.team_size : PlayersPerTeam(s.config);
  for (int i = 0; i < count; ++i) out.push_back(begin + i);
  return out;
}

void ValidateScenario(const FieldConfig& config, const ScenarioSpec& spec) {
  auto check_rect = [&](const Rect& r, const char* what) {
    if (r.x0 > r.x1 || r.y0 > r.y1) {
      throw std::invalid_argument(std::string("scenario region is empty: ") + what);
    }
    if (r.x0 < 0 || r.y0 < 0 || r.x1 >= config.width || r.y1 >= config.height) {
      throw std::invalid_argument(std::string("scenario region outside the field: ") + what);
    }
  };
  check_rect(spec.ball_region, "ball");
  check_rect(spec.offense_region, "offense");
  check_rect(spec.defense_region, "defense");
  if (spec.max_steps <= 0 || spec.max_steps > 512) {
    throw std::invalid_argument("scenario max_steps must be in (0, 512]");
  }
  // Ball and offense regions must stay clear of the defended goal mouth
  // (offense attacks toward x = width-1 in the spec frame).
  for (int y = GoalTop(config); y < GoalTop(config) + config.goal_height; ++y) {
    const int gx = config.width - 1;
    if (spec.ball_region.Contains(gx, y) || spec.offense_region.Contains(gx, y)) {
      throw std::invalid_argument("scenario region covers the defended goal mouth");
    }
  }
}

std::vector<ScenarioSpec> BuiltinScenarios(const FieldConfig& config) {
  const int w = config.width, h = config.height;
  const int cy = h / 2;
  auto r = [&](int x0, int y0, int x1, int y1) {
    return Rect{Clamp(x0, 0, w - 1), Clamp(y0, 0, h - 1), Clamp(x1, 0, w - 1),
                Clamp(y1, 0, h - 1)};
  };
  std::vector<ScenarioSpec> specs;
  specs.push_back({"kickoff", r(w / 2 - 1, cy - 1, w / 2, cy), r(w / 2 - 3, cy - 3, w / 2 - 1, cy + 2),
                   r(w / 2 + 1, cy - 3, w / 2 + 3, cy + 2), 2, 2, 256, GameMode::kKickoff});
  specs.push_back({"corner", r(w - 2, 0, w - 1, 1), r(w - 6, 2, w - 2, cy - 2),
                   r(w - 6, cy - 4, w - 3, cy + 3), 2, 2, 192, GameMode::kCorner});
  specs.push_back({"free_kick", r(w / 2 + 2, cy - 4, w / 2 + 4, cy + 3),
                   r(w / 2, cy - 4, w / 2 + 2, cy + 3), r(w / 2 + 5, cy - 3, w / 2 + 7, cy + 2),
                   2, 2, 192, GameMode::kFreeKick});
  specs.push_back({"penalty_box_attack", r(w - 6, cy - 3, w - 4, cy + 2),
                   r(w - 7, cy - 4, w - 5, cy + 3), r(w - 5, cy - 3, w - 3, cy + 2), 2, 2,
                   128, GameMode::kPenaltyBoxAttack});
  specs.push_back({"solo", r(w / 2 - 2, cy - 2, w / 2, cy + 1), r(w / 3, cy - 3, w / 3 + 2, cy + 2),
                   r(2 * w / 3, cy - 3, 2 * w / 3 + 3, cy + 2), 1, 1, 256, GameMode::kOpenPlay});
  for (const auto& s : specs) ValidateScenario(config, s);
  return specs;
}

MatchState ResetMatch(const FieldConfig& config, Rng& rng) {
  MatchState s;
  s.config = config;
  s.players.assign(2 * PlayersPerTeam(config), PlayerState{});
  for (int i = 0; i < static_cast<int>(s.players.size()); ++i) {
    s.players[i].team = i < PlayersPerTeam(config) ? Team::kHome : Team::kAway;
    s.players[i].is_keeper = IsKeeperIndex(config, i);
  }
  PlaceFormation(s);
  DropBall(s, config.width / 2, config.height / 2);
  s.ball.last_owner_team = Team::kHome;
  s.steps_total = config.match_steps;
  s.mode = GameMode::kKickoff;
  s.rng = Rng(rng.NextU64());
  return s;
}

MatchState ResetScenario(const FieldConfig& config, const ScenarioSpec& spec, Rng& rng) {
  ValidateScenario(config, spec);
  MatchState s = ResetMatch(config, rng);
  s.scenario_active = true;
  s.steps_total = spec.max_steps;
  s.mode = spec.mode;
  const bool offense_home = rng.Bernoulli(0.5);
  const Team offense = offense_home ? Team::kHome : Team::kAway;
  const Team defense = Opponent(offense);
  // The spec frame has the offense attacking +x; mirror for the away offense.
  auto place = [&](int raw_x, int raw_y) {
    return std::pair<int, int>{offense_home ? raw_x : config.width - 1 - raw_x, raw_y};
  };
  auto sample_rect = [&](const Rect& r) {
    const int x = r.x0 + rng.UniformInt(r.x1 - r.x0 + 1);
    const int y = r.y0 + rng.UniformInt(r.y1 - r.y0 + 1);
    return place(x, y);
  };
  // Everyone defaults to a uniform cell, then region players override.
  for (auto& p : s.players) {
    if (p.is_keeper) continue;
    p.x = rng.UniformInt(config.width);
    p.y = rng.UniformInt(config.height);
  }
  const int off_begin = TeamBlockBegin(config, offense);
  const int def_begin = TeamBlockBegin(config, defense);
  const int n_off = std::min(spec.offense_count, config.team_size);
  const int n_def = std::min(spec.defense_count, config.team_size);
  for (int i = 0; i < n_off; ++i) {
    auto [x, y] = sample_rect(spec.offense_region);
    s.players[off_begin + i].x = x;
    s.players[off_begin + i].y = y;
  }
  for (int i = 0; i < n_def; ++i) {
    auto [x, y] = sample_rect(spec.defense_region);
    s.players[def_begin + i].x = x;
    s.players[def_begin + i].y = y;
  }
  auto [bx, by] = sample_rect(spec.ball_region);
  DropBall(s, bx, by);
  s.ball.last_owner_team = offense;
  s.rng = Rng(rng.NextU64());
  return s;
}

std::vector<uint8_t> LegalActionMask(const MatchState& s, int player) {
  const auto& c = s.config;
  const auto& p = s.players[player];
  std::vector<uint8_t> mask(ActionCount(c), 1);
  const bool owner = s.ball.owned && s.ball.owner == player;
  const bool far = Cheb(p.x, p.y, BallX(s), BallY(s)) > c.far_threshold;
  const bool can_kick = owner || (!s.ball.owned && !far);
  mask[kShortPass] = can_kick;
  mask[kLongPass] = can_kick;
  mask[kShot] = can_kick && InOpponentHalf(c, p.team, p.x);
  const bool opponent_controls =
      s.ball.owned && s.players[s.ball.owner].team != p.team;
  mask[kSlide] = !far || opponent_controls;
  if (c.sticky_actions) {
    mask[kSprint] = !p.sprinting;
    mask[kReleaseSprint] = p.sprinting;
    mask[kDribble] = !p.dribbling;
    mask[kReleaseDribble] = p.dribbling;
  }
  return mask;
}

StepResult Step(MatchState& s, std::span<const int> joint_actions) {
  const auto& c = s.config;
  const auto controlled = ControlledIndices(s);
  if (joint_actions.size() != controlled.size()) {
    throw std::invalid_argument("joint action count does not match controlled players");
  }
  StepResult result;
  const int n_players = static_cast<int>(s.players.size());
  std::vector<int> action(n_players, kIdle);
  for (size_t i = 0; i < controlled.size(); ++i) {
    const int a = joint_actions[i];
    if (a < 0 || a >= ActionCount(c)) {
      throw std::invalid_argument("action index out of range");
    }
    action[controlled[i]] = a;
  }
  // Scripted keepers pick their own (always legal) actions.
  if (c.scripted_keepers) {
    for (const Team t : {Team::kHome, Team::kAway}) {
      const int k = KeeperIndex(s, t);
      action[k] = KeeperAction(s, k);
    }
  }
  // Degrade mask-illegal actions to idle.
  for (int idx : controlled) {
    if (action[idx] == kIdle) continue;
    const auto mask = LegalActionMask(s, idx);
    if (!mask[action[idx]]) {
      action[idx] = kIdle;
      result.degraded_actions += 1;
    }
  }
  // Sticky toggles.
  if (c.sticky_actions) {
    for (int i = 0; i < n_players; ++i) {
      switch (action[i]) {
        case kSprint: s.players[i].sprinting = true; break;
        case kReleaseSprint: s.players[i].sprinting = false; break;
        case kDribble: s.players[i].dribbling = true; break;
        case kReleaseDribble: s.players[i].dribbling = false; break;
        default: break;
      }
    }
  }
  const auto order = FairnessOrder(s);
  // Ball actions: the first eligible actor resolves; later ball actions this
  // step fall through silently if the ball situation changed.
  bool goal_scored = false;
  for (int idx : order) {
    const int a = action[idx];
    if (goal_scored) break;
    if (a == kShot || a == kShortPass || a == kLongPass) {
      const bool owner = s.ball.owned && s.ball.owner == idx;
      const bool near_free =
          !s.ball.owned &&
          Cheb(s.players[idx].x, s.players[idx].y, BallX(s), BallY(s)) <= c.far_threshold;
      if (!owner && !near_free) continue;
      if (a == kShot) {
        ResolveShot(s, idx, result.events, goal_scored);
      } else {
        ResolvePass(s, idx, a == kLongPass, result.events);
      }
    } else if (a == kSlide) {
      ResolveSlide(s, idx, result.events);
    }
  }
  if (!goal_scored) {
    // Movement.
    for (int idx : order) {
      if (IsMove(action[idx])) MovePlayer(s, idx, action[idx]);
    }
    // Keepers without explicit move actions hold their line via KeeperAction,
    // which already returned moves; nothing extra here.
    // Tackle contest: first opponent sharing the carrier's cell gets one try.
    if (s.ball.owned) {
      const int carrier = s.ball.owner;
      const Team ct = s.players[carrier].team;
      for (int idx : order) {
        if (s.players[idx].team == ct) continue;
        if (s.players[idx].x == s.players[carrier].x &&
            s.players[idx].y == s.players[carrier].y) {
          const double pr = c.tackle_prob * (s.players[carrier].dribbling ? 0.5 : 1.0);
          if (s.rng.Bernoulli(pr)) GiveBall(s, idx, result.events);
          break;
        }
      }
    }
    // Loose-ball pickup.
    if (!s.ball.owned) {
      for (int idx : order) {
        if (s.players[idx].x == s.ball.x && s.players[idx].y == s.ball.y) {
          GiveBall(s, idx, result.events);
          break;
        }
      }
    }
  }
  if (s.ball.owned) {
    result.events.push_back({RewardEvent::Kind::kHoldBall,
                             s.players[s.ball.owner].team, s.ball.owner, 0, false});
  }
  if (s.mode == GameMode::kKickoff && !goal_scored) s.mode = GameMode::kOpenPlay;
  s.steps_elapsed += 1;
  result.possession =
      s.ball.owned ? std::optional<Team>(s.players[s.ball.owner].team) : std::nullopt;
  const bool out_of_steps = s.steps_elapsed >= s.steps_total;
  if (out_of_steps || (s.scenario_active && goal_scored)) {
    result.done = true;
    const int diff = s.score[0] - s.score[1];
    if (diff != 0) {
      const Team winner = diff > 0 ? Team::kHome : Team::kAway;
      result.events.push_back({RewardEvent::Kind::kWin, winner, -1, diff, false});
    }
  }
  return result;
}

int ObservationDim(const FieldConfig& c) {
  const int ppt = PlayersPerTeam(c);
  return 7 + 8 + (ppt - 1) * 5 + 3 + ppt * 5 + 3 + ActionCount(c) + 7 + 2 + 2 * ppt;
}

namespace {

struct Frame {
  const MatchState* s;
  Team team;  // frame owner: attack direction mapped to +x

  double NormX(int x) const {
    const int fx = team == Team::kHome ? x : s->config.width - 1 - x;
    return 2.0 * fx / (s->config.width - 1) - 1.0;
  }
  double NormY(int y) const { return 2.0 * y / (s->config.height - 1) - 1.0; }
  double Dx(int dx) const { return team == Team::kHome ? dx : -dx; }
  double RelX(int from_x, int to_x) const {
    const double d = static_cast<double>(to_x - from_x) / (s->config.width - 1);
    return team == Team::kHome ? d : -d;
  }
  double RelY(int from_y, int to_y) const {
    return static_cast<double>(to_y - from_y) / (s->config.height - 1);
  }
  double Dist(int ax, int ay, int bx, int by) const {
    return static_cast<double>(Cheb(ax, ay, bx, by)) /
           (std::max(s->config.width, s->config.height) - 1);
  }
};

}  // namespace

std::vector<double> EncodeObservation(const MatchState& s, int player) {
  const auto& c = s.config;
  const auto& p = s.players[player];
  const Frame f{&s, p.team};
  std::vector<double> out;
  out.reserve(ObservationDim(c));
  // Controlling player.
  out.push_back(f.NormX(p.x));
  out.push_back(f.NormY(p.y));
  out.push_back(f.Dx(p.facing_dx));
  out.push_back(p.facing_dy);
  out.push_back(p.sprinting ? 1.0 : 0.0);
  out.push_back(p.dribbling ? 1.0 : 0.0);
  out.push_back(p.is_keeper ? 1.0 : 0.0);
  // Ball.
  const int bx = BallX(s), by = BallY(s);
  const bool owned_us = s.ball.owned && s.players[s.ball.owner].team == p.team;
  const bool owned_opp = s.ball.owned && !owned_us;
  out.push_back(f.NormX(bx));
  out.push_back(f.NormY(by));
  out.push_back(owned_us ? 1.0 : 0.0);
  out.push_back(owned_opp ? 1.0 : 0.0);
  out.push_back(s.ball.owned ? 0.0 : 1.0);
  out.push_back(f.Dist(p.x, p.y, bx, by));
  out.push_back(f.Dx(Sign(bx - p.x)));
  out.push_back(Sign(by - p.y));
  // Teammates, then the closest one.
  const int begin = TeamBlockBegin(c, p.team);
  int closest_mate = -1, closest_mate_d = 1 << 30;
  for (int i = begin; i < begin + PlayersPerTeam(c); ++i) {
    if (i == player) continue;
    const auto& q = s.players[i];
    out.push_back(f.NormX(q.x));
    out.push_back(f.NormY(q.y));
    out.push_back(f.RelX(p.x, q.x));
    out.push_back(f.RelY(p.y, q.y));
    out.push_back(q.is_keeper ? 1.0 : 0.0);
    const int d = Cheb(p.x, p.y, q.x, q.y);
    if (d < closest_mate_d) {
      closest_mate_d = d;
      closest_mate = i;
    }
  }
  out.push_back(f.RelX(p.x, s.players[closest_mate].x));
  out.push_back(f.RelY(p.y, s.players[closest_mate].y));
  out.push_back(f.Dist(p.x, p.y, s.players[closest_mate].x, s.players[closest_mate].y));
  // Opponents, then the closest one.
  const int obegin = TeamBlockBegin(c, Opponent(p.team));
  int closest_opp = -1, closest_opp_d = 1 << 30;
  for (int i = obegin; i < obegin + PlayersPerTeam(c); ++i) {
    const auto& q = s.players[i];
    out.push_back(f.NormX(q.x));
    out.push_back(f.NormY(q.y));
    out.push_back(f.RelX(p.x, q.x));
    out.push_back(f.RelY(p.y, q.y));
    out.push_back(q.is_keeper ? 1.0 : 0.0);
    const int d = Cheb(p.x, p.y, q.x, q.y);
    if (d < closest_opp_d) {
      closest_opp_d = d;
      closest_opp = i;
    }
  }
  out.push_back(f.RelX(p.x, s.players[closest_opp].x));
  out.push_back(f.RelY(p.y, s.players[closest_opp].y));
  out.push_back(f.Dist(p.x, p.y, s.players[closest_opp].x, s.players[closest_opp].y));
  // Available actions.
  const auto mask = LegalActionMask(s, player);
  for (uint8_t m : mask) out.push_back(m ? 1.0 : 0.0);
  // Match state.
  out.push_back(static_cast<double>(s.steps_total - s.steps_elapsed) / s.steps_total);
  const int raw_diff = p.team == Team::kHome ? s.score[0] - s.score[1]
                                             : s.score[1] - s.score[0];
  out.push_back(Clamp(raw_diff, -3, 3) / 3.0);
  for (int m = 0; m < kGameModeCount; ++m) {
    out.push_back(static_cast<int>(s.mode) == m ? 1.0 : 0.0);
  }
  // Sticky state.
  out.push_back(p.sprinting ? 1.0 : 0.0);
  out.push_back(p.dribbling ? 1.0 : 0.0);
  // Distances to ball: self, teammates by index, opponents by index.
  out.push_back(f.Dist(p.x, p.y, bx, by));
  for (int i = begin; i < begin + PlayersPerTeam(c); ++i) {
    if (i == player) continue;
    out.push_back(f.Dist(s.players[i].x, s.players[i].y, bx, by));
  }
  for (int i = obegin; i < obegin + PlayersPerTeam(c); ++i) {
    out.push_back(f.Dist(s.players[i].x, s.players[i].y, bx, by));
  }
  return out;
}

int GlobalObservationDim(const FieldConfig& c) {
  return 2 * PlayersPerTeam(c) * 5 + 5 + 7;
}

std::vector<double> EncodeGlobalObservation(const MatchState& s, Team perspective) {
  const auto& c = s.config;
  const Frame f{&s, perspective};
  std::vector<double> out;
  out.reserve(GlobalObservationDim(c));
  for (const Team t : {perspective, Opponent(perspective)}) {
    const int begin = TeamBlockBegin(c, t);
    for (int i = begin; i < begin + PlayersPerTeam(c); ++i) {
      const auto& q = s.players[i];
      out.push_back(f.NormX(q.x));
      out.push_back(f.NormY(q.y));
      out.push_back(f.Dx(q.facing_dx));
      out.push_back(q.facing_dy);
      out.push_back(q.is_keeper ? 1.0 : 0.0);
    }
  }
  const bool owned_us = s.ball.owned && s.players[s.ball.owner].team == perspective;
  out.push_back(f.NormX(BallX(s)));
  out.push_back(f.NormY(BallY(s)));
  out.push_back(owned_us ? 1.0 : 0.0);
  out.push_back(s.ball.owned && !owned_us ? 1.0 : 0.0);
  out.push_back(s.ball.owned ? 0.0 : 1.0);
  out.push_back(static_cast<double>(s.steps_total - s.steps_elapsed) / s.steps_total);
  const int raw_diff = perspective == Team::kHome ? s.score[0] - s.score[1]
                                                  : s.score[1] - s.score[0];
  out.push_back(Clamp(raw_diff, -3, 3) / 3.0);
  for (int m = 0; m < kGameModeCount; ++m) {
    out.push_back(static_cast<int>(s.mode) == m ? 1.0 : 0.0);
  }
  return out;
}

int ScriptedBaselineAction(const MatchState& s, int player) {
  const auto& c = s.config;
  const auto& p = s.players[player];
  const Team t = p.team;
  const int bx = BallX(s), by = BallY(s);
  const bool mine = s.ball.owned && s.ball.owner == player;
  if (mine) {
    const Team defending = Opponent(t);
    const int gx = GoalLineX(c, defending);
    const int gy = Clamp(p.y, GoalTop(c), GoalTop(c) + c.goal_height - 1);
    if (Cheb(p.x, p.y, gx, gy) <= 2 && InOpponentHalf(c, t, p.x)) return kShot;
    // Pass under pressure when a teammate is in short range.
    const int obegin = TeamBlockBegin(c, Opponent(t));
    bool pressured = false;
    for (int i = obegin; i < obegin + PlayersPerTeam(c); ++i) {
      if (Cheb(p.x, p.y, s.players[i].x, s.players[i].y) <= 1) {
        pressured = true;
        break;
      }
    }
    if (pressured) {
      const int begin = TeamBlockBegin(c, t);
      for (int i = begin; i < begin + PlayersPerTeam(c); ++i) {
        if (i == player) continue;
        const int d = Cheb(p.x, p.y, s.players[i].x, s.players[i].y);
        if (d > 0 && d <= c.short_pass_range) return kShortPass;
      }
    }
    const int a = MoveToward(gx - p.x, gy - p.y);
    return a == kIdle ? kShot : a;
  }
  const bool team_has_ball = s.ball.owned && s.players[s.ball.owner].team == t;
  if (team_has_ball) {
    // Support run toward the opponent goal on the current lane.
    const int gx = GoalLineX(c, Opponent(t));
    return MoveToward(gx - p.x, 0);
  }
  if (s.ball.owned) {
    const auto& carrier = s.players[s.ball.owner];
    if (Cheb(p.x, p.y, carrier.x, carrier.y) <= 1) return kSlide;
  }
  if (p.x == bx && p.y == by) return kIdle;
  return MoveToward(bx - p.x, by - p.y);
}

ObservationStacker::ObservationStacker(int base_dim, int history_depth)
    : base_dim_(base_dim), history_depth_(history_depth) {}

void ObservationStacker::Reset() { history_.clear(); }

std::vector<double> ObservationStacker::Push(std::span<const double> base) {
  if (static_cast<int>(base.size()) != base_dim_) {
    throw std::invalid_argument("observation stacker dimension mismatch");
  }
  history_.insert(history_.begin(), std::vector<double>(base.begin(), base.end()));
  if (static_cast<int>(history_.size()) > history_depth_ + 1) history_.pop_back();
  std::vector<double> out(stacked_dim(), 0.0);
  for (size_t k = 0; k < history_.size(); ++k) {
    std::copy(history_[k].begin(), history_[k].end(), out.begin() + k * base_dim_);
  }
  return out;
}

int ClippedGoalDifference(int diff, const RewardConfig& config) {
  if (!config.goal_clip) return diff;
  return Clamp(diff, static_cast<int>(config.goal_clip_lo),
               static_cast<int>(config.goal_clip_hi));
}

std::vector<double> ComputeRewards(std::span<const RewardEvent> events,
                                   const RewardConfig& config, Team perspective,
                                   const MatchState& state) {
  const auto controlled = ControlledIndices(state, perspective);
  std::vector<double> rewards(controlled.size(), 0.0);
  auto slot_of = [&](int player) -> int {
    for (size_t i = 0; i < controlled.size(); ++i) {
      if (controlled[i] == player) return static_cast<int>(i);
    }
    return -1;
  };
  auto broadcast = [&](double v) {
    for (auto& r : rewards) r += v;
  };
  auto individual = [&](int player, double v) {
    const int slot = slot_of(player);
    if (slot >= 0) rewards[slot] += v;
  };
  for (const auto& e : events) {
    const bool ours = e.team == perspective;
    switch (e.kind) {
      case RewardEvent::Kind::kGoal: {
        if (!config.enable_goal) break;
        if (config.goal_clip) {
          const int delta = e.team == Team::kHome ? 1 : -1;
          const int before = ClippedGoalDifference(e.diff_after - delta, config);
          const int after = ClippedGoalDifference(e.diff_after, config);
          if (before == after) break;  // difference already saturated
        }
        broadcast(ours ? config.goal : -config.goal);
        break;
      }
      case RewardEvent::Kind::kWin:
        if (config.enable_win) broadcast(ours ? config.win : -config.win);
        break;
      case RewardEvent::Kind::kPossessionChange:
        if (config.enable_possession) {
          broadcast(ours ? config.possession : -config.possession);
        }
        break;
      case RewardEvent::Kind::kOutOfBounds:
        if (config.enable_out_of_bounds && ours) individual(e.player, config.out_of_bounds);
        break;
      case RewardEvent::Kind::kHoldBall:
        if (config.enable_hold_ball && ours) individual(e.player, config.hold_ball);
        break;
      case RewardEvent::Kind::kSecondaryAttack:
        if (config.enable_secondary_attack && ours) {
          individual(e.player, config.secondary_attack);
        }
        break;
      case RewardEvent::Kind::kSuccessfulSlide:
        if (config.enable_successful_slide && ours) {
          individual(e.player, config.successful_slide);
        }
        break;
      default:
        break;  // counter-only events carry no reward
    }
  }
  return rewards;
}

const char* ActionName(int action) {
  static const char* kNames[kStickyActionCount] = {
      "idle",           "move_left",       "move_top_left",     "move_top",
      "move_top_right", "move_right",      "move_bottom_right", "move_bottom",
      "move_bottom_left", "short_pass",    "long_pass",         "shot",
      "slide",          "sprint",          "release_sprint",    "dribble",
      "release_dribble",
  };
  if (action < 0 || action >= kStickyActionCount) return "?";
  return kNames[action];
}

const char* EventName(RewardEvent::Kind kind) {
  switch (kind) {
    case RewardEvent::Kind::kGoal: return "goal";
    case RewardEvent::Kind::kWin: return "win";
    case RewardEvent::Kind::kPossessionChange: return "possession_change";
    case RewardEvent::Kind::kOutOfBounds: return "out_of_bounds";
    case RewardEvent::Kind::kHoldBall: return "hold_ball";
    case RewardEvent::Kind::kSecondaryAttack: return "secondary_attack";
    case RewardEvent::Kind::kSuccessfulSlide: return "successful_slide";
    case RewardEvent::Kind::kShotTaken: return "shot_taken";
    case RewardEvent::Kind::kShortPassTaken: return "short_pass_taken";
    case RewardEvent::Kind::kLongPassTaken: return "long_pass_taken";
    case RewardEvent::Kind::kSlideTaken: return "slide_taken";
    case RewardEvent::Kind::kPassCompleted: return "pass_completed";
  }
  return "?";
}

struct ReplayWriter::Impl {
  std::ofstream os;
};

ReplayWriter::ReplayWriter(const std::string& path) : impl_(new Impl) {
  impl_->os.open(path, std::ios::trunc);
  if (!impl_->os) throw std::runtime_error("cannot open replay file: " + path);
}

ReplayWriter::~ReplayWriter() { delete impl_; }

void ReplayWriter::WriteStep(const MatchState& state, std::span<const int> joint_actions,
                             const StepResult& result) {
  nlohmann::json j;
  j["step"] = state.steps_elapsed;
  auto players = nlohmann::json::array();
  for (const auto& p : state.players) {
    players.push_back({p.x, p.y, static_cast<int>(p.team), p.is_keeper ? 1 : 0});
  }
  j["players"] = std::move(players);
  j["ball"] = {BallX(state), BallY(state), state.ball.owned ? 1 : 0, state.ball.owner};
  auto actions = nlohmann::json::array();
  for (int a : joint_actions) actions.push_back(ActionName(a));
  j["actions"] = std::move(actions);
  auto events = nlohmann::json::array();
  for (const auto& e : result.events) {
    events.push_back({{"kind", EventName(e.kind)},
                      {"team", static_cast<int>(e.team)},
                      {"player", e.player}});
  }
  j["events"] = std::move(events);
  j["score"] = {state.score[0], state.score[1]};
  impl_->os << j.dump() << "\n";
}

}  // namespace gridball::env
