#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridball/rng.hpp"

// Two-team gridworld football. Discrete cells, 8-direction movement, instant
// pass/shot resolution along rasterized lanes, scripted keepers, structured
// reward events, legal-action masks, scenario resets, and per-player feature
// encoding. All transitions are deterministic given the per-episode rng
// stream embedded in the state.

namespace gridball::env {

enum class Team : uint8_t { kHome = 0, kAway = 1 };

inline Team Opponent(Team t) { return t == Team::kHome ? Team::kAway : Team::kHome; }

enum class GameMode : uint8_t {
  kOpenPlay = 0,
  kKickoff,
  kCorner,
  kFreeKick,
  kPenaltyBoxAttack,
};
inline constexpr int kGameModeCount = 5;

// Action indices are frozen per config; the policy head width equals
// ActionCount(config). Sticky actions exist only when config.sticky_actions.
enum Action : int {
  kIdle = 0,
  kMoveLeft = 1,
  kMoveTopLeft = 2,
  kMoveTop = 3,
  kMoveTopRight = 4,
  kMoveRight = 5,
  kMoveBottomRight = 6,
  kMoveBottom = 7,
  kMoveBottomLeft = 8,
  kShortPass = 9,
  kLongPass = 10,
  kShot = 11,
  kSlide = 12,
  kSprint = 13,
  kReleaseSprint = 14,
  kDribble = 15,
  kReleaseDribble = 16,
};

inline constexpr int kBaseActionCount = 13;
inline constexpr int kStickyActionCount = 17;

struct FieldConfig {
  int width = 24;
  int height = 16;
  int team_size = 2;  // outfielders per team; each team adds one keeper
  bool sticky_actions = false;
  bool scripted_keepers = true;
  int match_steps = 400;
  int goal_height = 4;
  int far_threshold = 1;  // "far from ball" distance for the action mask
  int short_pass_range = 6;
  int long_pass_range = 12;
  int long_pass_flyover = 3;  // lane prefix a long pass sails over
  int shot_range = 6;
  double tackle_prob = 0.55;
  double slide_prob = 0.6;
  int secondary_attack_window = 16;

  bool operator==(const FieldConfig&) const = default;
};

int ActionCount(const FieldConfig& config);

struct PlayerState {
  int x = 0;
  int y = 0;
  int facing_dx = 1;
  int facing_dy = 0;
  bool sprinting = false;
  bool dribbling = false;
  bool is_keeper = false;
  Team team = Team::kHome;
};

struct BallState {
  int x = 0;
  int y = 0;
  bool owned = false;
  int owner = -1;  // global player index when owned
  Team last_owner_team = Team::kHome;
};

struct RewardEvent {
  enum class Kind : uint8_t {
    kGoal = 0,
    kWin,
    kPossessionChange,
    kOutOfBounds,
    kHoldBall,
    kSecondaryAttack,
    kSuccessfulSlide,
    // Counter-only events (no reward value attached).
    kShotTaken,
    kShortPassTaken,
    kLongPassTaken,
    kSlideTaken,
    kPassCompleted,
  };
  Kind kind;
  Team team;
  int player = -1;     // global player index, -1 for team-level events
  int diff_after = 0;  // kGoal/kWin: home minus away score after the event
  bool in_box = false; // kShotTaken: shooter inside the penalty box
};

struct MatchState {
  FieldConfig config;
  std::vector<PlayerState> players;  // home outfielders, home keeper, away outfielders, away keeper
  BallState ball;
  int score[2] = {0, 0};
  int steps_elapsed = 0;
  int steps_total = 0;
  GameMode mode = GameMode::kKickoff;
  bool scenario_active = false;
  // Completed-pass tracking per team for the secondary-attack event.
  int last_pass_step[2] = {-1000, -1000};
  int last_pass_receiver[2] = {-1, -1};
  Rng rng{0};
};

struct StepResult {
  std::vector<RewardEvent> events;
  bool done = false;
  std::optional<Team> possession;  // ball-owning team after the step
  int degraded_actions = 0;        // mask-illegal actions downgraded to idle
};

// --- layout helpers -------------------------------------------------------

inline int PlayersPerTeam(const FieldConfig& c) { return c.team_size + 1; }
int TeamBlockBegin(const FieldConfig& c, Team t);
Team TeamOf(const MatchState& s, int player);
bool IsKeeperIndex(const FieldConfig& c, int player);
// Global indices of externally controlled players, home block then away block.
std::vector<int> ControlledIndices(const MatchState& s);
std::vector<int> ControlledIndices(const MatchState& s, Team t);

struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive
  bool Contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  int CellCount() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

// Scenario geometry is declared in the offense-attacks-right frame; the reset
// mirrors everything when the offense side lands on the away goal.
struct ScenarioSpec {
  std::string name;
  Rect ball_region;
  Rect offense_region;
  Rect defense_region;
  int offense_count = 1;
  int defense_count = 1;
  int max_steps = 512;
  GameMode mode = GameMode::kOpenPlay;
};

// Throws std::invalid_argument on empty/out-of-field regions, regions touching
// the defended goal mouth, or max_steps outside (0, 512].
void ValidateScenario(const FieldConfig& config, const ScenarioSpec& spec);
std::vector<ScenarioSpec> BuiltinScenarios(const FieldConfig& config);

// --- lifecycle ------------------------------------------------------------

MatchState ResetMatch(const FieldConfig& config, Rng& rng);
MatchState ResetScenario(const FieldConfig& config, const ScenarioSpec& spec, Rng& rng);

// Advances one step. joint_actions follows ControlledIndices(state) order.
StepResult Step(MatchState& state, std::span<const int> joint_actions);

// --- per-player queries ----------------------------------------------------

std::vector<uint8_t> LegalActionMask(const MatchState& state, int player);
int ObservationDim(const FieldConfig& config);
std::vector<double> EncodeObservation(const MatchState& state, int player);
int GlobalObservationDim(const FieldConfig& config);
std::vector<double> EncodeGlobalObservation(const MatchState& state, Team perspective);
// Deterministic rule policy: chase the ball, pass under pressure, shoot near
// goal. Always returns a mask-legal action.
int ScriptedBaselineAction(const MatchState& state, int player);

// Stacks the latest k+1 base observations (zero-padded after reset).
class ObservationStacker {
 public:
  ObservationStacker(int base_dim, int history_depth);
  void Reset();
  // Pushes the newest base observation and returns the stacked vector,
  // newest block first.
  std::vector<double> Push(std::span<const double> base);
  int stacked_dim() const { return base_dim_ * (history_depth_ + 1); }

 private:
  int base_dim_;
  int history_depth_;
  std::vector<std::vector<double>> history_;
};

// --- rewards ---------------------------------------------------------------

struct RewardConfig {
  double goal = 1.0;
  double win = 2.0;
  double possession = 0.2;
  double out_of_bounds = -0.001;
  double hold_ball = 0.0003;
  double secondary_attack = 0.1;
  double successful_slide = 0.1;
  bool enable_goal = true;
  bool enable_win = true;
  bool enable_possession = true;
  bool enable_out_of_bounds = true;
  bool enable_hold_ball = false;
  bool enable_secondary_attack = false;
  bool enable_successful_slide = false;
  bool goal_clip = false;
  double goal_clip_lo = -3.0;
  double goal_clip_hi = 3.0;

  bool operator==(const RewardConfig&) const = default;
};

int ClippedGoalDifference(int diff, const RewardConfig& config);

// Per-player rewards for the controlled players of `perspective`, in
// ControlledIndices(state, perspective) order. Team rewards broadcast to the
// whole team; individual rewards go only to the completing player.
std::vector<double> ComputeRewards(std::span<const RewardEvent> events,
                                   const RewardConfig& config, Team perspective,
                                   const MatchState& state);

// --- replay export ----------------------------------------------------------

// Line-delimited records: one JSON object per step with positions, ball,
// actions, events, and score.
class ReplayWriter {
 public:
  explicit ReplayWriter(const std::string& path);
  ~ReplayWriter();
  void WriteStep(const MatchState& state, std::span<const int> joint_actions,
                 const StepResult& result);

 private:
  struct Impl;
  Impl* impl_;
};

const char* ActionName(int action);
const char* EventName(RewardEvent::Kind kind);

}  // namespace gridball::env
