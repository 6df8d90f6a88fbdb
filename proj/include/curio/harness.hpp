#pragma once

#include <array>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "curio/agent.hpp"
#include "curio/env.hpp"
#include "curio/fm.hpp"
#include "curio/lang.hpp"
#include "curio/replay.hpp"

namespace curio::harness {

struct RunConfig {
  std::string curiosity = "all";  // none | sensorimotor | all
  std::string scale = "full";     // full | middle | small | smoke
  std::string model = "full";     // full | tiny | micro
  uint64_t seed = 0;
  int epochs = 2000;
  int eval_every = 50;
  int rolling_window = 10;
  int episodes_per_sentence = 1;
  int batch_size = replay::kDefaultBatch;
  double lr = 3e-4;
  double agent_lr = 1e-3;
  double alpha = 0.05;
  double gamma = 0.99;
  double tau = 0.005;
  bool curiosity_next_step = false;  // reward with the next step's KLD instead
  bool dynamic_alpha = false;        // optional temperature tuning toward target_entropy
  double target_entropy = -4.0;
  double alpha_lr = 1e-2;
  std::string out_dir = "runs/default";

  fe::IntrinsicConfig intrinsic() const;
  fm::ModelConfig model_config() const;
  lang::ScaleConfig scale_config() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

// Policy interface for episode rollouts. Scripted oracles may inspect the
// arena state; the neural policy only reads the observation.
class EpisodePolicy {
 public:
  virtual ~EpisodePolicy() = default;
  virtual void begin_episode(const lang::Sentence& command) = 0;
  virtual std::array<double, 4> act(const env::ObservationBundle& obs,
                                    const env::ArenaState& state) = 0;
};

class RandomPolicy : public EpisodePolicy {
 public:
  explicit RandomPolicy(uint64_t seed) : rng_(seed) {}
  void begin_episode(const lang::Sentence&) override {}
  std::array<double, 4> act(const env::ObservationBundle&, const env::ArenaState&) override;

 private:
  std::mt19937_64 rng_;
};

// Forward model + agent acting as one policy.
class NeuralPolicy : public EpisodePolicy {
 public:
  NeuralPolicy(fm::ForwardModel& model, agent::Actor& actor, bool stochastic,
               torch::Generator* gen);
  void begin_episode(const lang::Sentence& command) override;
  std::array<double, 4> act(const env::ObservationBundle& obs, const env::ArenaState& state) override;

 private:
  fm::ForwardModel& model_;
  agent::Actor& actor_;
  bool stochastic_;
  torch::Generator* gen_;
  fm::StepState state_;
};

// Success rates grouped by the commanded action category.
struct EvalResult {
  std::array<int, env::kNumActions> successes{};
  std::array<int, env::kNumActions> attempts{};

  int total_successes() const;
  int total_attempts() const;
  // Episode-weighted rate over every attempt.
  double micro_rate() const;
  // Equal-weight mean over the categories that were attempted; pairs cleanly
  // across splits with different category mixes.
  double overall_rate() const;
  double category_rate(int category) const;  // NaN when the category is absent
};

// Runs episodes_per_sentence episodes per sentence; success means the
// commanded goal was achieved within the 30-step budget. The episode_seeds
// variant reuses the same arena placements for every sentence (common random
// numbers), so learned/unlearned comparisons share their luck.
EvalResult evaluate(EpisodePolicy& policy, const std::vector<lang::Sentence>& sentences,
                    int episodes_per_sentence, const lang::ScaleConfig& scale,
                    std::mt19937_64& seed_rng);
EvalResult evaluate(EpisodePolicy& policy, const std::vector<lang::Sentence>& sentences,
                    const std::vector<uint64_t>& episode_seeds, const lang::ScaleConfig& scale);

// Rolls one environment episode and returns it in replay form.
replay::Episode roll_episode(EpisodePolicy& policy, const lang::Sentence& command,
                             const lang::ScaleConfig& scale, uint64_t env_seed);

// The trainable system: forward model with optimizer plus the SAC agent.
struct System {
  explicit System(const RunConfig& config);

  RunConfig config;
  fm::ForwardModelTrainer fm_trainer;
  agent::SacAgent agent;
};

void save_system(const System& system, const std::string& path, int epoch);
std::unique_ptr<System> load_system(const std::string& path);

struct RunSummary {
  std::string status = "ok";  // ok | aborted_non_finite_loss
  std::string out_dir;
  std::string metrics_path;
  std::string train_log_path;
  std::string manifest_path;
  std::string checkpoint_final;
  std::string checkpoint_mid;
  int eval_rows = 0;
};

// The full training schedule: per epoch one collected episode, one forward
// model / critic / actor update and a Polyak step; periodic evaluation,
// metrics and checkpoints under config.out_dir.
RunSummary run_training(const RunConfig& config);

// Uniform-random-policy success rate over the given sentences.
double measure_random_baseline(const std::vector<lang::Sentence>& sentences,
                               const lang::ScaleConfig& scale, int episodes, uint64_t seed);

// Per-epoch mean and normal-approximation 99% confidence intervals across
// seed runs, plus rolling means; also emits an SVG line chart per metric.
struct AggregateResult {
  std::string csv_path;
  std::vector<std::string> chart_paths;
};
AggregateResult aggregate_seeds(const std::vector<std::string>& run_dirs,
                                const std::string& out_dir, int rolling_window = 10);

// Minimal CSV support for the metrics files (numeric cells; NaN allowed).
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const;  // -1 when absent
};
CsvTable read_csv(const std::string& path);

}  // namespace curio::harness
