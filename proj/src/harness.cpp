#include "curio/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curio/checkpoint.hpp"

namespace curio::harness {

namespace fs = std::filesystem;

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t mix(uint64_t seed, uint64_t salt) { return splitmix64(seed ^ splitmix64(salt)); }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string category_slug(int category) {
  std::string name = lang::token_names()[static_cast<size_t>(lang::kVerbBase + category)];
  for (auto& c : name)
    if (c == ' ') c = '_';
  return name;
}

double nan_mean(const std::deque<double>& window) {
  double sum = 0.0;
  int n = 0;
  for (double v : window)
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

fe::IntrinsicConfig RunConfig::intrinsic() const {
  auto c = fe::IntrinsicConfig::preset(curiosity);
  c.alpha = alpha;
  c.gamma = gamma;
  c.tau = tau;
  return c;
}

fm::ModelConfig RunConfig::model_config() const {
  auto c = fm::ModelConfig::preset_config(model);
  c.lr = lr;
  c.agent_lr = agent_lr;
  return c;
}

lang::ScaleConfig RunConfig::scale_config() const { return lang::ScaleConfig::preset(scale); }

nlohmann::json RunConfig::to_json() const {
  return {{"curiosity", curiosity},
          {"scale", scale},
          {"model", model},
          {"seed", seed},
          {"epochs", epochs},
          {"eval_every", eval_every},
          {"rolling_window", rolling_window},
          {"episodes_per_sentence", episodes_per_sentence},
          {"batch_size", batch_size},
          {"lr", lr},
          {"agent_lr", agent_lr},
          {"alpha", alpha},
          {"gamma", gamma},
          {"tau", tau},
          {"curiosity_next_step", curiosity_next_step},
          {"dynamic_alpha", dynamic_alpha},
          {"target_entropy", target_entropy},
          {"alpha_lr", alpha_lr},
          {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.curiosity = j.value("curiosity", c.curiosity);
  c.scale = j.value("scale", c.scale);
  c.model = j.value("model", c.model);
  c.seed = j.value("seed", c.seed);
  c.epochs = j.value("epochs", c.epochs);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.rolling_window = j.value("rolling_window", c.rolling_window);
  c.episodes_per_sentence = j.value("episodes_per_sentence", c.episodes_per_sentence);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.agent_lr = j.value("agent_lr", c.agent_lr);
  c.alpha = j.value("alpha", c.alpha);
  c.gamma = j.value("gamma", c.gamma);
  c.tau = j.value("tau", c.tau);
  c.curiosity_next_step = j.value("curiosity_next_step", c.curiosity_next_step);
  c.dynamic_alpha = j.value("dynamic_alpha", c.dynamic_alpha);
  c.target_entropy = j.value("target_entropy", c.target_entropy);
  c.alpha_lr = j.value("alpha_lr", c.alpha_lr);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

std::array<double, 4> RandomPolicy::act(const env::ObservationBundle&, const env::ArenaState&) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  return {dist(rng_), dist(rng_), dist(rng_), dist(rng_)};
}

NeuralPolicy::NeuralPolicy(fm::ForwardModel& model, agent::Actor& actor, bool stochastic,
                           torch::Generator* gen)
    : model_(model), actor_(actor), stochastic_(stochastic), gen_(gen) {
  state_ = model_->initial_state();
}

void NeuralPolicy::begin_episode(const lang::Sentence&) { state_ = model_->initial_state(); }

std::array<double, 4> NeuralPolicy::act(const env::ObservationBundle& obs, const env::ArenaState&) {
  torch::NoGradGuard no_grad;
  const auto tensors = fm::tensorize(obs, model_->config());
  state_ = model_->observe(state_, tensors, stochastic_, gen_);
  torch::Tensor action;
  if (stochastic_ && gen_) {
    action = actor_->sample(state_.h, *gen_).action;
  } else {
    action = actor_->deterministic(state_.h);
  }
  state_.prev_action = action.reshape({1, 4});
  const auto flat = action.reshape({4}).contiguous();
  auto acc = flat.accessor<double, 1>();
  return {acc[0], acc[1], acc[2], acc[3]};
}

int EvalResult::total_successes() const {
  int n = 0;
  for (int v : successes) n += v;
  return n;
}

int EvalResult::total_attempts() const {
  int n = 0;
  for (int v : attempts) n += v;
  return n;
}

double EvalResult::micro_rate() const {
  const int n = total_attempts();
  return n > 0 ? static_cast<double>(total_successes()) / n : std::numeric_limits<double>::quiet_NaN();
}

double EvalResult::overall_rate() const {
  double sum = 0.0;
  int categories = 0;
  for (int c = 0; c < env::kNumActions; ++c) {
    if (attempts[static_cast<size_t>(c)] == 0) continue;
    sum += category_rate(c);
    ++categories;
  }
  return categories > 0 ? sum / categories : std::numeric_limits<double>::quiet_NaN();
}

double EvalResult::category_rate(int category) const {
  const int n = attempts[static_cast<size_t>(category)];
  return n > 0 ? static_cast<double>(successes[static_cast<size_t>(category)]) / n
               : std::numeric_limits<double>::quiet_NaN();
}

replay::Episode roll_episode(EpisodePolicy& policy, const lang::Sentence& command,
                             const lang::ScaleConfig& scale, uint64_t env_seed) {
  auto arena = env::Arena::reset(env_seed, command, scale);
  replay::Episode episode;
  episode.command = command;
  episode.observations.push_back(arena.observation());
  policy.begin_episode(command);
  while (!arena.state().done) {
    const auto action = policy.act(episode.observations.back(), arena.state());
    const auto result = arena.step(env::MotorCommand::clamped(action));
    episode.observations.push_back(result.observation);
    episode.actions.push_back(action);
    episode.rewards.push_back(result.reward);
    episode.dones.push_back(result.done ? 1.0 : 0.0);
  }
  return episode;
}

EvalResult evaluate(EpisodePolicy& policy, const std::vector<lang::Sentence>& sentences,
                    int episodes_per_sentence, const lang::ScaleConfig& scale,
                    std::mt19937_64& seed_rng) {
  EvalResult result;
  for (const auto& sentence : sentences) {
    const int category = sentence.verb - lang::kVerbBase;
    for (int e = 0; e < episodes_per_sentence; ++e) {
      const auto episode = roll_episode(policy, sentence, scale, seed_rng());
      result.attempts[static_cast<size_t>(category)]++;
      double reward = 0.0;
      for (double r : episode.rewards) reward += r;
      if (reward > 0.0) result.successes[static_cast<size_t>(category)]++;
    }
  }
  return result;
}

EvalResult evaluate(EpisodePolicy& policy, const std::vector<lang::Sentence>& sentences,
                    const std::vector<uint64_t>& episode_seeds, const lang::ScaleConfig& scale) {
  EvalResult result;
  for (const auto& sentence : sentences) {
    const int category = sentence.verb - lang::kVerbBase;
    for (uint64_t episode_seed : episode_seeds) {
      const auto episode = roll_episode(policy, sentence, scale, episode_seed);
      result.attempts[static_cast<size_t>(category)]++;
      double reward = 0.0;
      for (double r : episode.rewards) reward += r;
      if (reward > 0.0) result.successes[static_cast<size_t>(category)]++;
    }
  }
  return result;
}

namespace {
// Parameter initialization draws from the global generator; pin it to the run
// seed right before the modules are built.
fm::ModelConfig seeded_model_config(const RunConfig& config) {
  torch::manual_seed(static_cast<uint64_t>(config.seed) ^ 0x10de1ull);
  return config.model_config();
}
}  // namespace

System::System(const RunConfig& run_config)
    : config(run_config),
      fm_trainer(seeded_model_config(run_config), run_config.intrinsic(),
                 run_config.curiosity_next_step),
      agent(run_config.model_config(), run_config.intrinsic()) {}

void save_system(const System& system, const std::string& path, int epoch) {
  checkpoint::Checkpoint ckpt;
  auto& sys = const_cast<System&>(system);
  checkpoint::collect(ckpt, "fm", *sys.fm_trainer.model());
  checkpoint::collect(ckpt, "actor", *sys.agent.actor());
  checkpoint::collect(ckpt, "q1", *sys.agent.q1());
  checkpoint::collect(ckpt, "q2", *sys.agent.q2());
  checkpoint::collect(ckpt, "q1_target", *sys.agent.q1_target());
  checkpoint::collect(ckpt, "q2_target", *sys.agent.q2_target());
  ckpt.meta = {{"config", system.config.to_json()}, {"epoch", epoch}};
  checkpoint::save(path, ckpt);
}

std::unique_ptr<System> load_system(const std::string& path) {
  const auto ckpt = checkpoint::load(path);
  auto config = RunConfig::from_json(ckpt.meta.at("config"));
  auto system = std::make_unique<System>(config);
  checkpoint::restore(ckpt, "fm", *system->fm_trainer.model());
  checkpoint::restore(ckpt, "actor", *system->agent.actor());
  checkpoint::restore(ckpt, "q1", *system->agent.q1());
  checkpoint::restore(ckpt, "q2", *system->agent.q2());
  checkpoint::restore(ckpt, "q1_target", *system->agent.q1_target());
  checkpoint::restore(ckpt, "q2_target", *system->agent.q2_target());
  return system;
}

namespace {

struct MetricsWriter {
  std::ofstream out;
  std::vector<int> categories;
  int window;
  std::map<std::string, std::deque<double>> history;

  MetricsWriter(const std::string& path, const lang::ScaleConfig& scale, int rolling_window)
      : out(path), window(rolling_window) {
    for (int c = 0; c < scale.verbs; ++c) categories.push_back(c);
    out << "epoch,learned_overall,unlearned_overall,rolling_learned_overall,rolling_unlearned_overall";
    for (int c : categories) {
      const auto slug = category_slug(c);
      out << ",learned_" << slug << ",unlearned_" << slug << ",rolling_learned_" << slug
          << ",rolling_unlearned_" << slug;
    }
    out << ",learned_micro,unlearned_micro\n";
    out.flush();
  }

  double rolled(const std::string& key, double value) {
    auto& h = history[key];
    h.push_back(value);
    while (static_cast<int>(h.size()) > window) h.pop_front();
    return nan_mean(h);
  }

  void write_row(int epoch, const EvalResult& learned, const EvalResult& unlearned) {
    const double lo = learned.overall_rate();
    const double uo = unlearned.overall_rate();
    out << epoch << "," << format_double(lo) << "," << format_double(uo) << ","
        << format_double(rolled("learned_overall", lo)) << ","
        << format_double(rolled("unlearned_overall", uo));
    for (int c : categories) {
      const auto slug = category_slug(c);
      const double lc = learned.category_rate(c);
      const double uc = unlearned.category_rate(c);
      out << "," << format_double(lc) << "," << format_double(uc) << ","
          << format_double(rolled("learned_" + slug, lc)) << ","
          << format_double(rolled("unlearned_" + slug, uc));
    }
    out << "," << format_double(learned.micro_rate()) << "," << format_double(unlearned.micro_rate())
        << "\n";
    out.flush();
  }
};

}  // namespace

RunSummary run_training(const RunConfig& config) {
  const auto start_time = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.out_dir = config.out_dir;
  fs::create_directories(config.out_dir);

  const auto scale = config.scale_config();
  const auto split = lang::generate_split(scale, config.seed);
  {
    std::ofstream split_out(config.out_dir + "/split.txt");
    lang::write_split(split, split_out);
  }

  System system(config);
  if (config.dynamic_alpha)
    system.agent.enable_dynamic_alpha(config.target_entropy, config.alpha_lr);
  replay::ReplayBuffer buffer;

  std::mt19937_64 command_rng(mix(config.seed, 0xC033A17D));
  std::mt19937_64 sample_rng(mix(config.seed, 0x5A3B1E00));
  auto policy_gen = at::detail::createCPUGenerator(mix(config.seed, 0xAC7031));
  uint64_t noise_counter = mix(config.seed, 0xF0F0F0);

  summary.train_log_path = config.out_dir + "/train_log.csv";
  summary.metrics_path = config.out_dir + "/metrics.csv";
  summary.manifest_path = config.out_dir + "/manifest.json";
  summary.checkpoint_final = config.out_dir + "/checkpoint_final.bin";
  summary.checkpoint_mid = config.out_dir + "/checkpoint_mid.bin";

  std::ofstream train_log(summary.train_log_path);
  train_log << "epoch,free_energy,curiosity_mean,entropy_mean,extrinsic_mean,critic_loss,actor_loss,"
               "episode_return,episode_length,alpha\n";
  MetricsWriter metrics(summary.metrics_path, scale, config.rolling_window);

  const int mid_epoch = std::max(1, config.epochs / 2);

  auto write_manifest = [&](const std::string& status) {
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start_time)
                             .count();
    nlohmann::json manifest = {
        {"config", config.to_json()},
        {"status", status},
        {"wall_time_seconds", static_cast<double>(elapsed) / 1000.0},
        {"train_sentences", split.train.size()},
        {"test_sentences", split.test.size()},
        {"eval_rows", summary.eval_rows},
        {"versions", {{"curiobot", "0.1.0"}, {"torch", TORCH_VERSION}}},
    };
    std::ofstream(summary.manifest_path) << manifest.dump(2) << "\n";
  };

  try {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const auto& sentence = split.train[command_rng() % split.train.size()];
      NeuralPolicy policy(system.fm_trainer.model(), system.agent.actor(), /*stochastic=*/true,
                          &policy_gen);
      auto episode = roll_episode(policy, sentence, scale, mix(config.seed, 0xE9150000ull + epoch));
      double episode_return = 0.0;
      for (double r : episode.rewards) episode_return += r;
      const int episode_length = episode.length();
      buffer.push(std::move(episode));

      const auto batch_episodes = buffer.sample(config.batch_size, sample_rng);
      const auto batch = fm::make_batch(batch_episodes, system.fm_trainer.model()->config());
      const auto fm_out = system.fm_trainer.train_step(batch, noise_counter++);
      const auto critic = system.agent.critic_update(fm_out.h, batch.actions, batch.rewards,
                                                     batch.dones, batch.mask, fm_out.curiosity,
                                                     noise_counter++);
      const auto actor = system.agent.actor_update(fm_out.h, batch.mask, noise_counter++);
      system.agent.alpha_update(actor.mean_entropy);
      system.agent.polyak_update();

      const double mask_sum = batch.mask.sum().item<double>();
      const double curiosity_mean =
          (fm_out.curiosity * batch.mask).sum().item<double>() / std::max(1.0, mask_sum);
      const double extrinsic_mean =
          (batch.rewards * batch.mask).sum().item<double>() / std::max(1.0, mask_sum);

      train_log << epoch << "," << format_double(fm_out.free_energy) << ","
                << format_double(curiosity_mean) << "," << format_double(actor.mean_entropy) << ","
                << format_double(extrinsic_mean) << "," << format_double(critic.q1 + critic.q2)
                << "," << format_double(actor.loss) << "," << format_double(episode_return) << ","
                << episode_length << "," << format_double(system.agent.alpha()) << "\n";
      train_log.flush();

      if (epoch + 1 == mid_epoch) save_system(system, summary.checkpoint_mid, epoch + 1);

      if ((epoch + 1) % config.eval_every == 0) {
        std::mt19937_64 eval_rng(mix(config.seed, 0xEA000000ull + static_cast<uint64_t>(epoch)));
        // Common random numbers: the same placements serve both splits so
        // luck cancels out of the learned/unlearned comparison.
        std::vector<uint64_t> episode_seeds;
        for (int e = 0; e < config.episodes_per_sentence; ++e) episode_seeds.push_back(eval_rng());
        NeuralPolicy det(system.fm_trainer.model(), system.agent.actor(), /*stochastic=*/false,
                         nullptr);
        const auto learned = evaluate(det, split.train, episode_seeds, scale);
        const auto unlearned = evaluate(det, split.test, episode_seeds, scale);
        metrics.write_row(epoch + 1, learned, unlearned);
        ++summary.eval_rows;
        save_system(system, config.out_dir + "/checkpoint_latest.bin", epoch + 1);
      }
    }
    save_system(system, summary.checkpoint_final, config.epochs);
    write_manifest("ok");
    summary.status = "ok";
  } catch (const fm::NonFiniteLoss& err) {
    save_system(system, config.out_dir + "/checkpoint_aborted.bin", -1);
    write_manifest(std::string("aborted_non_finite_loss: ") + err.what());
    summary.status = "aborted_non_finite_loss";
  }
  return summary;
}

double measure_random_baseline(const std::vector<lang::Sentence>& sentences,
                               const lang::ScaleConfig& scale, int episodes, uint64_t seed) {
  RandomPolicy policy(mix(seed, 0xBA5E11E0));
  std::mt19937_64 env_rng(mix(seed, 0xBA5E5EED));
  int successes = 0;
  for (int i = 0; i < episodes; ++i) {
    const auto& sentence = sentences[static_cast<size_t>(i) % sentences.size()];
    const auto episode = roll_episode(policy, sentence, scale, env_rng());
    double reward = 0.0;
    for (double r : episode.rewards) reward += r;
    if (reward > 0.0) ++successes;
  }
  return episodes > 0 ? static_cast<double>(successes) / episodes : 0.0;
}

CsvTable read_csv(const std::string& path) {
  CsvTable table;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read csv: " + path);
  std::string line;
  if (!std::getline(in, line)) return table;
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) table.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row_stream(line);
    std::vector<double> row;
    while (std::getline(row_stream, cell, ',')) {
      row.push_back(cell == "nan" || cell == "-nan" ? std::numeric_limits<double>::quiet_NaN()
                                                    : std::stod(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

int CsvTable::column_index(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<double>& x, const std::vector<double>& mean,
                     const std::vector<double>& lo, const std::vector<double>& hi) {
  const double width = 800, height = 400, margin = 50;
  double x_min = x.empty() ? 0.0 : x.front(), x_max = x.empty() ? 1.0 : x.back();
  if (x_max <= x_min) x_max = x_min + 1.0;
  double y_min = 0.0, y_max = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    for (double v : {mean[i], lo[i], hi[i]}) {
      if (std::isnan(v)) continue;
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (y_max <= y_min) y_max = y_min + 1.0;
  auto map_x = [&](double v) { return margin + (v - x_min) / (x_max - x_min) * (width - 2 * margin); };
  auto map_y = [&](double v) { return height - margin - (v - y_min) / (y_max - y_min) * (height - 2 * margin); };

  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  // Confidence band.
  std::ostringstream band;
  bool band_ok = true;
  for (size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(hi[i])) band_ok = false;
    band << map_x(x[i]) << "," << map_y(std::isnan(hi[i]) ? 0.0 : hi[i]) << " ";
  }
  for (size_t i = x.size(); i-- > 0;) {
    if (std::isnan(lo[i])) band_ok = false;
    band << map_x(x[i]) << "," << map_y(std::isnan(lo[i]) ? 0.0 : lo[i]) << " ";
  }
  if (band_ok && !x.empty())
    out << "<polygon points=\"" << band.str() << "\" fill=\"#4477aa\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1.5\" points=\"";
  for (size_t i = 0; i < x.size(); ++i)
    if (!std::isnan(mean[i])) out << map_x(x[i]) << "," << map_y(mean[i]) << " ";
  out << "\"/>\n";
  // Axes.
  out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"" << height - margin + 20 << "\" font-size=\"12\">"
      << format_double(x_min) << "</text>\n";
  out << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 20
      << "\" text-anchor=\"end\" font-size=\"12\">" << format_double(x_max) << "</text>\n";
  out << "<text x=\"" << margin - 5 << "\" y=\"" << height - margin
      << "\" text-anchor=\"end\" font-size=\"12\">" << format_double(y_min) << "</text>\n";
  out << "<text x=\"" << margin - 5 << "\" y=\"" << margin << "\" text-anchor=\"end\" font-size=\"12\">"
      << format_double(y_max) << "</text>\n";
  out << "</svg>\n";
}

}  // namespace

AggregateResult aggregate_seeds(const std::vector<std::string>& run_dirs,
                                const std::string& out_dir, int rolling_window) {
  if (run_dirs.empty()) throw std::invalid_argument("aggregate_seeds: no run directories");
  std::vector<CsvTable> tables;
  for (const auto& dir : run_dirs) tables.push_back(read_csv(dir + "/metrics.csv"));
  const auto& ref = tables.front();
  for (const auto& t : tables) {
    if (t.columns != ref.columns || t.rows.size() != ref.rows.size())
      throw std::runtime_error("aggregate_seeds: metrics files do not align");
  }

  fs::create_directories(out_dir);
  AggregateResult result;
  result.csv_path = out_dir + "/aggregate.csv";
  std::ofstream out(result.csv_path);

  const double z99 = 2.5758293035489004;
  const size_t n_runs = tables.size();
  const size_t n_rows = ref.rows.size();
  const size_t n_cols = ref.columns.size();

  out << "epoch";
  for (size_t c = 1; c < n_cols; ++c) {
    out << "," << ref.columns[c] << "_mean," << ref.columns[c] << "_ci99_lo," << ref.columns[c]
        << "_ci99_hi," << ref.columns[c] << "_rolling_mean";
  }
  out << "\n";

  std::vector<std::vector<double>> means(n_cols, std::vector<double>(n_rows)),
      los(n_cols, std::vector<double>(n_rows)), his(n_cols, std::vector<double>(n_rows));
  std::vector<double> epochs_axis(n_rows);
  std::vector<std::deque<double>> windows(n_cols);

  for (size_t r = 0; r < n_rows; ++r) {
    epochs_axis[r] = ref.rows[r][0];
    out << format_double(ref.rows[r][0]);
    for (size_t c = 1; c < n_cols; ++c) {
      double sum = 0.0, sum_sq = 0.0;
      int n = 0;
      for (const auto& t : tables) {
        const double v = t.rows[r][c];
        if (std::isnan(v)) continue;
        sum += v;
        sum_sq += v * v;
        ++n;
      }
      double mean = std::numeric_limits<double>::quiet_NaN();
      double half = 0.0;
      if (n > 0) {
        mean = sum / n;
        if (n > 1) {
          const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1));
          half = z99 * std::sqrt(var / n);
        }
      }
      means[c][r] = mean;
      los[c][r] = mean - half;
      his[c][r] = mean + half;
      auto& w = windows[c];
      w.push_back(mean);
      while (static_cast<int>(w.size()) > rolling_window) w.pop_front();
      out << "," << format_double(mean) << "," << format_double(mean - half) << ","
          << format_double(mean + half) << "," << format_double(nan_mean(w));
    }
    out << "\n";
  }
  out.flush();
  (void)n_runs;

  for (size_t c = 1; c < n_cols; ++c) {
    const auto path = out_dir + "/chart_" + ref.columns[c] + ".svg";
    write_svg_chart(path, ref.columns[c], epochs_axis, means[c], los[c], his[c]);
    result.chart_paths.push_back(path);
  }
  return result;
}

}  // namespace curio::harness
