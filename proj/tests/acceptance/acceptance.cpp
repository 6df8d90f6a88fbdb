// Acceptance suite: one pass/fail line per criterion. Exit status is the
// number of failed criteria.

#include <ATen/Parallel.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curio/agent.hpp"
#include "curio/analysis.hpp"
#include "curio/env.hpp"
#include "curio/fe.hpp"
#include "curio/fm.hpp"
#include "curio/harness.hpp"
#include "curio/lang.hpp"

using namespace curio;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::set<int> g_only;
std::string g_work = "acceptance_work";

bool selected(int criterion) { return g_only.empty() || g_only.count(criterion) > 0; }

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double quadrature_kld(double mq, double sq, double mp, double sp) {
  const double lo = mq - 12.0 * sq, hi = mq + 12.0 * sq;
  const int n = 8000;
  const double h = (hi - lo) / n;
  auto log_pdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * geom::kPi);
  };
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double lq = log_pdf(x, mq, sq);
    const double term = std::exp(lq) * (lq - log_pdf(x, mp, sp));
    sum += (i == 0 || i == n) ? 0.5 * term : term;
  }
  return sum * h;
}

// ---------------------------------------------------------------- criterion 1
void criterion_kld() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(991);
  std::uniform_real_distribution<double> mean_dist(-3.0, 3.0);
  std::uniform_real_distribution<double> std_dist(0.1, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double mq = mean_dist(rng), sq = std_dist(rng);
    const double mp = mean_dist(rng), sp = std_dist(rng);
    worst = std::max(worst, std::abs(fe::kld_diag({mq}, {sq}, {mp}, {sp}) -
                                     quadrature_kld(mq, sq, mp, sp)));
  }
  const double case1 = std::abs(fe::kld_diag({0.0}, {1.0}, {1.0}, {1.0}) - 0.5);
  const double case2 =
      std::abs(fe::kld_diag({0.0}, {2.0}, {0.0}, {1.0}) - (2.0 - 0.5 - std::log(2.0)));
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = worst < 1e-6 && case1 < 1e-9 && case2 < 1e-9 && elapsed < 1.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "KLD closed form vs quadrature: max |delta| %.2e (<1e-6), analytic %.1e/%.1e "
                "(<1e-9), %.2fs (<1s)",
                worst, case1, case2, elapsed);
  report(1, pass, buf);
}

// ---------------------------------------------------------------- criterion 2
replay::Episode synthetic_episode(int length, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> act(-1.0, 1.0);
  replay::Episode ep;
  ep.command = {1, 7, 13};
  for (int t = 0; t <= length; ++t) {
    env::ObservationBundle obs;
    obs.vision.resize(16 * 16 * 4);
    for (auto& v : obs.vision) v = unit(rng);
    for (auto& v : obs.touch) v = unit(rng);
    for (auto& v : obs.proprioception) v = unit(rng);
    obs.command_voice = lang::encode_sentence(ep.command);
    obs.feedback_voice = (t % 2 == 0) ? lang::silence() : lang::encode_sentence({2, 8, 14});
    ep.observations.push_back(obs);
  }
  for (int t = 0; t < length; ++t) {
    ep.actions.push_back({act(rng), act(rng), act(rng), act(rng)});
    ep.rewards.push_back(0.0);
    ep.dones.push_back(t + 1 == length ? 1.0 : 0.0);
  }
  return ep;
}

template <typename LossFn>
int check_gradients(const std::vector<torch::Tensor>& params, const LossFn& loss_fn, int budget,
                    double* worst_rel) {
  auto loss = loss_fn();
  for (const auto& p : params)
    if (p.grad().defined()) p.grad().zero_();
  loss.backward();
  int failures = 0;
  int checked = 0;
  const double eps = 1e-6;
  for (int round = 0; checked < budget; ++round) {
    for (const auto& p : params) {
      if (checked >= budget) break;
      const auto numel = p.numel();
      const int64_t index = (round * 997 + 13) % numel;
      const double analytic =
          p.grad().defined() ? p.grad().flatten()[index].item<double>() : 0.0;
      auto flat = p.detach().flatten();
      const double orig = flat[index].item<double>();
      flat[index] = orig + eps;
      const double lp = loss_fn().template item<double>();
      flat[index] = orig - eps;
      const double lm = loss_fn().template item<double>();
      flat[index] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double err = std::abs(numeric - analytic);
      const double rel = err / std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      *worst_rel = std::max(*worst_rel, rel);
      if (err > 1e-4 * std::max(std::abs(numeric), std::abs(analytic)) && err > 1e-7) ++failures;
      ++checked;
    }
  }
  return failures;
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(8881);
  const auto config = fm::ModelConfig::preset_config("micro");
  fm::ForwardModel model(config);
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("all"));

  static auto ep_a = synthetic_episode(3, 11);
  static auto ep_b = synthetic_episode(5, 22);
  const auto batch = fm::make_batch({&ep_a, &ep_b}, config, 5);

  double worst = 0.0;
  int failures = 0;

  failures += check_gradients(
      model->parameters(), [&] { return model->free_energy(batch, 4242, true).value; }, 200,
      &worst);

  const auto fm_out = [&] {
    torch::NoGradGuard no_grad;
    auto result = model->free_energy(batch, 4242, true);
    return result.pass.h.detach();
  }();
  auto curiosity = torch::rand({2, 5}, torch::kFloat64) * 0.1;

  std::vector<torch::Tensor> critic_params = sac.q1()->parameters();
  for (auto& p : sac.q2()->parameters()) critic_params.push_back(p);
  failures += check_gradients(
      critic_params,
      [&] {
        return sac.critic_loss(fm_out, batch.actions, batch.rewards, batch.dones, batch.mask,
                               curiosity, 777);
      },
      60, &worst);

  failures += check_gradients(
      sac.actor()->parameters(), [&] { return sac.actor_loss(fm_out, batch.mask, 778); }, 60,
      &worst);

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "gradient suite (F, critic, actor): %d/320 mismatches, %.1fs (<120s)", failures,
                elapsed);
  report(2, failures == 0 && elapsed < 120.0, buf);
}

// ---------------------------------------------------------------- criterion 3
void criterion_mask_invariance() {
  torch::manual_seed(8883);
  const auto config = fm::ModelConfig::preset_config("micro");
  fm::ForwardModelTrainer trainer(config, fe::IntrinsicConfig::preset("all"));
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("all"));

  static auto ep_a = synthetic_episode(3, 31);
  static auto ep_b = synthetic_episode(5, 32);
  auto batch = fm::make_batch({&ep_a, &ep_b}, config, 6);

  auto eval_losses = [&](const fm::Batch& b) {
    const double f = trainer.model()->free_energy(b, 919, true).value.item<double>();
    const auto fm_out = trainer.measure(b, 919);
    const double critic =
        sac.critic_loss(fm_out.h, b.actions, b.rewards, b.dones, b.mask, fm_out.curiosity, 55)
            .item<double>();
    const double actor = sac.actor_loss(fm_out.h, b.mask, 56).item<double>();
    return std::array<double, 3>{f, critic, actor};
  };

  const auto before = eval_losses(batch);
  for (int i = 0; i < batch.batch(); ++i) {
    for (int t = 0; t <= batch.steps(); ++t) {
      if (batch.obs_mask[i][t].item<double>() == 0.0) {
        batch.obs.vision[i][t].fill_(321.5);
        batch.obs.touch[i][t].fill_(-7.25);
        batch.obs.proprio[i][t].fill_(99.0);
        batch.obs.command[i][t].fill_(0.77);
        batch.obs.feedback[i][t].fill_(-0.4);
        batch.prev_actions[i][t].fill_(5.5);
      }
    }
    for (int t = 0; t < batch.steps(); ++t) {
      if (batch.mask[i][t].item<double>() == 0.0) {
        batch.actions[i][t].fill_(-3.3);
        batch.rewards[i][t] = 17.0;
        batch.dones[i][t] = 0.5;
      }
    }
  }
  const auto after = eval_losses(batch);
  const bool pass = before[0] == after[0] && before[1] == after[1] && before[2] == after[2];
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "mask invariance: |dF|=%.1e |dCritic|=%.1e |dActor|=%.1e (all exactly 0)",
                std::abs(before[0] - after[0]), std::abs(before[1] - after[1]),
                std::abs(before[2] - after[2]));
  report(3, pass, buf);
}

// ---------------------------------------------------------------- criterion 4
void criterion_success_fixtures() {
  const env::ArenaParams p;
  int checks = 0, failures = 0;
  auto expect = [&](bool condition) {
    ++checks;
    if (!condition) ++failures;
  };

  std::array<env::ObjectInstance, 2> objects{};
  objects[0] = {env::Shape::pillar, env::Color::red, {0, 0}};
  objects[1] = {env::Shape::pole, env::Color::green, {9, 9}};

  auto fired_after = [&](const env::StepMetrics& m, int repeats) {
    std::array<std::array<int, 2>, env::kNumActions> streaks{};
    std::vector<env::SuccessEvent> all;
    for (int i = 0; i < repeats; ++i) {
      auto e = env::evaluate_success(p, m, objects, streaks, i + 1);
      all.insert(all.end(), e.begin(), e.end());
    }
    return all;
  };
  auto count_of = [](const std::vector<env::SuccessEvent>& events, env::ActionCategory a) {
    int n = 0;
    for (const auto& e : events)
      if (e.action == a) ++n;
    return n;
  };

  using AC = env::ActionCategory;
  env::StepMetrics m;

  // Watch: 15 deg facing and the (6, 10) band, streak 6.
  m = {};
  m.objects[0].distance = 8.0;
  m.objects[0].facing_deviation_deg = 14.9;
  expect(count_of(fired_after(m, 5), AC::watch) == 0);
  expect(count_of(fired_after(m, 6), AC::watch) == 1);
  m.objects[0].facing_deviation_deg = 15.0;
  expect(count_of(fired_after(m, 12), AC::watch) == 0);
  m.objects[0].facing_deviation_deg = 16.0;
  expect(count_of(fired_after(m, 12), AC::watch) == 0);
  m.objects[0].facing_deviation_deg = 10.0;
  for (double d : {6.001, 9.999}) {
    m.objects[0].distance = d;
    expect(count_of(fired_after(m, 6), AC::watch) == 1);
  }
  for (double d : {5.999, 6.0, 10.0, 10.001}) {
    m.objects[0].distance = d;
    expect(count_of(fired_after(m, 12), AC::watch) == 0);
  }

  // Be near: distance < 6, no contact, streak 5.
  m = {};
  m.objects[0].facing_deviation_deg = 5.0;
  m.objects[0].distance = 5.999;
  expect(count_of(fired_after(m, 4), AC::be_near) == 0);
  expect(count_of(fired_after(m, 5), AC::be_near) == 1);
  m.objects[0].distance = 6.0;
  expect(count_of(fired_after(m, 10), AC::be_near) == 0);
  m.objects[0].distance = 5.0;
  m.objects[0].contact = true;
  expect(count_of(fired_after(m, 10), AC::be_near) == 0);

  // Touch the top: streak 3 on qualified hand contact; the 3.75 m hand gate
  // is checked geometrically below.
  m = {};
  m.objects[0].touch_top_contact = true;
  m.objects[0].contact = true;
  expect(count_of(fired_after(m, 2), AC::touch_top) == 0);
  expect(count_of(fired_after(m, 3), AC::touch_top) == 1);

  {
    // Geometric gate: pitch chosen so the hand center straddles 3.75 m.
    const auto scale = lang::ScaleConfig::preset("full");
    for (const double target_z : {3.76, 3.74}) {
      auto arena = env::Arena::reset(1, {3, 7, 13}, scale);
      auto& st = arena.mutable_state();
      st.robot = env::RobotState{};
      st.robot.position = {0.0, 0.0};
      const double pitch =
          geom::rad_to_deg(std::acos((target_z - p.arm_mount_height) / p.boom_length));
      st.robot.pitch_angle_deg = pitch;
      st.objects[0].position = {2.4, 0.0};
      st.objects[1].position = {-9.0, -9.0};
      st.streaks = {};
      // Keep rolling into the object so the hand contact persists; the
      // quasi-static resolution otherwise slides the object out of reach.
      bool touch_top_seen = false;
      for (int i = 0; i < 3; ++i) {
        const auto r = arena.step(env::MotorCommand{{0.3, 0.3, 0.0, 0.0}});
        touch_top_seen = !r.events.empty() && r.events[0].action == AC::touch_top;
      }
      expect(touch_top_seen == (target_z >= p.touch_top_min_height));
    }
  }

  // Push forward: > 0.1 m, streak 3.
  m = {};
  m.objects[0].pushed_forward = 0.101;
  expect(count_of(fired_after(m, 3), AC::push_forward) == 1);
  m.objects[0].pushed_forward = 0.1;
  expect(count_of(fired_after(m, 9), AC::push_forward) == 0);

  // Push left/right: > 0.2 m lateral with all wheel speeds under 5 m/s.
  m = {};
  m.objects[0].pushed_left = 0.201;
  m.max_wheel_speed = 4.999;
  expect(count_of(fired_after(m, 3), AC::push_left) == 1);
  m.max_wheel_speed = 5.0;
  expect(count_of(fired_after(m, 9), AC::push_left) == 0);
  m.max_wheel_speed = 0.0;
  m.objects[0].pushed_left = 0.2;
  expect(count_of(fired_after(m, 9), AC::push_left) == 0);
  m.objects[0].pushed_left = -0.201;
  expect(count_of(fired_after(m, 3), AC::push_right) == 1);

  // Streak reset: 5 good, 1 bad, 5 good -> nothing.
  {
    std::array<std::array<int, 2>, env::kNumActions> streaks{};
    env::StepMetrics good;
    good.objects[0].distance = 8.0;
    good.objects[0].facing_deviation_deg = 10.0;
    env::StepMetrics bad;
    std::vector<env::SuccessEvent> all;
    int step = 0;
    for (int i = 0; i < 5; ++i) {
      auto e = env::evaluate_success(p, good, objects, streaks, ++step);
      all.insert(all.end(), e.begin(), e.end());
    }
    auto e_bad = env::evaluate_success(p, bad, objects, streaks, ++step);
    all.insert(all.end(), e_bad.begin(), e_bad.end());
    for (int i = 0; i < 5; ++i) {
      auto e = env::evaluate_success(p, good, objects, streaks, ++step);
      all.insert(all.end(), e.begin(), e.end());
    }
    expect(all.empty());
  }

  // Prioritization table.
  {
    env::StepMetrics pm;
    pm.objects[0].pushed_forward = 0.3;
    pm.objects[0].pushed_left = 0.25;
    const lang::Sentence cmd{1, 7, 13};
    std::vector<env::SuccessEvent> cands = {
        {AC::touch_top, env::Color::red, env::Shape::pillar, 3, 0},
        {AC::push_forward, env::Color::red, env::Shape::pillar, 3, 0},
    };
    auto chosen = env::apply_action_constraints(cands, pm, cmd);
    expect(chosen && chosen->action == AC::touch_top);

    cands = {{AC::push_forward, env::Color::red, env::Shape::pillar, 3, 0},
             {AC::push_left, env::Color::red, env::Shape::pillar, 3, 0}};
    chosen = env::apply_action_constraints(cands, pm, cmd);
    expect(chosen && chosen->action == AC::push_forward);
    pm.objects[0].pushed_left = 0.45;
    chosen = env::apply_action_constraints(cands, pm, cmd);
    expect(chosen && chosen->action == AC::push_left);
    expect(!env::apply_action_constraints({}, pm, cmd).has_value());
  }

  // Streak lengths exactly as configured.
  expect(p.streak_required == std::array<int, 6>{6, 5, 3, 3, 3, 3});

  char buf[120];
  std::snprintf(buf, sizeof(buf), "success-criteria fixtures: %d/%d threshold checks correct",
                checks - failures, checks);
  report(4, failures == 0, buf);
}

// ---------------------------------------------------------------- criterion 5
void criterion_split_properties() {
  struct Case {
    const char* scale;
    std::set<size_t> train_ok;
    size_t total;
  };
  const std::vector<Case> cases = {
      {"full", {60}, 180}, {"middle", {33, 34}, 100}, {"small", {16}, 48}};
  int failures = 0;
  for (const auto& c : cases) {
    const auto scale = lang::ScaleConfig::preset(c.scale);
    for (uint64_t seed = 0; seed < 100; ++seed) {
      const auto split = lang::generate_split(scale, seed);
      if (!c.train_ok.count(split.train.size())) ++failures;
      if (split.train.size() + split.test.size() != c.total) ++failures;
      auto key = [](const lang::Sentence& s) { return s.verb * 10000 + s.adjective * 100 + s.noun; };
      std::set<int> train_keys;
      for (const auto& s : split.train) train_keys.insert(key(s));
      if (train_keys.size() != split.train.size()) ++failures;
      for (const auto& s : split.test)
        if (train_keys.count(key(s))) ++failures;
      std::set<int> seen;
      for (const auto& s : split.train) {
        seen.insert(s.verb);
        seen.insert(s.adjective);
        seen.insert(s.noun);
      }
      if (static_cast<int>(seen.size()) != scale.verbs + scale.adjectives + scale.nouns) ++failures;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "splits 60/180, 33-34/100, 16/48 with partition and token coverage over 100 "
                "seeds: %d violations",
                failures);
  report(5, failures == 0, buf);
}

// ------------------------------------------------------------- criteria 6-9
harness::RunConfig smoke_config(uint64_t seed, const std::string& out_dir) {
  harness::RunConfig config;
  config.curiosity = "all";
  config.scale = "smoke";
  config.model = "tiny";
  config.seed = seed;
  config.epochs = 2000;
  config.eval_every = 50;
  config.rolling_window = 10;
  config.out_dir = out_dir;
  return config;
}

void criterion_determinism() {
  auto config_a = smoke_config(777, g_work + "/det_a");
  auto config_b = smoke_config(777, g_work + "/det_b");
  config_a.epochs = config_b.epochs = 500;
  fs::remove_all(config_a.out_dir);
  fs::remove_all(config_b.out_dir);
  const auto a = harness::run_training(config_a);
  const auto b = harness::run_training(config_b);
  const bool metrics_equal = slurp(a.metrics_path) == slurp(b.metrics_path);
  const bool logs_equal = slurp(a.train_log_path) == slurp(b.train_log_path);
  report(6, metrics_equal && logs_equal,
         std::string("determinism: two identical runs -> metrics ") +
             (metrics_equal ? "byte-identical" : "DIFFER") + ", train logs " +
             (logs_equal ? "byte-identical" : "DIFFER"));
}

struct SmokeRun {
  harness::RunSummary summary;
  harness::RunConfig config;
  double wall_seconds = 0.0;
};

SmokeRun run_smoke(uint64_t seed) {
  auto config = smoke_config(seed, g_work + "/smoke_" + std::to_string(seed));
  SmokeRun run;
  run.config = config;
  if (fs::exists(config.out_dir + "/metrics.csv") &&
      fs::exists(config.out_dir + "/manifest.json")) {
    // Reuse a finished run from a previous invocation of this binary.
    const auto manifest = slurp(config.out_dir + "/manifest.json");
    if (manifest.find("\"status\": \"ok\"") != std::string::npos) {
      run.summary.status = "ok";
      run.summary.metrics_path = config.out_dir + "/metrics.csv";
      run.summary.train_log_path = config.out_dir + "/train_log.csv";
      run.summary.out_dir = config.out_dir;
      const auto pos = manifest.find("\"wall_time_seconds\": ");
      if (pos != std::string::npos) run.wall_seconds = std::stod(manifest.substr(pos + 21));
      return run;
    }
  }
  fs::remove_all(config.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  run.summary = harness::run_training(config);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

void criterion_smoke_learning(const SmokeRun& run) {
  const auto split = lang::generate_split(run.config.scale_config(), run.config.seed);
  const double baseline =
      harness::measure_random_baseline(split.train, run.config.scale_config(), 200, 4321);

  const auto metrics = harness::read_csv(run.summary.metrics_path);
  const int col = metrics.column_index("rolling_learned_overall");
  double best = 0.0;
  for (const auto& row : metrics.rows)
    if (!std::isnan(row[static_cast<size_t>(col)]))
      best = std::max(best, row[static_cast<size_t>(col)]);

  const double needed = 5.0 * baseline;
  const bool pass = run.summary.status == "ok" && best >= needed && run.wall_seconds < 3600.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "smoke learning: rolling learned success peaks at %.3f vs 5x random baseline "
                "%.3f (baseline %.3f over 200 episodes), %.0fs (<3600s)",
                best, needed, baseline, run.wall_seconds);
  report(7, pass, buf);
}

void criterion_ordering(const std::vector<SmokeRun>& runs) {
  int violations = 0;
  int points = 0;
  for (const auto& run : runs) {
    const auto metrics = harness::read_csv(run.summary.metrics_path);
    const int lc = metrics.column_index("rolling_learned_overall");
    const int uc = metrics.column_index("rolling_unlearned_overall");
    for (const auto& row : metrics.rows) {
      const double learned = row[static_cast<size_t>(lc)];
      const double unlearned = row[static_cast<size_t>(uc)];
      if (std::isnan(learned) || std::isnan(unlearned)) continue;
      ++points;
      if (learned + 1e-12 < unlearned) ++violations;
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "ordering: rolling learned >= unlearned at %d/%d evaluation points across %zu "
                "seeds",
                points - violations, points, runs.size());
  report(8, violations == 0, buf);
}

void criterion_curiosity_signal(const SmokeRun& all_curiosity_run) {
  const auto log_all = harness::read_csv(all_curiosity_run.summary.train_log_path);
  const int col = log_all.column_index("curiosity_mean");
  int nonpositive = 0;
  for (const auto& row : log_all.rows)
    if (!(row[static_cast<size_t>(col)] > 0.0)) ++nonpositive;

  auto config = smoke_config(555, g_work + "/nocur");
  config.curiosity = "none";
  config.epochs = 100;
  fs::remove_all(config.out_dir);
  const auto none_run = harness::run_training(config);
  const auto log_none = harness::read_csv(none_run.train_log_path);
  const int col_none = log_none.column_index("curiosity_mean");
  int nonzero = 0;
  for (const auto& row : log_none.rows)
    if (row[static_cast<size_t>(col_none)] != 0.0) ++nonzero;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "curiosity signal: all-curiosity positive at %zu/%zu epochs; no-curiosity "
                "exactly zero at %zu/%zu epochs",
                log_all.rows.size() - nonpositive, log_all.rows.size(),
                log_none.rows.size() - nonzero, log_none.rows.size());
  report(9, nonpositive == 0 && nonzero == 0 && !log_all.rows.empty() && !log_none.rows.empty(),
         buf);
}

// --------------------------------------------------------------- criterion 10
void criterion_pca_oracle() {
  std::srand(61803);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(50, 5);
    x.col(trial % 5) *= 3.0;
    const auto result = analysis::pca(x, 2);
    Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered.transpose() * centered / 49.0);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd expected = solver.eigenvectors().col(4 - j);
      long idx = 0;
      expected.cwiseAbs().maxCoeff(&idx);
      if (expected(idx) < 0.0) expected = -expected;
      worst = std::max(worst, (result.components.col(j) - expected).cwiseAbs().maxCoeff());
    }
  }
  char buf[140];
  std::snprintf(buf, sizeof(buf),
                "PCA power iteration vs dense eigensolver: max component deviation %.2e (<1e-8)",
                worst);
  report(10, worst < 1e-8, buf);
}

// --------------------------------------------------------------- criterion 11
void criterion_dream_wiring() {
  torch::manual_seed(8890);
  const auto config = fm::ModelConfig::preset_config("tiny");
  fm::ForwardModel model(config);
  agent::Actor actor(config);
  fm::ActorFn actor_fn = [&actor](const torch::Tensor& h) {
    return actor->deterministic(h.reshape({1, -1})).reshape({4});
  };
  const auto scale = lang::ScaleConfig::preset("smoke");
  auto arena = env::Arena::reset(17, {1, 7, 13}, scale);
  const auto initial = arena.observation();

  const int T = 8;
  const auto dream1 = fm::dream_rollout(model, actor_fn, initial, T);
  const auto genuine = fm::tensorize(initial, config);
  const bool frame0 = dream1[0].observation.vision.equal(genuine.vision) &&
                      dream1[0].observation.touch.equal(genuine.touch) &&
                      dream1[0].observation.proprio.equal(genuine.proprio) &&
                      dream1[0].observation.command.equal(genuine.command) &&
                      dream1[0].observation.feedback.equal(genuine.feedback);

  // Taint: march the genuine environment somewhere else entirely; the dream
  // must not notice because it never reads anything after t=0.
  for (int i = 0; i < 10 && !arena.state().done; ++i)
    arena.step(env::MotorCommand{{-1.0, 1.0, 1.0, -1.0}});
  const auto dream2 = fm::dream_rollout(model, actor_fn, initial, T);
  bool unaffected = dream2.size() == dream1.size();
  for (size_t t = 0; unaffected && t < dream1.size(); ++t) {
    unaffected = dream1[t].observation.vision.equal(dream2[t].observation.vision) &&
                 dream1[t].observation.touch.equal(dream2[t].observation.touch) &&
                 dream1[t].observation.command.equal(dream2[t].observation.command) &&
                 dream1[t].action.equal(dream2[t].action);
  }

  // And the later frames really are the model's own predictions, not copies
  // of genuine observations.
  bool closed_loop = true;
  {
    auto state = model->initial_state();
    state = model->observe(state, genuine, false, nullptr);
    const auto a0 = actor_fn(state.h.reshape({-1})).reshape({1, 4});
    const auto preds = model->predict_one(state.h, a0);
    closed_loop =
        dream1[1].observation.vision.equal(preds.vision.reshape(dream1[1].observation.vision.sizes()));
  }

  report(11, frame0 && unaffected && closed_loop,
         std::string("dream wiring: frame 0 ") + (frame0 ? "bitwise genuine" : "WRONG") +
             "; tainting later genuine inputs changes " + (unaffected ? "nothing" : "OUTPUT") +
             "; step 1 equals the model's own one-step prediction");
}

}  // namespace

int main(int argc, char** argv) {
  at::set_num_threads(1);
  std::string cli_path;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) g_only.insert(std::stoi(tok));
    } else if (std::strcmp(argv[i], "--work") == 0 && i + 1 < argc) {
      g_work = argv[++i];
    } else if (std::strcmp(argv[i], "--cli") == 0 && i + 1 < argc) {
      cli_path = argv[++i];  // accepted for symmetry with ctest wiring
    }
  }
  fs::create_directories(g_work);

  if (selected(1)) criterion_kld();
  if (selected(2)) criterion_gradients();
  if (selected(3)) criterion_mask_invariance();
  if (selected(4)) criterion_success_fixtures();
  if (selected(5)) criterion_split_properties();
  if (selected(6)) criterion_determinism();

  if (selected(7) || selected(8) || selected(9)) {
    std::vector<SmokeRun> runs;
    for (uint64_t seed : {101, 102, 103}) {
      std::printf("-- smoke run seed %llu (2000 epochs, tiny preset, all curiosity)\n",
                  static_cast<unsigned long long>(seed));
      std::fflush(stdout);
      runs.push_back(run_smoke(seed));
    }
    if (selected(7)) criterion_smoke_learning(runs.front());
    if (selected(8)) criterion_ordering(runs);
    if (selected(9)) criterion_curiosity_signal(runs.front());
  }

  if (selected(10)) criterion_pca_oracle();
  if (selected(11)) criterion_dream_wiring();

  std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              g_failures);
  return g_failures;
}
