#include <ATen/Parallel.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "curio/analysis.hpp"
#include "curio/harness.hpp"

using namespace curio;

namespace {

std::vector<lang::Sentence> pick_set(const lang::Split& split, const std::string& which) {
  if (which == "learned") return split.train;
  if (which == "unlearned") return split.test;
  std::vector<lang::Sentence> all = split.train;
  all.insert(all.end(), split.test.begin(), split.test.end());
  return all;
}

void print_eval(const harness::EvalResult& result) {
  std::printf("episodes: %d/%d = %.4f (category-balanced %.4f)\n", result.total_successes(),
              result.total_attempts(), result.micro_rate(), result.overall_rate());
  for (int c = 0; c < env::kNumActions; ++c) {
    if (result.attempts[static_cast<size_t>(c)] == 0) continue;
    std::printf("  %-13s %d/%d = %.4f\n",
                lang::token_names()[static_cast<size_t>(lang::kVerbBase + c)].c_str(),
                result.successes[static_cast<size_t>(c)], result.attempts[static_cast<size_t>(c)],
                result.category_rate(c));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curiobot: curiosity-driven language-conditioned crane-robot training"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "intra-op thread count (1 keeps runs reproducible)");

  harness::RunConfig config;
  auto* train = app.add_subcommand("train", "run the training schedule");
  train->add_option("--curiosity", config.curiosity, "curiosity preset: none|sensorimotor|all")
      ->check(CLI::IsMember({"none", "sensorimotor", "all"}));
  train->add_option("--scale", config.scale, "vocabulary scale: full|middle|small|smoke")
      ->check(CLI::IsMember({"full", "middle", "small", "smoke"}));
  train->add_option("--model", config.model, "network preset: full|tiny|micro")
      ->check(CLI::IsMember({"full", "tiny", "micro"}));
  train->add_option("--seed", config.seed, "random seed");
  train->add_option("--epochs", config.epochs, "training epochs (one episode each)");
  train->add_option("--eval-every", config.eval_every, "evaluation cadence in epochs");
  train->add_option("--rolling-window", config.rolling_window, "rolling window in eval points");
  train->add_option("--episodes-per-sentence", config.episodes_per_sentence,
                    "episodes per sentence in each evaluation pass");
  train->add_option("--lr", config.lr, "forward model learning rate");
  train->add_option("--agent-lr", config.agent_lr, "actor/critic learning rate");
  train->add_option("--alpha", config.alpha, "entropy weight");
  train->add_option("--gamma", config.gamma, "discount");
  train->add_option("--tau", config.tau, "Polyak coefficient");
  train->add_flag("--curiosity-next-step", config.curiosity_next_step,
                  "reward step t with the KLD measured at t+1");
  train->add_flag("--dynamic-alpha", config.dynamic_alpha,
                  "tune the entropy weight toward --target-entropy");
  train->add_option("--target-entropy", config.target_entropy,
                    "target policy entropy for --dynamic-alpha");
  train->add_option("--alpha-lr", config.alpha_lr, "learning rate for --dynamic-alpha");
  train->add_option("--out", config.out_dir, "output directory")->required();

  std::string checkpoint_path, which_set = "all", sentence_text, out_path;
  int episodes_per_sentence = 1, steps = 30;
  uint64_t seed = 0;
  bool with_silhouette = false;

  auto* evaluate = app.add_subcommand("evaluate", "run the generalization test from a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  evaluate->add_option("--set", which_set, "learned|unlearned|all")
      ->check(CLI::IsMember({"learned", "unlearned", "all"}));
  evaluate->add_option("--episodes-per-sentence", episodes_per_sentence, "episodes per sentence");
  evaluate->add_option("--seed", seed, "seed for the evaluation placements");
  std::string trace_dir;
  evaluate->add_option("--trace-dir", trace_dir, "write one trace file per evaluated episode");
  bool stochastic = false;
  evaluate->add_flag("--stochastic", stochastic, "sample the policy instead of using the mean");

  std::vector<std::string> run_dirs;
  int rolling_window = 10;
  auto* aggregate = app.add_subcommand("aggregate", "aggregate metrics across seed runs");
  aggregate->add_option("--out", out_path, "output directory")->required();
  aggregate->add_option("--rolling-window", rolling_window, "rolling window in eval points");
  aggregate->add_option("runs", run_dirs, "run directories containing metrics.csv")->required();

  auto* dream = app.add_subcommand("dream", "export a mental-planning rollout");
  dream->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  dream->add_option("--sentence", sentence_text, "command, e.g. 'watch|red|pillar'")->required();
  dream->add_option("--steps", steps, "rollout length");
  dream->add_option("--seed", seed, "arena seed for the initial observation");
  dream->add_option("--out", out_path, "output directory")->required();

  auto* pca_cmd = app.add_subcommand("pca", "project command-voice latents");
  pca_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  pca_cmd->add_option("--set", which_set, "learned|unlearned|all")
      ->check(CLI::IsMember({"learned", "unlearned", "all"}));
  pca_cmd->add_option("--episodes-per-sentence", episodes_per_sentence, "episodes per sentence");
  pca_cmd->add_option("--seed", seed, "seed for the collection episodes");
  pca_cmd->add_option("--out", out_path, "projections csv path")->required();
  pca_cmd->add_flag("--silhouette", with_silhouette, "also print the verb silhouette score");

  CLI11_PARSE(app, argc, argv);
  at::set_num_threads(threads);

  try {
    if (*train) {
      const auto summary = harness::run_training(config);
      std::printf("status: %s\n", summary.status.c_str());
      std::printf("metrics: %s\n", summary.metrics_path.c_str());
      std::printf("train log: %s\n", summary.train_log_path.c_str());
      std::printf("checkpoint: %s\n", summary.checkpoint_final.c_str());
      return summary.status == "ok" ? 0 : 3;
    }

    if (*evaluate) {
      auto system = harness::load_system(checkpoint_path);
      const auto scale = system->config.scale_config();
      const auto split = lang::generate_split(scale, system->config.seed);
      const auto sentences = pick_set(split, which_set);
      std::mt19937_64 seed_rng(seed);
      auto gen = at::detail::createCPUGenerator(seed ^ 0xabcd1234u);
      harness::NeuralPolicy policy(system->fm_trainer.model(), system->agent.actor(), stochastic,
                                   stochastic ? &gen : nullptr);
      const auto result = harness::evaluate(policy, sentences, episodes_per_sentence, scale, seed_rng);
      print_eval(result);
      if (!trace_dir.empty()) {
        std::filesystem::create_directories(trace_dir);
        int index = 0;
        for (const auto& sentence : sentences) {
          auto arena = env::Arena::reset(seed + static_cast<uint64_t>(index), sentence, scale);
          auto episode_policy = harness::NeuralPolicy(system->fm_trainer.model(),
                                                      system->agent.actor(), false, nullptr);
          episode_policy.begin_episode(sentence);
          std::vector<env::TraceRecord> trace;
          auto obs = arena.observation();
          while (!arena.state().done) {
            const auto action = episode_policy.act(obs, arena.state());
            const auto r = arena.step(env::MotorCommand::clamped(action));
            env::TraceRecord rec;
            rec.step = arena.state().step_index;
            rec.robot = arena.state().robot;
            rec.reward = r.reward;
            rec.done = r.done;
            if (!r.events.empty()) rec.event = r.events[0];
            trace.push_back(rec);
            obs = r.observation;
          }
          std::ofstream out(trace_dir + "/episode_" + std::to_string(index) + ".txt");
          out << "# " << sentence.text() << "\n";
          env::write_trace(out, trace);
          ++index;
        }
        std::printf("traces: %s\n", trace_dir.c_str());
      }
      return 0;
    }

    if (*aggregate) {
      const auto result = harness::aggregate_seeds(run_dirs, out_path, rolling_window);
      std::printf("aggregate: %s\n", result.csv_path.c_str());
      std::printf("charts: %zu\n", result.chart_paths.size());
      return 0;
    }

    if (*dream) {
      auto system = harness::load_system(checkpoint_path);
      const auto scale = system->config.scale_config();
      const auto sentence = lang::parse_sentence(sentence_text);
      const auto result = analysis::export_dream(system->fm_trainer.model(), system->agent.actor(),
                                                 sentence, scale, seed, steps, out_path);
      std::printf("frames: %d under %s\n", result.steps, out_path.c_str());
      std::printf("trace: %s\n", result.trace_path.c_str());
      return 0;
    }

    if (*pca_cmd) {
      auto system = harness::load_system(checkpoint_path);
      const auto scale = system->config.scale_config();
      const auto split = lang::generate_split(scale, system->config.seed);
      const auto sentences = pick_set(split, which_set);
      const auto latents = analysis::collect_command_latents(
          system->fm_trainer.model(), system->agent.actor(), sentences, episodes_per_sentence,
          scale, seed);
      const auto result = analysis::pca(latents.data, 2);
      analysis::write_projections_csv(out_path, result, latents.labels);
      std::printf("rows: %ld\n", static_cast<long>(latents.data.rows()));
      std::printf("explained variance: %.6f %.6f\n", result.explained_variance(0),
                  result.explained_variance(1));
      if (with_silhouette) {
        std::vector<int> labels;
        for (const auto& s : latents.labels) labels.push_back(s.verb);
        std::printf("verb silhouette: %.6f\n",
                    analysis::silhouette_score(result.projections, labels));
      }
      std::printf("projections: %s\n", out_path.c_str());
      return 0;
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return 0;
}
