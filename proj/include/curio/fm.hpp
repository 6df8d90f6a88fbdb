#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "curio/env.hpp"
#include "curio/fe.hpp"
#include "curio/replay.hpp"

namespace curio::fm {

// Thrown when a training pass produces a non-finite loss.
struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Network widths. "full" keeps the published shapes (16x16 vision, 256
// hidden); "tiny" halves widths and pools vision to 8x8 for desk-scale runs;
// "micro" is a few-thousand-parameter configuration for gradient checks.
struct ModelConfig {
  std::string preset = "full";
  int vision_size = 16;  // model-side square resolution; env renders 16
  int vision_enc_out = 128;
  int vision_dec_channels = 64;
  int touch_enc_out = 20;
  int proprio_enc_out = 4;
  int voice_embed = 8;
  int voice_hidden = 64;
  int voice_enc_out = 256;
  int voice_dec_hidden = 64;
  int hidden = 256;
  int action_enc_out = 8;
  int head_hidden = 64;
  std::array<int, fe::kNumModalities> latent = {16, 8, 8, 16, 16};
  int actor_hidden = 256;
  int critic_hidden = 256;
  double sigma_floor = 1e-4;
  double lr = 3e-4;        // forward-model optimizer
  double agent_lr = 1e-3;  // actor/critic optimizers

  int vision_dec_grid() const { return vision_size / 2; }
  int vision_pool() const { return 16 / vision_size; }
  int z_total() const;
  int vision_flat() const { return vision_size * vision_size * 4; }
  static ModelConfig preset_config(const std::string& name);  // full, tiny, micro
};

// Batch-norm that derives batch statistics from unmasked rows only, so padded
// steps can never leak into the loss.
class MaskedBatchNorm1dImpl : public torch::nn::Module {
 public:
  MaskedBatchNorm1dImpl(int features, double eps = 1e-5, double momentum = 0.1);
  // x: [N, F]; mask: [N] in {0,1} or undefined for all-ones.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask, bool train_mode);

  torch::Tensor weight, bias;
  torch::Tensor running_mean, running_var;
  double eps_, momentum_;
};
TORCH_MODULE(MaskedBatchNorm1d);

// Shared voice encoder: embedding + linear + GRU over up to three tokens +
// linear head. Command and feedback voices flow through the same weights.
class VoiceEncoderImpl : public torch::nn::Module {
 public:
  VoiceEncoderImpl(const ModelConfig& config);
  // tokens: [N, 3, 18] one-hot rows (silence padded), lengths: [N] in {1, 3}.
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& lengths);

  torch::nn::Linear embed{nullptr}, lin{nullptr}, out{nullptr};
  torch::nn::GRUCell gru{nullptr};
  torch::nn::PReLU embed_act{nullptr}, lin_act{nullptr}, gru_act{nullptr}, out_act{nullptr};
};
TORCH_MODULE(VoiceEncoder);

class VoiceDecoderImpl : public torch::nn::Module {
 public:
  VoiceDecoderImpl(const ModelConfig& config);
  // x: [N, hidden + action_enc] -> logits [N, 3, 18].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask, bool train_mode);

  torch::nn::Linear lin{nullptr}, out{nullptr};
  MaskedBatchNorm1d bn{nullptr};
  torch::nn::PReLU act{nullptr}, gru_act{nullptr};
  torch::nn::GRUCell gru{nullptr};
};
TORCH_MODULE(VoiceDecoder);

// Tensor form of one observation (or a [.., T] stack of them).
struct ObsTensors {
  torch::Tensor vision;        // [.., 4, S, S] pooled to the model resolution
  torch::Tensor touch;         // [.., 16]
  torch::Tensor proprio;       // [.., 4]
  torch::Tensor command;       // [.., 3, 18]
  torch::Tensor feedback;      // [.., 3, 18] silence padded
  torch::Tensor feedback_len;  // [..] in {1, 3}
};

ObsTensors tensorize(const env::ObservationBundle& obs, const ModelConfig& config);

struct Batch {
  ObsTensors obs;              // leading dims [B, T+1]
  torch::Tensor actions;       // [B, T, 4]
  torch::Tensor prev_actions;  // [B, T+1, 4]; a_{-1} = 0
  torch::Tensor rewards;       // [B, T]
  torch::Tensor dones;         // [B, T]
  torch::Tensor mask;          // [B, T]
  torch::Tensor obs_mask;      // [B, T+1]; 1 where the observation is real
  int batch() const { return static_cast<int>(mask.size(0)); }
  int steps() const { return static_cast<int>(mask.size(1)); }
};

Batch make_batch(const std::vector<const replay::Episode*>& episodes, const ModelConfig& config,
                 int padded_steps = replay::kEpisodeLength);

// Per-modality predictions of the next observation.
struct Predictions {
  torch::Tensor vision;           // [.., 4, S, S] in [0, 1]
  torch::Tensor touch;            // [.., 16] in [0, 1]
  torch::Tensor proprio;          // [.., 4] in [0, 1]
  torch::Tensor command_logits;   // [.., 3, 18]
  torch::Tensor feedback_logits;  // [.., 3, 18]
};

struct UnrollResult {
  torch::Tensor h;  // [B, T+1, H]
  std::array<fe::DiagonalGaussian, fe::kNumModalities> prior;      // [B, T+1, d_i]
  std::array<fe::DiagonalGaussian, fe::kNumModalities> posterior;  // [B, T+1, d_i]
  std::array<torch::Tensor, fe::kNumModalities> kld;               // [B, T+1]
};

struct FreeEnergyResult {
  torch::Tensor value;  // scalar, graph-attached
  UnrollResult pass;
  Predictions predictions;
};

// Recurrent acting state.
struct StepState {
  torch::Tensor h;            // [1, H]
  torch::Tensor prev_action;  // [1, 4]
};

class ForwardModelImpl : public torch::nn::Module {
 public:
  explicit ForwardModelImpl(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Posterior-path unroll over a batch; reparameterized samples come from
  // noise_seed so identical seeds reproduce identical passes.
  UnrollResult unroll(const Batch& batch, uint64_t noise_seed, bool train_mode);

  // Priors/posteriors for one step; exposed for shape and purity tests.
  std::array<fe::DiagonalGaussian, fe::kNumModalities> compute_prior(const torch::Tensor& h_prev,
                                                                     const torch::Tensor& action_enc);
  fe::DiagonalGaussian compute_posterior(const torch::Tensor& h_prev, const torch::Tensor& action_enc,
                                         const torch::Tensor& obs_enc, int modality);
  torch::Tensor advance_hidden(const torch::Tensor& h_prev, const torch::Tensor& z_concat);
  torch::Tensor encode_action(const torch::Tensor& action);

  // Decodes next-observation predictions from h_t and the executed action.
  Predictions predict(const torch::Tensor& h, const torch::Tensor& actions,
                      const torch::Tensor& mask, bool train_mode);

  FreeEnergyResult free_energy(const Batch& batch, uint64_t noise_seed, bool train_mode);

  // Acting path (batch 1, eval-mode normalization). When sample is false the
  // posterior mean is used. posteriors_out, when given, receives the
  // per-modality posteriors of this step.
  StepState initial_state();
  StepState observe(const StepState& state, const ObsTensors& obs, bool sample,
                    torch::Generator* gen,
                    std::array<fe::DiagonalGaussian, fe::kNumModalities>* posteriors_out = nullptr);

  // One-step prediction for closed-loop rollouts; returns tensors shaped like
  // a single observation.
  Predictions predict_one(const torch::Tensor& h, const torch::Tensor& action);

  // Encodes every observation of a batch once; internal to unroll but exposed
  // for the voice-sharing test.
  torch::Tensor encode_voice(const torch::Tensor& tokens, const torch::Tensor& lengths);

 private:
  std::array<torch::Tensor, fe::kNumModalities> encode_all(const ObsTensors& obs,
                                                           const torch::Tensor& obs_mask,
                                                           bool train_mode);
  fe::DiagonalGaussian head_forward(torch::nn::Linear& l1, torch::nn::PReLU& act,
                                    torch::nn::Linear& l2, const torch::Tensor& input);

  ModelConfig config_;

  torch::nn::Linear vision_enc_{nullptr};
  torch::nn::PReLU vision_enc_act_{nullptr};
  torch::nn::Linear touch_enc_{nullptr};
  MaskedBatchNorm1d touch_enc_bn_{nullptr};
  torch::nn::PReLU touch_enc_act_{nullptr};
  torch::nn::Linear proprio_enc_{nullptr};
  MaskedBatchNorm1d proprio_enc_bn_{nullptr};
  torch::nn::PReLU proprio_enc_act_{nullptr};
  VoiceEncoder voice_enc_{nullptr};
  torch::nn::Linear action_enc_{nullptr};
  torch::nn::PReLU action_enc_act_{nullptr};

  std::array<torch::nn::Linear, fe::kNumModalities> prior_l1_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::PReLU, fe::kNumModalities> prior_act_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::Linear, fe::kNumModalities> prior_l2_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::Linear, fe::kNumModalities> post_l1_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::PReLU, fe::kNumModalities> post_act_{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::Linear, fe::kNumModalities> post_l2_{nullptr, nullptr, nullptr, nullptr, nullptr};

  torch::nn::GRUCell core_{nullptr};

  torch::nn::Linear vision_dec_{nullptr};
  MaskedBatchNorm1d vision_dec_bn_{nullptr};
  torch::nn::PReLU vision_dec_act_{nullptr};
  torch::nn::Conv2d vision_dec_conv_{nullptr};
  torch::nn::Linear touch_dec_{nullptr};
  MaskedBatchNorm1d touch_dec_bn_{nullptr};
  torch::nn::Linear proprio_dec_{nullptr};
  MaskedBatchNorm1d proprio_dec_bn_{nullptr};
  VoiceDecoder command_dec_{nullptr};
  VoiceDecoder feedback_dec_{nullptr};
};
TORCH_MODULE(ForwardModel);

struct TrainStepResult {
  double free_energy = 0.0;
  torch::Tensor h;          // [B, T+1, H], detached
  torch::Tensor curiosity;  // [B, T], detached, eta-weighted
  std::array<double, fe::kNumModalities> kld_mean{};  // masked means
};

// Owns the forward model and its optimizer; runs one descent step onF per call.
class ForwardModelTrainer {
 public:
  ForwardModelTrainer(const ModelConfig& config, const fe::IntrinsicConfig& intrinsic,
                      bool curiosity_next_step = false);

  // One optimizer step on F. Throws NonFiniteLoss when F is not finite.
  TrainStepResult train_step(const Batch& batch, uint64_t noise_seed);

  // Same computation without the parameter update.
  TrainStepResult measure(const Batch& batch, uint64_t noise_seed, bool train_mode = true);

  ForwardModel& model() { return model_; }
  torch::optim::Adam& optimizer() { return *optimizer_; }
  const fe::IntrinsicConfig& intrinsic() const { return intrinsic_; }

 private:
  TrainStepResult assemble(const Batch& batch, FreeEnergyResult&& result) const;

  ForwardModel model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  fe::IntrinsicConfig intrinsic_;
  bool curiosity_next_step_;
};

// Closed-loop rollout: only the first observation is genuine; later steps
// re-encode the model's own predictions.
struct DreamStep {
  ObsTensors observation;  // what the model consumed at this step
  torch::Tensor action;    // [4]
};
using ActorFn = std::function<torch::Tensor(const torch::Tensor& h)>;
std::vector<DreamStep> dream_rollout(ForwardModel& model, const ActorFn& actor,
                                     const env::ObservationBundle& initial, int steps);

}  // namespace curio::fm
