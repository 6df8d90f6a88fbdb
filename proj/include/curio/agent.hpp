#pragma once

#include <torch/torch.h>

#include <memory>

#include "curio/fe.hpp"
#include "curio/fm.hpp"

namespace curio::agent {

// Squashed-Gaussian policy over the 4 motor dimensions. Emitted commands are
// always in [-1, 1]; log-probabilities carry the exact tanh change-of-variables
// correction.
class ActorImpl : public torch::nn::Module {
 public:
  explicit ActorImpl(const fm::ModelConfig& config);

  struct Sample {
    torch::Tensor action;    // [.., 4] in [-1, 1]
    torch::Tensor log_prob;  // [..]
  };

  // Reparameterized sample (gradients flow to the parameters).
  Sample sample(const torch::Tensor& h, torch::Generator& gen);
  torch::Tensor deterministic(const torch::Tensor& h);  // tanh of the mean
  fe::DiagonalGaussian distribution(const torch::Tensor& h);
  // Log-density of a pre-squash value u (action = tanh(u)).
  torch::Tensor log_prob_of(const torch::Tensor& h, const torch::Tensor& u);

 private:
  torch::nn::Linear l1_{nullptr}, l2_{nullptr}, mean_{nullptr}, std_{nullptr};
  double sigma_floor_;
};
TORCH_MODULE(Actor);

class CriticImpl : public torch::nn::Module {
 public:
  explicit CriticImpl(const fm::ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& action);  // [..]

 private:
  torch::nn::Linear l1_{nullptr}, l2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Critic);

struct CriticLosses {
  double q1 = 0.0, q2 = 0.0;
  double mean_target = 0.0;
};

struct ActorLosses {
  double loss = 0.0;
  double mean_entropy = 0.0;  // masked mean of -log pi
};

// Twin critics with Polyak-averaged targets plus the policy, trained on the
// forward model's (detached) hidden states.
class SacAgent {
 public:
  SacAgent(const fm::ModelConfig& config, const fe::IntrinsicConfig& intrinsic);

  // h: [B, T+1, H] detached; the remaining tensors are [B, T(, ...)].
  CriticLosses critic_update(const torch::Tensor& h, const torch::Tensor& actions,
                             const torch::Tensor& rewards, const torch::Tensor& dones,
                             const torch::Tensor& mask, const torch::Tensor& curiosity,
                             uint64_t noise_seed);
  ActorLosses actor_update(const torch::Tensor& h, const torch::Tensor& mask, uint64_t noise_seed);
  void polyak_update();       // tau from the intrinsic config
  void polyak_update(double tau);

  // Optional dynamic temperature; disabled by default (fixed alpha).
  void enable_dynamic_alpha(double target_entropy, double lr = 3e-4);
  double alpha_update(double measured_entropy);
  double alpha() const;

  // Loss values without parameter updates, for gradient checks.
  torch::Tensor critic_loss(const torch::Tensor& h, const torch::Tensor& actions,
                            const torch::Tensor& rewards, const torch::Tensor& dones,
                            const torch::Tensor& mask, const torch::Tensor& curiosity,
                            uint64_t noise_seed);
  torch::Tensor actor_loss(const torch::Tensor& h, const torch::Tensor& mask, uint64_t noise_seed,
                           double* mean_entropy = nullptr);

  Actor& actor() { return actor_; }
  Critic& q1() { return q1_; }
  Critic& q2() { return q2_; }
  Critic& q1_target() { return q1_target_; }
  Critic& q2_target() { return q2_target_; }
  const fe::IntrinsicConfig& intrinsic() const { return intrinsic_; }

 private:
  fe::IntrinsicConfig intrinsic_;
  Actor actor_{nullptr};
  Critic q1_{nullptr}, q2_{nullptr}, q1_target_{nullptr}, q2_target_{nullptr};
  std::unique_ptr<torch::optim::Adam> critic_opt_;
  std::unique_ptr<torch::optim::Adam> actor_opt_;
  bool dynamic_alpha_ = false;
  double target_entropy_ = 0.0;
  double alpha_lr_ = 3e-4;
  torch::Tensor log_alpha_;
  double fixed_alpha_;
};

}  // namespace curio::agent
