#include "curio/agent.hpp"

#include <cmath>

namespace curio::agent {

namespace {
const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);
constexpr double kLog2 = 0.6931471805599453;

torch::Generator make_gen(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

// log(1 - tanh(u)^2) in a numerically stable form.
torch::Tensor log_one_minus_tanh_sq(const torch::Tensor& u) {
  return 2.0 * (kLog2 - u - torch::softplus(-2.0 * u));
}

torch::Tensor gaussian_log_prob(const torch::Tensor& u, const fe::DiagonalGaussian& dist) {
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * 3.14159265358979323846);
  auto z = (u - dist.mean) / dist.std;
  return (-0.5 * z * z - dist.std.log() - log_sqrt_2pi).sum(-1);
}

}  // namespace

ActorImpl::ActorImpl(const fm::ModelConfig& config) : sigma_floor_(config.sigma_floor) {
  l1_ = register_module("l1", torch::nn::Linear(config.hidden, config.actor_hidden));
  l2_ = register_module("l2", torch::nn::Linear(config.actor_hidden, config.actor_hidden));
  mean_ = register_module("mean", torch::nn::Linear(config.actor_hidden, 4));
  std_ = register_module("std", torch::nn::Linear(config.actor_hidden, 4));
  {
    // Small output heads: commands start near zero with modest noise, and the
    // entropy bonus widens the policy from there.
    torch::NoGradGuard no_grad;
    torch::nn::init::uniform_(mean_->weight, -0.01, 0.01);
    torch::nn::init::zeros_(mean_->bias);
    torch::nn::init::uniform_(std_->weight, -0.01, 0.01);
    torch::nn::init::constant_(std_->bias, -3.0);
  }
  this->to(torch::kFloat64);
}

fe::DiagonalGaussian ActorImpl::distribution(const torch::Tensor& h) {
  auto x = torch::relu(l1_(h));
  x = torch::relu(l2_(x));
  return {mean_(x), torch::softplus(std_(x)) + sigma_floor_};
}

ActorImpl::Sample ActorImpl::sample(const torch::Tensor& h, torch::Generator& gen) {
  auto dist = distribution(h);
  auto eps = torch::randn(dist.mean.sizes(), gen, kF64);
  auto u = dist.mean + dist.std * eps;
  Sample s;
  s.action = torch::tanh(u);
  s.log_prob = gaussian_log_prob(u, dist) - log_one_minus_tanh_sq(u).sum(-1);
  return s;
}

torch::Tensor ActorImpl::deterministic(const torch::Tensor& h) {
  return torch::tanh(distribution(h).mean);
}

torch::Tensor ActorImpl::log_prob_of(const torch::Tensor& h, const torch::Tensor& u) {
  auto dist = distribution(h);
  return gaussian_log_prob(u, dist) - log_one_minus_tanh_sq(u).sum(-1);
}

CriticImpl::CriticImpl(const fm::ModelConfig& config) {
  l1_ = register_module("l1", torch::nn::Linear(config.hidden + 4, config.critic_hidden));
  l2_ = register_module("l2", torch::nn::Linear(config.critic_hidden, config.critic_hidden));
  out_ = register_module("out", torch::nn::Linear(config.critic_hidden, 1));
  this->to(torch::kFloat64);
}

torch::Tensor CriticImpl::forward(const torch::Tensor& h, const torch::Tensor& action) {
  auto x = torch::cat({h, action}, -1);
  x = torch::relu(l1_(x));
  x = torch::relu(l2_(x));
  return out_(x).squeeze(-1);
}

SacAgent::SacAgent(const fm::ModelConfig& config, const fe::IntrinsicConfig& intrinsic)
    : intrinsic_(intrinsic),
      actor_(config),
      q1_(config),
      q2_(config),
      q1_target_(config),
      q2_target_(config),
      fixed_alpha_(intrinsic.alpha) {
  // Targets start identical to the critics.
  torch::NoGradGuard no_grad;
  auto src1 = q1_->parameters();
  auto dst1 = q1_target_->parameters();
  for (size_t i = 0; i < src1.size(); ++i) dst1[i].copy_(src1[i]);
  auto src2 = q2_->parameters();
  auto dst2 = q2_target_->parameters();
  for (size_t i = 0; i < src2.size(); ++i) dst2[i].copy_(src2[i]);
  for (auto& p : q1_target_->parameters()) p.set_requires_grad(false);
  for (auto& p : q2_target_->parameters()) p.set_requires_grad(false);

  std::vector<torch::Tensor> critic_params = q1_->parameters();
  for (auto& p : q2_->parameters()) critic_params.push_back(p);
  critic_opt_ = std::make_unique<torch::optim::Adam>(critic_params,
                                                     torch::optim::AdamOptions(config.agent_lr));
  actor_opt_ = std::make_unique<torch::optim::Adam>(actor_->parameters(),
                                                    torch::optim::AdamOptions(config.agent_lr));
  log_alpha_ = torch::log(torch::tensor(std::max(intrinsic.alpha, 1e-8), kF64));
}

double SacAgent::alpha() const {
  return dynamic_alpha_ ? std::exp(log_alpha_.item<double>()) : fixed_alpha_;
}

void SacAgent::enable_dynamic_alpha(double target_entropy, double lr) {
  dynamic_alpha_ = true;
  target_entropy_ = target_entropy;
  alpha_lr_ = lr;
}

double SacAgent::alpha_update(double measured_entropy) {
  if (!dynamic_alpha_) return alpha();
  // d loss / d log_alpha = entropy - target: entropy above target shrinks
  // alpha, entropy below target grows it.
  const double grad = measured_entropy - target_entropy_;
  log_alpha_ -= alpha_lr_ * grad;
  return alpha();
}

torch::Tensor SacAgent::critic_loss(const torch::Tensor& h, const torch::Tensor& actions,
                                    const torch::Tensor& rewards, const torch::Tensor& dones,
                                    const torch::Tensor& mask, const torch::Tensor& curiosity,
                                    uint64_t noise_seed) {
  const auto t_steps = actions.size(1);
  auto h_now = h.narrow(1, 0, t_steps);
  auto h_next = h.narrow(1, 1, t_steps);

  torch::Tensor target;
  {
    torch::NoGradGuard no_grad;
    auto gen = make_gen(noise_seed);
    auto next = actor_->sample(h_next, gen);
    auto q_next = torch::min(q1_target_->forward(h_next, next.action),
                             q2_target_->forward(h_next, next.action));
    auto entropy = -next.log_prob;
    target = fe::q_target(rewards, curiosity, entropy, q_next, dones, intrinsic_.gamma, alpha());
  }

  auto q1 = q1_->forward(h_now, actions);
  auto q2 = q2_->forward(h_now, actions);
  const auto denom = mask.sum().clamp_min(1.0);
  return (((q1 - target).pow(2) + (q2 - target).pow(2)) * mask).sum() / denom;
}

CriticLosses SacAgent::critic_update(const torch::Tensor& h, const torch::Tensor& actions,
                                     const torch::Tensor& rewards, const torch::Tensor& dones,
                                     const torch::Tensor& mask, const torch::Tensor& curiosity,
                                     uint64_t noise_seed) {
  auto loss = critic_loss(h, actions, rewards, dones, mask, curiosity, noise_seed);
  if (!std::isfinite(loss.item<double>())) throw fm::NonFiniteLoss("critic loss is not finite");
  critic_opt_->zero_grad();
  loss.backward();
  critic_opt_->step();
  CriticLosses out;
  out.q1 = out.q2 = loss.item<double>() / 2.0;
  return out;
}

torch::Tensor SacAgent::actor_loss(const torch::Tensor& h, const torch::Tensor& mask,
                                   uint64_t noise_seed, double* mean_entropy) {
  const auto t_steps = mask.size(1);
  auto h_now = h.narrow(1, 0, t_steps);
  auto gen = make_gen(noise_seed);
  auto sample = actor_->sample(h_now, gen);
  auto q = torch::min(q1_->forward(h_now, sample.action), q2_->forward(h_now, sample.action));
  const auto denom = mask.sum().clamp_min(1.0);
  auto loss = ((alpha() * sample.log_prob - q) * mask).sum() / denom;
  if (mean_entropy) {
    torch::NoGradGuard no_grad;
    *mean_entropy = (-sample.log_prob * mask).sum().item<double>() / denom.item<double>();
  }
  return loss;
}

ActorLosses SacAgent::actor_update(const torch::Tensor& h, const torch::Tensor& mask,
                                   uint64_t noise_seed) {
  ActorLosses out;
  auto loss = actor_loss(h, mask, noise_seed, &out.mean_entropy);
  if (!std::isfinite(loss.item<double>())) throw fm::NonFiniteLoss("actor loss is not finite");
  actor_opt_->zero_grad();
  loss.backward();
  actor_opt_->step();
  out.loss = loss.item<double>();
  return out;
}

void SacAgent::polyak_update() { polyak_update(intrinsic_.tau); }

void SacAgent::polyak_update(double tau) {
  torch::NoGradGuard no_grad;
  auto blend = [tau](Critic& src, Critic& dst) {
    auto s = src->parameters();
    auto d = dst->parameters();
    for (size_t i = 0; i < s.size(); ++i) d[i].mul_(1.0 - tau).add_(s[i], tau);
  };
  blend(q1_, q1_target_);
  blend(q2_, q2_target_);
}

}  // namespace curio::agent
