#include "curio/fe.hpp"

#include <stdexcept>

namespace curio::fe {

const std::array<std::string, kNumModalities>& modality_names() {
  static const std::array<std::string, kNumModalities> names = {
      "vision", "touch", "proprioception", "command", "feedback"};
  return names;
}

double IntrinsicConfig::eta_for(Modality m) const {
  switch (m) {
    case kVision: return eta_vision;
    case kTouch: return eta_touch;
    case kProprioception: return eta_proprioception;
    case kFeedbackVoice: return eta_feedback;
    default: return 0.0;
  }
}

IntrinsicConfig IntrinsicConfig::preset(const std::string& name) {
  IntrinsicConfig c;
  if (name == "none") {
    // all zero
  } else if (name == "sensorimotor") {
    c.eta_vision = 0.05;
    c.eta_touch = 2.0;
    c.eta_proprioception = 0.1;
  } else if (name == "all") {
    c.eta_vision = 0.05;
    c.eta_touch = 2.0;
    c.eta_proprioception = 0.1;
    c.eta_feedback = 0.3;
  } else {
    throw std::invalid_argument("unknown curiosity preset: " + name);
  }
  return c;
}

torch::Tensor kld_diag(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (!q.mean.sizes().equals(q.std.sizes()) || !p.mean.sizes().equals(p.std.sizes()) ||
      !q.mean.sizes().equals(p.mean.sizes()))
    throw std::invalid_argument("kld_diag: mismatched shapes");
  auto var_ratio = (q.std / p.std).pow(2);
  auto t1 = ((q.mean - p.mean) / p.std).pow(2);
  return 0.5 * (var_ratio + t1 - 1.0 - var_ratio.log()).sum(-1);
}

double kld_diag(const std::vector<double>& mq, const std::vector<double>& sq,
                const std::vector<double>& mp, const std::vector<double>& sp) {
  if (mq.size() != sq.size() || mp.size() != sp.size() || mq.size() != mp.size())
    throw std::invalid_argument("kld_diag: mismatched dimensions");
  auto as_tensor = [](const std::vector<double>& v) {
    return torch::from_blob(const_cast<double*>(v.data()),
                            {static_cast<long>(v.size())}, torch::kFloat64)
        .clone();
  };
  DiagonalGaussian q{as_tensor(mq), as_tensor(sq)};
  DiagonalGaussian p{as_tensor(mp), as_tensor(sp)};
  return kld_diag(q, p).item<double>();
}

torch::Tensor gaussian_nll(const torch::Tensor& pred, const torch::Tensor& target) {
  auto diff = target - pred;
  return 0.5 * diff.pow(2).flatten(2).sum(-1);
}

torch::Tensor categorical_nll(const torch::Tensor& logits, const torch::Tensor& target) {
  auto log_probs = torch::log_softmax(logits, -1);
  return -(target * log_probs).sum(-1).sum(-1);
}

torch::Tensor evidence_free_energy(const std::vector<ModalityTerm>& terms,
                                   const torch::Tensor& mask) {
  torch::Tensor total;
  for (const auto& term : terms) {
    auto kld = kld_diag(term.posterior, term.prior);
    auto per_step = term.weight * kld + term.nll;
    total = total.defined() ? total + per_step : per_step;
  }
  const auto batch = static_cast<double>(mask.size(0));
  return (total * mask).sum() / batch;
}

torch::Tensor curiosity(const std::array<torch::Tensor, kNumModalities>& kld_per_modality,
                        const IntrinsicConfig& config) {
  torch::Tensor total = torch::zeros_like(kld_per_modality[0]);
  for (int m = 0; m < kNumModalities; ++m) {
    const double eta = config.eta_for(static_cast<Modality>(m));
    if (eta > 0.0) total = total + eta * kld_per_modality[static_cast<size_t>(m)];
  }
  return total;
}

torch::Tensor q_target(const torch::Tensor& reward, const torch::Tensor& curiosity,
                       const torch::Tensor& entropy, const torch::Tensor& next_q,
                       const torch::Tensor& done, double gamma, double alpha) {
  return reward + curiosity + alpha * entropy + gamma * (1.0 - done) * next_q;
}

double q_target(double reward, double curiosity, double entropy, double next_q,
                double done, double gamma, double alpha) {
  return reward + curiosity + alpha * entropy + gamma * (1.0 - done) * next_q;
}

}  // namespace curio::fe
