#pragma once

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

namespace curio::fe {

// Diagonal Gaussian with strictly positive stddev; mean and std share shape,
// with the distribution dimension last.
struct DiagonalGaussian {
  torch::Tensor mean;
  torch::Tensor std;
};

// Modality order used everywhere a per-modality vector appears.
enum Modality : int {
  kVision = 0,
  kTouch = 1,
  kProprioception = 2,
  kCommandVoice = 3,
  kFeedbackVoice = 4,
  kNumModalities = 5,
};

const std::array<std::string, kNumModalities>& modality_names();

// Curiosity weights and agent coefficients. eta is indexed by the four
// explorable modalities (vision, touch, proprioception, feedback); the
// command voice never contributes curiosity.
struct IntrinsicConfig {
  double eta_vision = 0.0;
  double eta_touch = 0.0;
  double eta_proprioception = 0.0;
  double eta_feedback = 0.0;
  double alpha = 0.05;
  double gamma = 0.99;
  double tau = 0.005;

  double eta_for(Modality m) const;
  static IntrinsicConfig preset(const std::string& name);  // none, sensorimotor, all
};

// KL(q || p) for diagonal Gaussians, summed over the last dimension:
//   sum_i log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2.
// Throws std::invalid_argument on shape mismatch.
torch::Tensor kld_diag(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Scalar convenience overload for 1-D parameter lists.
double kld_diag(const std::vector<double>& mq, const std::vector<double>& sq,
                const std::vector<double>& mp, const std::vector<double>& sp);

// Unit-variance Gaussian negative log-likelihood with constants dropped:
// 0.5 * sum((target - pred)^2) over all trailing dims, keeping [B, T].
torch::Tensor gaussian_nll(const torch::Tensor& pred, const torch::Tensor& target);

// Categorical cross-entropy of one-hot targets against logits, summed over
// rows; logits [B, T, R, V], targets same shape, result [B, T].
torch::Tensor categorical_nll(const torch::Tensor& logits, const torch::Tensor& target);

// Per-modality pieces of the evidence free energy for one batch pass.
struct ModalityTerm {
  DiagonalGaussian posterior;
  DiagonalGaussian prior;
  torch::Tensor nll;   // [B, T] negative log-likelihood of the prediction
  double weight = 1.0;
};

// F = sum_i w_i * KLD_i + NLL_i, masked per step and averaged over the
// batch. mask is [B, T] in {0, 1}.
torch::Tensor evidence_free_energy(const std::vector<ModalityTerm>& terms,
                                   const torch::Tensor& mask);

// Intrinsic curiosity reward per step: sum_i eta_i * KLD_i, [B, T].
torch::Tensor curiosity(const std::array<torch::Tensor, kNumModalities>& kld_per_modality,
                        const IntrinsicConfig& config);

// Q-target: r + curiosity + alpha * entropy + gamma * (1 - done) * next_q.
torch::Tensor q_target(const torch::Tensor& reward, const torch::Tensor& curiosity,
                       const torch::Tensor& entropy, const torch::Tensor& next_q,
                       const torch::Tensor& done, double gamma, double alpha);
double q_target(double reward, double curiosity, double entropy, double next_q,
                double done, double gamma, double alpha);

}  // namespace curio::fe
