#include <cmath>

#include "curio/agent.hpp"
#include "curio/fm.hpp"

#include "doctest_compat.hpp"

using namespace curio;

namespace {

torch::Generator gen_with_seed(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

// Quadrature oracle for the entropy of a 1-D tanh-squashed Gaussian:
// H = E_u[-log N(u) + log(1 - tanh(u)^2)].
double squashed_entropy_quadrature(double mean, double std) {
  const double lo = mean - 12.0 * std, hi = mean + 12.0 * std;
  const int n = 20000;
  const double h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = lo + i * h;
    const double z = (u - mean) / std;
    const double log_n = -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * 3.14159265358979323846);
    const double log_jac = std::log(std::max(1e-300, 1.0 - std::tanh(u) * std::tanh(u)));
    // -log pi(a) = -log N(u) + log |da/du|.
    const double integrand = std::exp(log_n) * (-log_n + log_jac);
    sum += (i == 0 || i == n) ? 0.5 * integrand : integrand;
  }
  return sum * h;
}

}  // namespace

TEST_CASE("actions stay within bounds and deterministic mode ignores the seed") {
  torch::manual_seed(21);
  const auto config = fm::ModelConfig::preset_config("micro");
  agent::Actor actor(config);
  auto h = torch::randn({32, config.hidden}, torch::kFloat64);
  auto g1 = gen_with_seed(1), g2 = gen_with_seed(999);
  const auto s1 = actor->sample(h, g1);
  CHECK((s1.action.abs() <= 1.0).all().item<bool>());
  const auto d1 = actor->deterministic(h);
  const auto d2 = actor->deterministic(h);
  CHECK(d1.equal(d2));
  CHECK((d1.abs() <= 1.0).all().item<bool>());
  auto s2 = actor->sample(h, g2);
  CHECK_FALSE(s1.action.equal(s2.action));  // different seeds explore differently
}

TEST_CASE("sampled log-probabilities match the quadrature entropy within 1%") {
  torch::manual_seed(22);
  const auto config = fm::ModelConfig::preset_config("micro");
  agent::Actor actor(config);
  auto h = torch::randn({1, config.hidden}, torch::kFloat64);
  const auto dist = actor->distribution(h);

  double quad = 0.0;
  for (int d = 0; d < 4; ++d)
    quad += squashed_entropy_quadrature(dist.mean[0][d].item<double>(),
                                        dist.std[0][d].item<double>());

  const int n = 100000;
  auto h_rep = h.expand({n, config.hidden});
  auto gen = gen_with_seed(12345);
  const auto sample = actor->sample(h_rep, gen);
  const double mc = -sample.log_prob.mean().item<double>();
  CHECK(std::abs(mc - quad) < std::max(0.01 * std::abs(quad), 0.02));
}

namespace {

struct Fixture {
  fm::ModelConfig config = fm::ModelConfig::preset_config("micro");
  torch::Tensor h, actions, rewards, dones, mask, curiosity;

  Fixture(double done_value = 0.0) {
    torch::manual_seed(23);
    const int b = 3, t = 4;
    h = torch::randn({b, t + 1, config.hidden}, torch::kFloat64);
    actions = torch::rand({b, t, 4}, torch::kFloat64) * 2.0 - 1.0;
    rewards = torch::rand({b, t}, torch::kFloat64);
    dones = torch::full({b, t}, done_value, torch::kFloat64);
    mask = torch::ones({b, t}, torch::kFloat64);
    mask[0][3] = 0.0;
    mask[2][2] = 0.0;
    mask[2][3] = 0.0;
    curiosity = torch::rand({b, t}, torch::kFloat64) * 0.1;
  }
};

}  // namespace

TEST_CASE("done steps exclude the bootstrap exactly") {
  const auto config = fm::ModelConfig::preset_config("micro");
  Fixture fx(1.0);  // every step terminal
  torch::manual_seed(24);
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("none"));
  const double loss_before =
      sac.critic_loss(fx.h, fx.actions, fx.rewards, fx.dones, fx.mask, fx.curiosity, 7).item<double>();
  {
    // Mangle the target critics; with done=1 everywhere the loss cannot move.
    torch::NoGradGuard no_grad;
    for (auto& p : sac.q1_target()->parameters()) p.add_(3.0);
    for (auto& p : sac.q2_target()->parameters()) p.add_(-2.0);
  }
  const double loss_after =
      sac.critic_loss(fx.h, fx.actions, fx.rewards, fx.dones, fx.mask, fx.curiosity, 7).item<double>();
  CHECK(loss_before == loss_after);

  // With done=0 the bootstrap flows and the same mangling moves the loss.
  Fixture fx0(0.0);
  torch::manual_seed(24);
  agent::SacAgent sac0(config, fe::IntrinsicConfig::preset("none"));
  const double a = sac0.critic_loss(fx0.h, fx0.actions, fx0.rewards, fx0.dones, fx0.mask,
                                    fx0.curiosity, 7)
                       .item<double>();
  {
    torch::NoGradGuard no_grad;
    for (auto& p : sac0.q1_target()->parameters()) p.add_(3.0);
    for (auto& p : sac0.q2_target()->parameters()) p.add_(-2.0);
  }
  const double b = sac0.critic_loss(fx0.h, fx0.actions, fx0.rewards, fx0.dones, fx0.mask,
                                    fx0.curiosity, 7)
                       .item<double>();
  CHECK(a != b);
}

TEST_CASE("with eta = 0 the target reduces to the entropy-regularized bootstrap") {
  const auto config = fm::ModelConfig::preset_config("micro");
  Fixture fx(0.0);
  torch::manual_seed(25);
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("none"));
  const auto zero_curiosity = torch::zeros_like(fx.curiosity);
  const double with_arg =
      sac.critic_loss(fx.h, fx.actions, fx.rewards, fx.dones, fx.mask, zero_curiosity, 7).item<double>();
  // Independent recomputation of the standard SAC target.
  torch::Tensor expected_loss;
  {
    torch::NoGradGuard no_grad;
    auto h_now = fx.h.narrow(1, 0, 4);
    auto h_next = fx.h.narrow(1, 1, 4);
    auto gen = gen_with_seed(7);
    const auto next = sac.actor()->sample(h_next, gen);
    auto q_next = torch::min(sac.q1_target()->forward(h_next, next.action),
                             sac.q2_target()->forward(h_next, next.action));
    auto target = fx.rewards + sac.intrinsic().alpha * (-next.log_prob) +
                  sac.intrinsic().gamma * (1.0 - fx.dones) * q_next;
    auto q1 = sac.q1()->forward(h_now, fx.actions);
    auto q2 = sac.q2()->forward(h_now, fx.actions);
    expected_loss =
        (((q1 - target).pow(2) + (q2 - target).pow(2)) * fx.mask).sum() / fx.mask.sum();
  }
  CHECK(with_arg == doctest::Approx(expected_loss.item<double>()).epsilon(1e-12));
}

TEST_CASE("critic loss gradient matches central finite differences") {
  const auto config = fm::ModelConfig::preset_config("micro");
  Fixture fx(0.0);
  torch::manual_seed(26);
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("all"));
  auto loss = sac.critic_loss(fx.h, fx.actions, fx.rewards, fx.dones, fx.mask, fx.curiosity, 11);
  sac.q1()->zero_grad();
  sac.q2()->zero_grad();
  loss.backward();

  const double eps = 1e-6;
  auto check_params = [&](agent::Critic& critic) {
    for (auto& p : critic->named_parameters()) {
      auto param = p.value();
      const auto numel = param.numel();
      for (int k = 0; k < 5; ++k) {
        const int64_t index = (k * 131 + 7) % numel;
        const double analytic = param.grad().flatten()[index].item<double>();
        auto flat = param.detach().flatten();
        const double orig = flat[index].item<double>();
        flat[index] = orig + eps;
        const double lp = sac.critic_loss(fx.h, fx.actions, fx.rewards, fx.dones, fx.mask,
                                          fx.curiosity, 11)
                              .item<double>();
        flat[index] = orig - eps;
        const double lm = sac.critic_loss(fx.h, fx.actions, fx.rewards, fx.dones, fx.mask,
                                          fx.curiosity, 11)
                              .item<double>();
        flat[index] = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double err = std::abs(numeric - analytic);
        CHECK(err <= std::max(1e-4 * std::max(std::abs(numeric), std::abs(analytic)), 1e-7));
      }
    }
  };
  check_params(sac.q1());
  check_params(sac.q2());
}

TEST_CASE("actor loss gradient matches central finite differences") {
  const auto config = fm::ModelConfig::preset_config("micro");
  Fixture fx(0.0);
  torch::manual_seed(27);
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("all"));
  auto loss = sac.actor_loss(fx.h, fx.mask, 13);
  sac.actor()->zero_grad();
  loss.backward();

  const double eps = 1e-6;
  for (auto& p : sac.actor()->named_parameters()) {
    auto param = p.value();
    const auto numel = param.numel();
    for (int k = 0; k < 5; ++k) {
      const int64_t index = (k * 131 + 3) % numel;
      const double analytic = param.grad().flatten()[index].item<double>();
      auto flat = param.detach().flatten();
      const double orig = flat[index].item<double>();
      flat[index] = orig + eps;
      const double lp = sac.actor_loss(fx.h, fx.mask, 13).item<double>();
      flat[index] = orig - eps;
      const double lm = sac.actor_loss(fx.h, fx.mask, 13).item<double>();
      flat[index] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double err = std::abs(numeric - analytic);
      CHECK(err <= std::max(1e-4 * std::max(std::abs(numeric), std::abs(analytic)), 1e-7));
    }
  }
}

TEST_CASE("actor updates leave the critics untouched and decrease the loss") {
  const auto config = fm::ModelConfig::preset_config("micro");
  Fixture fx(0.0);
  torch::manual_seed(28);
  agent::SacAgent sac(config, fe::IntrinsicConfig::preset("none"));
  std::vector<torch::Tensor> critic_copy;
  for (auto& p : sac.q1()->parameters()) critic_copy.push_back(p.detach().clone());
  for (auto& p : sac.q2()->parameters()) critic_copy.push_back(p.detach().clone());

  const double first = sac.actor_loss(fx.h, fx.mask, 99).item<double>();
  for (int i = 0; i < 50; ++i) sac.actor_update(fx.h, fx.mask, 99);
  const double last = sac.actor_loss(fx.h, fx.mask, 99).item<double>();
  CHECK(last < first);

  size_t i = 0;
  for (auto& p : sac.q1()->parameters()) CHECK(p.equal(critic_copy[i++]));
  for (auto& p : sac.q2()->parameters()) CHECK(p.equal(critic_copy[i++]));
}

TEST_CASE("alpha = 0 removes the entropy contribution bitwise") {
  const auto config = fm::ModelConfig::preset_config("micro");
  Fixture fx(0.0);
  torch::manual_seed(29);
  auto intrinsic = fe::IntrinsicConfig::preset("none");
  intrinsic.alpha = 0.0;
  agent::SacAgent sac(config, intrinsic);
  const double loss = sac.actor_loss(fx.h, fx.mask, 31).item<double>();
  // Manual recomputation without any entropy term.
  auto h_now = fx.h.narrow(1, 0, 4);
  auto gen = gen_with_seed(31);
  const auto sample = sac.actor()->sample(h_now, gen);
  auto q = torch::min(sac.q1()->forward(h_now, sample.action),
                      sac.q2()->forward(h_now, sample.action));
  const double expected = ((-q * fx.mask).sum() / fx.mask.sum()).item<double>();
  CHECK(loss == expected);
}

TEST_CASE("polyak averaging blends targets toward the critics") {
  const auto config = fm::ModelConfig::preset_config("micro");
  torch::manual_seed(30);
  auto intrinsic = fe::IntrinsicConfig::preset("none");

  SUBCASE("targets start equal to the critics") {
    agent::SacAgent sac(config, intrinsic);
    auto q1 = sac.q1()->parameters();
    auto t1 = sac.q1_target()->parameters();
    for (size_t i = 0; i < q1.size(); ++i) CHECK(q1[i].equal(t1[i]));
  }

  SUBCASE("tau = 1 copies, tau = 0 freezes, tau = 0.005 blends") {
    agent::SacAgent sac(config, intrinsic);
    {
      torch::NoGradGuard no_grad;
      for (auto& p : sac.q1()->parameters()) p.add_(1.0);
    }
    std::vector<torch::Tensor> target_before, critic_now;
    for (auto& p : sac.q1_target()->parameters()) target_before.push_back(p.detach().clone());
    for (auto& p : sac.q1()->parameters()) critic_now.push_back(p.detach().clone());

    sac.polyak_update(0.0);
    {
      size_t i = 0;
      for (auto& p : sac.q1_target()->parameters()) CHECK(p.equal(target_before[i++]));
    }
    sac.polyak_update(0.005);
    {
      size_t i = 0;
      for (auto& p : sac.q1_target()->parameters()) {
        auto expected = 0.005 * critic_now[i] + 0.995 * target_before[i];
        CHECK((p - expected).abs().max().item<double>() < 1e-14);
        ++i;
      }
    }
    sac.polyak_update(1.0);
    {
      size_t i = 0;
      for (auto& p : sac.q1_target()->parameters()) CHECK(p.equal(critic_now[i++]));
    }
  }

  SUBCASE("target lag shrinks by (1 - tau)^k with frozen critics") {
    agent::SacAgent sac(config, intrinsic);
    {
      torch::NoGradGuard no_grad;
      for (auto& p : sac.q1()->parameters()) p.add_(0.5);
    }
    auto gap = [&sac]() {
      double sum = 0.0;
      auto q = sac.q1()->parameters();
      auto t = sac.q1_target()->parameters();
      for (size_t i = 0; i < q.size(); ++i) sum += (q[i] - t[i]).pow(2).sum().item<double>();
      return std::sqrt(sum);
    };
    const double g0 = gap();
    const double tau = 0.01;
    const int k = 25;
    for (int i = 0; i < k; ++i) sac.polyak_update(tau);
    CHECK(gap() == doctest::Approx(g0 * std::pow(1.0 - tau, k)).epsilon(1e-9));
  }
}

TEST_CASE("dynamic alpha moves against the entropy gap and fixed alpha stays put") {
  const auto config = fm::ModelConfig::preset_config("micro");
  torch::manual_seed(31);
  auto intrinsic = fe::IntrinsicConfig::preset("none");
  intrinsic.alpha = 0.05;

  agent::SacAgent fixed(config, intrinsic);
  const double before = fixed.alpha();
  fixed.alpha_update(10.0);
  fixed.alpha_update(-10.0);
  CHECK(fixed.alpha() == before);

  agent::SacAgent dynamic(config, intrinsic);
  dynamic.enable_dynamic_alpha(/*target_entropy=*/-4.0, /*lr=*/0.1);
  const double a0 = dynamic.alpha();
  dynamic.alpha_update(0.0);  // entropy above target -> alpha decreases
  const double a1 = dynamic.alpha();
  CHECK(a1 < a0);
  dynamic.alpha_update(-8.0);  // entropy below target -> alpha increases
  const double a2 = dynamic.alpha();
  CHECK(a2 > a1);
}
