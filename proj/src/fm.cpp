#include "curio/fm.hpp"

#include <ATen/core/Generator.h>

#include <cmath>
#include <stdexcept>

namespace curio::fm {

namespace {
const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

torch::nn::PReLU make_prelu() {
  return torch::nn::PReLU(torch::nn::PReLUOptions().num_parameters(1).init(0.25));
}

torch::Generator make_gen(uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return gen;
}
}  // namespace

int ModelConfig::z_total() const {
  int total = 0;
  for (int d : latent) total += d;
  return total;
}

ModelConfig ModelConfig::preset_config(const std::string& name) {
  ModelConfig c;
  c.preset = name;
  if (name == "full") return c;
  if (name == "tiny") {
    c.vision_size = 8;
    c.vision_enc_out = 64;
    c.vision_dec_channels = 32;
    c.touch_enc_out = 10;
    c.proprio_enc_out = 4;
    c.voice_embed = 4;
    c.voice_hidden = 32;
    c.voice_enc_out = 128;
    c.voice_dec_hidden = 32;
    c.hidden = 128;
    c.action_enc_out = 4;
    c.head_hidden = 32;
    c.latent = {8, 4, 4, 8, 8};
    c.actor_hidden = 128;
    c.critic_hidden = 128;
    return c;
  }
  if (name == "micro") {
    c.vision_size = 4;
    c.vision_enc_out = 8;
    c.vision_dec_channels = 8;
    c.touch_enc_out = 4;
    c.proprio_enc_out = 3;
    c.voice_embed = 3;
    c.voice_hidden = 6;
    c.voice_enc_out = 12;
    c.voice_dec_hidden = 8;
    c.hidden = 16;
    c.action_enc_out = 3;
    c.head_hidden = 8;
    c.latent = {3, 2, 2, 3, 3};
    c.actor_hidden = 12;
    c.critic_hidden = 12;
    return c;
  }
  throw std::invalid_argument("unknown model preset: " + name);
}

MaskedBatchNorm1dImpl::MaskedBatchNorm1dImpl(int features, double eps, double momentum)
    : eps_(eps), momentum_(momentum) {
  weight = register_parameter("weight", torch::ones({features}, kF64));
  bias = register_parameter("bias", torch::zeros({features}, kF64));
  running_mean = register_buffer("running_mean", torch::zeros({features}, kF64));
  running_var = register_buffer("running_var", torch::ones({features}, kF64));
}

torch::Tensor MaskedBatchNorm1dImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                             bool train_mode) {
  torch::Tensor mean, var;
  if (train_mode) {
    if (mask.defined()) {
      const auto w = mask.unsqueeze(1);
      const auto n = w.sum();
      mean = (x * w).sum(0) / n;
      var = ((x - mean).pow(2) * w).sum(0) / n;
      const double count = n.item<double>();
      torch::NoGradGuard no_grad;
      const double correction = count > 1.5 ? count / (count - 1.0) : 1.0;
      running_mean.mul_(1.0 - momentum_).add_(mean.detach(), momentum_);
      running_var.mul_(1.0 - momentum_).add_(var.detach() * correction, momentum_);
    } else {
      mean = x.mean(0);
      var = x.var(0, /*unbiased=*/false);
      const auto count = static_cast<double>(x.size(0));
      torch::NoGradGuard no_grad;
      const double correction = count > 1.5 ? count / (count - 1.0) : 1.0;
      running_mean.mul_(1.0 - momentum_).add_(mean.detach(), momentum_);
      running_var.mul_(1.0 - momentum_).add_(var.detach() * correction, momentum_);
    }
  } else {
    mean = running_mean;
    var = running_var;
  }
  return weight * (x - mean) / torch::sqrt(var + eps_) + bias;
}

VoiceEncoderImpl::VoiceEncoderImpl(const ModelConfig& config) {
  embed = register_module("embed", torch::nn::Linear(torch::nn::LinearOptions(lang::kVocabSize, config.voice_embed).bias(false)));
  lin = register_module("lin", torch::nn::Linear(config.voice_embed, config.voice_hidden));
  gru = register_module("gru", torch::nn::GRUCell(torch::nn::GRUCellOptions(config.voice_hidden, config.voice_hidden)));
  out = register_module("out", torch::nn::Linear(config.voice_hidden, config.voice_enc_out));
  embed_act = register_module("embed_act", make_prelu());
  lin_act = register_module("lin_act", make_prelu());
  gru_act = register_module("gru_act", make_prelu());
  out_act = register_module("out_act", make_prelu());
}

torch::Tensor VoiceEncoderImpl::forward(const torch::Tensor& tokens, const torch::Tensor& lengths) {
  const auto n = tokens.size(0);
  auto e = embed_act(embed(tokens));             // [N, 3, emb]
  auto l = lin_act(lin(e));                      // [N, 3, Hv]
  auto h = torch::zeros({n, l.size(2)}, kF64);
  std::vector<torch::Tensor> outs;
  for (int t = 0; t < lang::kSentenceTokens; ++t) {
    h = gru(l.select(1, t), h);
    outs.push_back(gru_act(h));
  }
  auto stacked = torch::stack(outs, 1);  // [N, 3, Hv]
  auto idx = (lengths.to(torch::kLong) - 1)
                 .clamp(0, lang::kSentenceTokens - 1)
                 .view({n, 1, 1})
                 .expand({n, 1, stacked.size(2)});
  auto selected = stacked.gather(1, idx).squeeze(1);  // [N, Hv]
  return out_act(out(selected));
}

VoiceDecoderImpl::VoiceDecoderImpl(const ModelConfig& config) {
  lin = register_module("lin", torch::nn::Linear(config.hidden + config.action_enc_out,
                                                 lang::kSentenceTokens * config.voice_dec_hidden));
  bn = register_module("bn", MaskedBatchNorm1d(lang::kSentenceTokens * config.voice_dec_hidden));
  act = register_module("act", make_prelu());
  gru = register_module("gru", torch::nn::GRUCell(torch::nn::GRUCellOptions(config.voice_dec_hidden, config.voice_dec_hidden)));
  gru_act = register_module("gru_act", make_prelu());
  out = register_module("out", torch::nn::Linear(config.voice_dec_hidden, lang::kVocabSize));
}

torch::Tensor VoiceDecoderImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                        bool train_mode) {
  const auto n = x.size(0);
  auto y = act(bn->forward(lin(x), mask, train_mode));
  y = y.view({n, lang::kSentenceTokens, -1});
  auto h = torch::zeros({n, y.size(2)}, kF64);
  std::vector<torch::Tensor> rows;
  for (int t = 0; t < lang::kSentenceTokens; ++t) {
    h = gru(y.select(1, t), h);
    rows.push_back(out(gru_act(h)));
  }
  return torch::stack(rows, 1);  // [N, 3, 18]
}

ObsTensors tensorize(const env::ObservationBundle& obs, const ModelConfig& config) {
  ObsTensors t;
  auto vision16 = torch::from_blob(const_cast<double*>(obs.vision.data()), {16, 16, 4}, kF64)
                      .permute({2, 0, 1})
                      .contiguous();
  if (config.vision_pool() > 1) {
    vision16 = torch::avg_pool2d(vision16.unsqueeze(0), config.vision_pool()).squeeze(0);
  }
  t.vision = vision16.clone();
  t.touch = torch::from_blob(const_cast<double*>(obs.touch.data()), {env::kTouchSensors}, kF64).clone();
  t.proprio =
      torch::from_blob(const_cast<double*>(obs.proprioception.data()), {env::kProprioDims}, kF64).clone();
  t.command = torch::zeros({lang::kSentenceTokens, lang::kVocabSize}, kF64);
  for (int r = 0; r < static_cast<int>(obs.command_voice.size()) && r < 3; ++r)
    for (int v = 0; v < lang::kVocabSize; ++v)
      t.command[r][v] = obs.command_voice[static_cast<size_t>(r)][static_cast<size_t>(v)];
  t.feedback = torch::zeros({lang::kSentenceTokens, lang::kVocabSize}, kF64);
  const bool silent = obs.feedback_voice.size() == 1;
  // Shorter feedback is padded to the fixed width with silence rows; the
  // original length travels alongside for the encoder.
  for (int r = 0; r < 3; ++r) {
    if (r < static_cast<int>(obs.feedback_voice.size())) {
      for (int v = 0; v < lang::kVocabSize; ++v)
        t.feedback[r][v] = obs.feedback_voice[static_cast<size_t>(r)][static_cast<size_t>(v)];
    } else {
      t.feedback[r][lang::kSilenceIndex] = 1.0;
    }
  }
  t.feedback_len = torch::tensor(silent ? 1.0 : 3.0, kF64);
  return t;
}

Batch make_batch(const std::vector<const replay::Episode*>& episodes, const ModelConfig& config,
                 int padded_steps) {
  const int b = static_cast<int>(episodes.size());
  const int steps = padded_steps;
  Batch batch;
  auto vision16 = torch::zeros({b, steps + 1, 4, 16, 16}, kF64);
  batch.obs.touch = torch::zeros({b, steps + 1, env::kTouchSensors}, kF64);
  batch.obs.proprio = torch::zeros({b, steps + 1, env::kProprioDims}, kF64);
  batch.obs.command = torch::zeros({b, steps + 1, 3, lang::kVocabSize}, kF64);
  batch.obs.feedback = torch::zeros({b, steps + 1, 3, lang::kVocabSize}, kF64);
  batch.obs.feedback_len = torch::ones({b, steps + 1}, kF64);
  batch.actions = torch::zeros({b, steps, 4}, kF64);
  batch.prev_actions = torch::zeros({b, steps + 1, 4}, kF64);
  batch.rewards = torch::zeros({b, steps}, kF64);
  batch.dones = torch::zeros({b, steps}, kF64);
  batch.mask = torch::zeros({b, steps}, kF64);
  batch.obs_mask = torch::zeros({b, steps + 1}, kF64);

  auto vis = vision16.accessor<double, 5>();
  auto touch = batch.obs.touch.accessor<double, 3>();
  auto proprio = batch.obs.proprio.accessor<double, 3>();
  auto command = batch.obs.command.accessor<double, 4>();
  auto feedback = batch.obs.feedback.accessor<double, 4>();
  auto feedback_len = batch.obs.feedback_len.accessor<double, 2>();
  auto actions = batch.actions.accessor<double, 3>();
  auto prev_actions = batch.prev_actions.accessor<double, 3>();
  auto rewards = batch.rewards.accessor<double, 2>();
  auto dones = batch.dones.accessor<double, 2>();
  auto mask = batch.mask.accessor<double, 2>();
  auto obs_mask = batch.obs_mask.accessor<double, 2>();

  for (int i = 0; i < b; ++i) {
    const auto& ep = *episodes[static_cast<size_t>(i)];
    const int len = ep.length();
    for (int t = 0; t <= len; ++t) {
      const auto& obs = ep.observations[static_cast<size_t>(t)];
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
          for (int ch = 0; ch < 4; ++ch)
            vis[i][t][ch][r][c] = obs.vision[static_cast<size_t>((r * 16 + c) * 4 + ch)];
      for (int k = 0; k < env::kTouchSensors; ++k) touch[i][t][k] = obs.touch[static_cast<size_t>(k)];
      for (int k = 0; k < env::kProprioDims; ++k)
        proprio[i][t][k] = obs.proprioception[static_cast<size_t>(k)];
      for (int r = 0; r < 3; ++r)
        for (int v = 0; v < lang::kVocabSize; ++v)
          command[i][t][r][v] = obs.command_voice[static_cast<size_t>(r)][static_cast<size_t>(v)];
      const int fb_rows = static_cast<int>(obs.feedback_voice.size());
      for (int r = 0; r < 3; ++r) {
        if (r < fb_rows) {
          for (int v = 0; v < lang::kVocabSize; ++v)
            feedback[i][t][r][v] = obs.feedback_voice[static_cast<size_t>(r)][static_cast<size_t>(v)];
        } else {
          feedback[i][t][r][lang::kSilenceIndex] = 1.0;
        }
      }
      feedback_len[i][t] = fb_rows == 1 ? 1.0 : 3.0;
      obs_mask[i][t] = 1.0;
    }
    for (int t = 0; t < len; ++t) {
      for (int k = 0; k < 4; ++k) {
        actions[i][t][k] = ep.actions[static_cast<size_t>(t)][static_cast<size_t>(k)];
        prev_actions[i][t + 1][k] = ep.actions[static_cast<size_t>(t)][static_cast<size_t>(k)];
      }
      rewards[i][t] = ep.rewards[static_cast<size_t>(t)];
      dones[i][t] = ep.dones[static_cast<size_t>(t)];
      mask[i][t] = 1.0;
    }
  }

  if (config.vision_pool() > 1) {
    const int s = config.vision_size;
    batch.obs.vision = torch::avg_pool2d(vision16.reshape({b * (steps + 1), 4, 16, 16}),
                                         config.vision_pool())
                           .reshape({b, steps + 1, 4, s, s});
  } else {
    batch.obs.vision = vision16;
  }
  return batch;
}

ForwardModelImpl::ForwardModelImpl(const ModelConfig& config) : config_(config) {
  const int ha = config.hidden + config.action_enc_out;

  vision_enc_ = register_module("vision_enc", torch::nn::Linear(config.vision_flat(), config.vision_enc_out));
  vision_enc_act_ = register_module("vision_enc_act", make_prelu());
  touch_enc_ = register_module("touch_enc", torch::nn::Linear(env::kTouchSensors, config.touch_enc_out));
  touch_enc_bn_ = register_module("touch_enc_bn", MaskedBatchNorm1d(config.touch_enc_out));
  touch_enc_act_ = register_module("touch_enc_act", make_prelu());
  proprio_enc_ = register_module("proprio_enc", torch::nn::Linear(env::kProprioDims, config.proprio_enc_out));
  proprio_enc_bn_ = register_module("proprio_enc_bn", MaskedBatchNorm1d(config.proprio_enc_out));
  proprio_enc_act_ = register_module("proprio_enc_act", make_prelu());
  voice_enc_ = register_module("voice_enc", VoiceEncoder(config));
  action_enc_ = register_module("action_enc", torch::nn::Linear(4, config.action_enc_out));
  action_enc_act_ = register_module("action_enc_act", make_prelu());

  const std::array<int, fe::kNumModalities> enc_out = {config.vision_enc_out, config.touch_enc_out,
                                                       config.proprio_enc_out, config.voice_enc_out,
                                                       config.voice_enc_out};
  for (int m = 0; m < fe::kNumModalities; ++m) {
    const auto& name = fe::modality_names()[static_cast<size_t>(m)];
    const int d = config.latent[static_cast<size_t>(m)];
    prior_l1_[static_cast<size_t>(m)] =
        register_module("prior_l1_" + name, torch::nn::Linear(ha, config.head_hidden));
    prior_act_[static_cast<size_t>(m)] = register_module("prior_act_" + name, make_prelu());
    prior_l2_[static_cast<size_t>(m)] =
        register_module("prior_l2_" + name, torch::nn::Linear(config.head_hidden, 2 * d));
    post_l1_[static_cast<size_t>(m)] = register_module(
        "post_l1_" + name, torch::nn::Linear(ha + enc_out[static_cast<size_t>(m)], config.head_hidden));
    post_act_[static_cast<size_t>(m)] = register_module("post_act_" + name, make_prelu());
    post_l2_[static_cast<size_t>(m)] =
        register_module("post_l2_" + name, torch::nn::Linear(config.head_hidden, 2 * d));
  }

  core_ = register_module("core", torch::nn::GRUCell(torch::nn::GRUCellOptions(config.z_total(), config.hidden)));

  const int g = config.vision_dec_grid();
  vision_dec_ = register_module("vision_dec", torch::nn::Linear(ha, g * g * config.vision_dec_channels));
  vision_dec_bn_ = register_module("vision_dec_bn", MaskedBatchNorm1d(g * g * config.vision_dec_channels));
  vision_dec_act_ = register_module("vision_dec_act", make_prelu());
  vision_dec_conv_ = register_module(
      "vision_dec_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(config.vision_dec_channels, 16, 3)
                                               .padding(1)
                                               .padding_mode(torch::kReflect)));
  touch_dec_ = register_module("touch_dec", torch::nn::Linear(ha, env::kTouchSensors));
  touch_dec_bn_ = register_module("touch_dec_bn", MaskedBatchNorm1d(env::kTouchSensors));
  proprio_dec_ = register_module("proprio_dec", torch::nn::Linear(ha, env::kProprioDims));
  proprio_dec_bn_ = register_module("proprio_dec_bn", MaskedBatchNorm1d(env::kProprioDims));
  command_dec_ = register_module("command_dec", VoiceDecoder(config));
  feedback_dec_ = register_module("feedback_dec", VoiceDecoder(config));

  this->to(torch::kFloat64);
}

torch::Tensor ForwardModelImpl::encode_action(const torch::Tensor& action) {
  return action_enc_act_(action_enc_(action));
}

torch::Tensor ForwardModelImpl::encode_voice(const torch::Tensor& tokens, const torch::Tensor& lengths) {
  return voice_enc_->forward(tokens, lengths);
}

std::array<torch::Tensor, fe::kNumModalities> ForwardModelImpl::encode_all(
    const ObsTensors& obs, const torch::Tensor& obs_mask, bool train_mode) {
  const auto n = obs.touch.numel() / env::kTouchSensors;
  const int s = config_.vision_size;
  auto vision_flat = obs.vision.reshape({n, 4 * s * s});
  auto touch_flat = obs.touch.reshape({n, env::kTouchSensors});
  auto proprio_flat = obs.proprio.reshape({n, env::kProprioDims});
  auto command_flat = obs.command.reshape({n, 3, lang::kVocabSize});
  auto feedback_flat = obs.feedback.reshape({n, 3, lang::kVocabSize});
  auto lengths_flat = obs.feedback_len.reshape({n});
  auto command_lengths = torch::full({n}, 3.0, kF64);

  std::array<torch::Tensor, fe::kNumModalities> enc;
  enc[fe::kVision] = vision_enc_act_(vision_enc_(vision_flat));
  enc[fe::kTouch] = touch_enc_act_(touch_enc_bn_->forward(touch_enc_(touch_flat), obs_mask, train_mode));
  enc[fe::kProprioception] =
      proprio_enc_act_(proprio_enc_bn_->forward(proprio_enc_(proprio_flat), obs_mask, train_mode));
  enc[fe::kCommandVoice] = voice_enc_->forward(command_flat, command_lengths);
  enc[fe::kFeedbackVoice] = voice_enc_->forward(feedback_flat, lengths_flat);
  return enc;
}

fe::DiagonalGaussian ForwardModelImpl::head_forward(torch::nn::Linear& l1, torch::nn::PReLU& act,
                                                    torch::nn::Linear& l2, const torch::Tensor& input) {
  auto out = l2(act(l1(input)));
  auto chunks = out.chunk(2, -1);
  return {chunks[0], torch::softplus(chunks[1]) + config_.sigma_floor};
}

std::array<fe::DiagonalGaussian, fe::kNumModalities> ForwardModelImpl::compute_prior(
    const torch::Tensor& h_prev, const torch::Tensor& action_enc) {
  std::array<fe::DiagonalGaussian, fe::kNumModalities> out;
  auto input = torch::cat({h_prev, action_enc}, -1);
  for (int m = 0; m < fe::kNumModalities; ++m) {
    out[static_cast<size_t>(m)] =
        head_forward(prior_l1_[static_cast<size_t>(m)], prior_act_[static_cast<size_t>(m)],
                     prior_l2_[static_cast<size_t>(m)], input);
  }
  return out;
}

fe::DiagonalGaussian ForwardModelImpl::compute_posterior(const torch::Tensor& h_prev,
                                                         const torch::Tensor& action_enc,
                                                         const torch::Tensor& obs_enc, int modality) {
  auto input = torch::cat({h_prev, action_enc, obs_enc}, -1);
  return head_forward(post_l1_[static_cast<size_t>(modality)], post_act_[static_cast<size_t>(modality)],
                      post_l2_[static_cast<size_t>(modality)], input);
}

torch::Tensor ForwardModelImpl::advance_hidden(const torch::Tensor& h_prev, const torch::Tensor& z_concat) {
  return core_(z_concat, h_prev);
}

UnrollResult ForwardModelImpl::unroll(const Batch& batch, uint64_t noise_seed, bool train_mode) {
  const int b = batch.batch();
  const int steps = batch.steps() + 1;  // observations
  auto enc = encode_all(batch.obs, batch.obs_mask.reshape({-1}), train_mode);
  for (auto& e : enc) e = e.view({b, steps, -1});
  auto prev_action_enc = encode_action(batch.prev_actions.reshape({b * steps, 4})).view({b, steps, -1});

  auto gen = make_gen(noise_seed);
  auto noise = torch::randn({b, steps, config_.z_total()}, gen, kF64);

  auto h = torch::zeros({b, config_.hidden}, kF64);
  std::vector<torch::Tensor> h_list;
  std::array<std::vector<torch::Tensor>, fe::kNumModalities> prior_mean, prior_std, post_mean, post_std;

  for (int t = 0; t < steps; ++t) {
    auto a_enc = prev_action_enc.select(1, t);
    auto ha = torch::cat({h, a_enc}, -1);
    std::vector<torch::Tensor> z_parts;
    int z_offset = 0;
    for (int m = 0; m < fe::kNumModalities; ++m) {
      const int d = config_.latent[static_cast<size_t>(m)];
      auto prior = head_forward(prior_l1_[static_cast<size_t>(m)], prior_act_[static_cast<size_t>(m)],
                                prior_l2_[static_cast<size_t>(m)], ha);
      auto post_input = torch::cat({ha, enc[static_cast<size_t>(m)].select(1, t)}, -1);
      auto post = head_forward(post_l1_[static_cast<size_t>(m)], post_act_[static_cast<size_t>(m)],
                               post_l2_[static_cast<size_t>(m)], post_input);
      auto eps = noise.select(1, t).narrow(-1, z_offset, d);
      z_parts.push_back(post.mean + post.std * eps);
      prior_mean[static_cast<size_t>(m)].push_back(prior.mean);
      prior_std[static_cast<size_t>(m)].push_back(prior.std);
      post_mean[static_cast<size_t>(m)].push_back(post.mean);
      post_std[static_cast<size_t>(m)].push_back(post.std);
      z_offset += d;
    }
    h = core_(torch::cat(z_parts, -1), h);
    h_list.push_back(h);
  }

  UnrollResult result;
  result.h = torch::stack(h_list, 1);
  for (int m = 0; m < fe::kNumModalities; ++m) {
    result.prior[static_cast<size_t>(m)] = {torch::stack(prior_mean[static_cast<size_t>(m)], 1),
                                            torch::stack(prior_std[static_cast<size_t>(m)], 1)};
    result.posterior[static_cast<size_t>(m)] = {torch::stack(post_mean[static_cast<size_t>(m)], 1),
                                                torch::stack(post_std[static_cast<size_t>(m)], 1)};
    result.kld[static_cast<size_t>(m)] =
        fe::kld_diag(result.posterior[static_cast<size_t>(m)], result.prior[static_cast<size_t>(m)]);
  }
  return result;
}

Predictions ForwardModelImpl::predict(const torch::Tensor& h, const torch::Tensor& actions,
                                      const torch::Tensor& mask, bool train_mode) {
  const auto lead = h.sizes().vec();
  const auto n = h.numel() / config_.hidden;
  auto h_flat = h.reshape({n, config_.hidden});
  auto a_enc = encode_action(actions.reshape({n, 4}));
  auto x = torch::cat({h_flat, a_enc}, -1);
  auto mask_flat = mask.defined() ? mask.reshape({n}) : torch::Tensor();

  Predictions preds;
  const int g = config_.vision_dec_grid();
  const int s = config_.vision_size;
  auto v = vision_dec_act_(vision_dec_bn_->forward(vision_dec_(x), mask_flat, train_mode));
  v = v.view({n, config_.vision_dec_channels, g, g});
  v = torch::tanh(vision_dec_conv_(v));
  v = (torch::pixel_shuffle(v, 2) + 1.0) / 2.0;  // [N, 4, S, S]
  preds.touch = (torch::tanh(touch_dec_bn_->forward(touch_dec_(x), mask_flat, train_mode)) + 1.0) / 2.0;
  preds.proprio = (torch::tanh(proprio_dec_bn_->forward(proprio_dec_(x), mask_flat, train_mode)) + 1.0) / 2.0;
  auto cmd = command_dec_->forward(x, mask_flat, train_mode);
  auto fb = feedback_dec_->forward(x, mask_flat, train_mode);

  std::vector<int64_t> out_lead(lead.begin(), lead.end() - 1);
  auto reshape_to = [&out_lead](torch::Tensor t, std::initializer_list<int64_t> tail) {
    std::vector<int64_t> shape = out_lead;
    shape.insert(shape.end(), tail.begin(), tail.end());
    return t.reshape(shape);
  };
  preds.vision = reshape_to(v, {4, s, s});
  preds.touch = reshape_to(preds.touch, {env::kTouchSensors});
  preds.proprio = reshape_to(preds.proprio, {env::kProprioDims});
  preds.command_logits = reshape_to(cmd, {3, lang::kVocabSize});
  preds.feedback_logits = reshape_to(fb, {3, lang::kVocabSize});
  return preds;
}

FreeEnergyResult ForwardModelImpl::free_energy(const Batch& batch, uint64_t noise_seed, bool train_mode) {
  FreeEnergyResult result;
  result.pass = unroll(batch, noise_seed, train_mode);
  const int t_steps = batch.steps();
  auto h_t = result.pass.h.narrow(1, 0, t_steps);
  result.predictions = predict(h_t, batch.actions, batch.mask, train_mode);

  std::vector<fe::ModalityTerm> terms;
  auto slice_gaussian = [t_steps](const fe::DiagonalGaussian& g) {
    return fe::DiagonalGaussian{g.mean.narrow(1, 0, t_steps), g.std.narrow(1, 0, t_steps)};
  };
  auto next = [t_steps](const torch::Tensor& t) { return t.narrow(1, 1, t_steps); };

  for (int m = 0; m < fe::kNumModalities; ++m) {
    fe::ModalityTerm term;
    term.posterior = slice_gaussian(result.pass.posterior[static_cast<size_t>(m)]);
    term.prior = slice_gaussian(result.pass.prior[static_cast<size_t>(m)]);
    switch (m) {
      case fe::kVision:
        term.nll = fe::gaussian_nll(result.predictions.vision, next(batch.obs.vision));
        break;
      case fe::kTouch:
        term.nll = fe::gaussian_nll(result.predictions.touch, next(batch.obs.touch));
        break;
      case fe::kProprioception:
        term.nll = fe::gaussian_nll(result.predictions.proprio, next(batch.obs.proprio));
        break;
      case fe::kCommandVoice:
        term.nll = fe::categorical_nll(result.predictions.command_logits, next(batch.obs.command));
        break;
      case fe::kFeedbackVoice:
        term.nll = fe::categorical_nll(result.predictions.feedback_logits, next(batch.obs.feedback));
        break;
    }
    terms.push_back(std::move(term));
  }
  result.value = fe::evidence_free_energy(terms, batch.mask);
  return result;
}

StepState ForwardModelImpl::initial_state() {
  return {torch::zeros({1, config_.hidden}, kF64), torch::zeros({1, 4}, kF64)};
}

StepState ForwardModelImpl::observe(const StepState& state, const ObsTensors& obs, bool sample,
                                    torch::Generator* gen,
                                    std::array<fe::DiagonalGaussian, fe::kNumModalities>* posteriors_out) {
  torch::NoGradGuard no_grad;
  ObsTensors one;
  one.vision = obs.vision.reshape({1, 4, config_.vision_size, config_.vision_size});
  one.touch = obs.touch.reshape({1, env::kTouchSensors});
  one.proprio = obs.proprio.reshape({1, env::kProprioDims});
  one.command = obs.command.reshape({1, 3, lang::kVocabSize});
  one.feedback = obs.feedback.reshape({1, 3, lang::kVocabSize});
  one.feedback_len = obs.feedback_len.reshape({1});
  auto enc = encode_all(one, torch::Tensor(), /*train_mode=*/false);

  auto a_enc = encode_action(state.prev_action);
  std::vector<torch::Tensor> z_parts;
  for (int m = 0; m < fe::kNumModalities; ++m) {
    auto post = compute_posterior(state.h, a_enc, enc[static_cast<size_t>(m)], m);
    if (sample && gen) {
      auto eps = torch::randn(post.mean.sizes(), *gen, kF64);
      z_parts.push_back(post.mean + post.std * eps);
    } else {
      z_parts.push_back(post.mean);
    }
    if (posteriors_out) (*posteriors_out)[static_cast<size_t>(m)] = post;
  }
  StepState next;
  next.h = core_(torch::cat(z_parts, -1), state.h);
  next.prev_action = state.prev_action;
  return next;
}

Predictions ForwardModelImpl::predict_one(const torch::Tensor& h, const torch::Tensor& action) {
  torch::NoGradGuard no_grad;
  return predict(h.reshape({1, config_.hidden}), action.reshape({1, 4}), torch::Tensor(),
                 /*train_mode=*/false);
}

ForwardModelTrainer::ForwardModelTrainer(const ModelConfig& config, const fe::IntrinsicConfig& intrinsic,
                                         bool curiosity_next_step)
    : model_(config), intrinsic_(intrinsic), curiosity_next_step_(curiosity_next_step) {
  optimizer_ = std::make_unique<torch::optim::Adam>(model_->parameters(), torch::optim::AdamOptions(config.lr));
}

TrainStepResult ForwardModelTrainer::assemble(const Batch& batch, FreeEnergyResult&& result) const {
  TrainStepResult out;
  out.free_energy = result.value.item<double>();
  out.h = result.pass.h.detach();
  const int t_steps = batch.steps();
  std::array<torch::Tensor, fe::kNumModalities> kld_step;
  for (int m = 0; m < fe::kNumModalities; ++m) {
    auto full = result.pass.kld[static_cast<size_t>(m)].detach();  // [B, T+1]
    kld_step[static_cast<size_t>(m)] =
        curiosity_next_step_ ? full.narrow(1, 1, t_steps) : full.narrow(1, 0, t_steps);
    const double mask_sum = batch.mask.sum().item<double>();
    out.kld_mean[static_cast<size_t>(m)] =
        (kld_step[static_cast<size_t>(m)] * batch.mask).sum().item<double>() / std::max(1.0, mask_sum);
  }
  out.curiosity = fe::curiosity(kld_step, intrinsic_);
  return out;
}

TrainStepResult ForwardModelTrainer::train_step(const Batch& batch, uint64_t noise_seed) {
  auto result = model_->free_energy(batch, noise_seed, /*train_mode=*/true);
  if (!std::isfinite(result.value.item<double>()))
    throw NonFiniteLoss("evidence free energy is not finite");
  optimizer_->zero_grad();
  result.value.backward();
  optimizer_->step();
  return assemble(batch, std::move(result));
}

TrainStepResult ForwardModelTrainer::measure(const Batch& batch, uint64_t noise_seed, bool train_mode) {
  torch::NoGradGuard no_grad;
  auto result = model_->free_energy(batch, noise_seed, train_mode);
  return assemble(batch, std::move(result));
}

namespace {

ObsTensors predictions_to_obs(const Predictions& preds, const ModelConfig& config) {
  ObsTensors obs;
  obs.vision = preds.vision.reshape({4, config.vision_size, config.vision_size}).clamp(0.0, 1.0);
  obs.touch = preds.touch.reshape({env::kTouchSensors}).clamp(0.0, 1.0);
  obs.proprio = preds.proprio.reshape({env::kProprioDims}).clamp(0.0, 1.0);
  auto to_one_hot = [](const torch::Tensor& logits) {
    auto idx = logits.reshape({3, lang::kVocabSize}).argmax(-1);
    return torch::one_hot(idx, lang::kVocabSize).to(kF64);
  };
  obs.command = to_one_hot(preds.command_logits);
  obs.feedback = to_one_hot(preds.feedback_logits);
  const bool silent = obs.feedback[0].argmax().item<int64_t>() == lang::kSilenceIndex;
  obs.feedback_len = torch::tensor(silent ? 1.0 : 3.0, kF64);
  return obs;
}

}  // namespace

std::vector<DreamStep> dream_rollout(ForwardModel& model, const ActorFn& actor,
                                     const env::ObservationBundle& initial, int steps) {
  torch::NoGradGuard no_grad;
  std::vector<DreamStep> out;
  auto state = model->initial_state();
  ObsTensors current = tensorize(initial, model->config());
  for (int t = 0; t < steps; ++t) {
    state = model->observe(state, current, /*sample=*/false, nullptr);
    auto action = actor(state.h.reshape({-1})).reshape({4}).clamp(-1.0, 1.0);
    out.push_back({current, action});
    state.prev_action = action.reshape({1, 4});
    if (t + 1 < steps) {
      auto preds = model->predict_one(state.h, action);
      current = predictions_to_obs(preds, model->config());
    }
  }
  return out;
}

}  // namespace curio::fm
