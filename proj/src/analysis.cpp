#include "curio/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace curio::analysis {

namespace fs = std::filesystem;

LatentMatrix collect_command_latents(fm::ForwardModel& model, agent::Actor& actor,
                                     const std::vector<lang::Sentence>& sentences,
                                     int episodes_per_sentence, const lang::ScaleConfig& scale,
                                     uint64_t seed) {
  torch::NoGradGuard no_grad;
  const int latent_dim = model->config().latent[fe::kCommandVoice];
  std::vector<std::array<double, 64>> rows_buffer;  // latent_dim <= 64 in every preset
  if (latent_dim > 64) throw std::logic_error("command latent wider than expected");
  std::vector<lang::Sentence> labels;
  std::mt19937_64 env_rng(seed);

  for (const auto& sentence : sentences) {
    for (int e = 0; e < episodes_per_sentence; ++e) {
      auto arena = env::Arena::reset(env_rng(), sentence, scale);
      auto state = model->initial_state();
      auto obs = arena.observation();
      while (true) {
        std::array<fe::DiagonalGaussian, fe::kNumModalities> posteriors;
        state = model->observe(state, fm::tensorize(obs, model->config()), /*sample=*/false,
                               nullptr, &posteriors);
        const auto mean = posteriors[fe::kCommandVoice].mean.reshape({-1}).contiguous();
        auto acc = mean.accessor<double, 1>();
        std::array<double, 64> row{};
        for (int i = 0; i < latent_dim; ++i) row[static_cast<size_t>(i)] = acc[i];
        rows_buffer.push_back(row);
        labels.push_back(sentence);

        auto action = actor->deterministic(state.h);
        state.prev_action = action.reshape({1, 4});
        const auto flat = action.reshape({4}).contiguous();
        auto a = flat.accessor<double, 1>();
        const auto result = arena.step(env::MotorCommand::clamped({{a[0], a[1], a[2], a[3]}}));
        obs = result.observation;
        if (result.done) break;
      }
    }
  }

  LatentMatrix out;
  out.data.resize(static_cast<long>(rows_buffer.size()), latent_dim);
  for (size_t r = 0; r < rows_buffer.size(); ++r)
    for (int c = 0; c < latent_dim; ++c)
      out.data(static_cast<long>(r), c) = rows_buffer[r][static_cast<size_t>(c)];
  out.labels = std::move(labels);
  return out;
}

PcaResult pca(const Eigen::MatrixXd& data, int k) {
  const long n = data.rows();
  const long d = data.cols();
  if (n < 2 || d < 1) throw std::invalid_argument("pca needs at least two samples");
  k = std::min<long>(k, d);

  PcaResult result;
  result.mean = data.colwise().mean();
  Eigen::MatrixXd centered = data.rowwise() - result.mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double total_variance = cov.trace();

  result.components.resize(d, k);
  result.eigenvalues.resize(k);

  Eigen::MatrixXd deflated = cov;
  for (int j = 0; j < k; ++j) {
    // Deterministic start: the column of largest norm, orthogonalized against
    // the components already found.
    long start_col = 0;
    deflated.colwise().norm().maxCoeff(&start_col);
    Eigen::VectorXd v = deflated.col(start_col);
    for (int p = 0; p < j; ++p) v -= result.components.col(p) * (result.components.col(p).dot(v));
    if (v.norm() < 1e-12) {
      // Degenerate residual: pick any direction orthogonal to found components.
      for (long i = 0; i < d; ++i) {
        v = Eigen::VectorXd::Unit(d, i);
        for (int p = 0; p < j; ++p) v -= result.components.col(p) * (result.components.col(p).dot(v));
        if (v.norm() > 1e-8) break;
      }
    }
    v.normalize();

    double eigenvalue = 0.0;
    for (int iter = 0; iter < 100000; ++iter) {
      Eigen::VectorXd w = deflated * v;
      // Deflation leaves numerical residue along the found components; keep
      // the iterate orthogonal to them.
      for (int p = 0; p < j; ++p) w -= result.components.col(p) * (result.components.col(p).dot(w));
      const double norm = w.norm();
      if (norm < 1e-300) {
        eigenvalue = 0.0;
        break;
      }
      w /= norm;
      const double delta = std::min((w - v).norm(), (w + v).norm());
      v = w;
      eigenvalue = v.dot(deflated * v);
      if (delta < 1e-15) break;
    }
    if (eigenvalue < 1e-12 * std::max(1.0, total_variance)) {
      // Effectively exhausted spectrum: keep the direction but report zero.
      eigenvalue = std::max(0.0, eigenvalue);
    }

    // Largest-magnitude loading positive.
    long max_idx = 0;
    v.cwiseAbs().maxCoeff(&max_idx);
    if (v(max_idx) < 0.0) v = -v;

    result.components.col(j) = v;
    result.eigenvalues(j) = std::max(0.0, eigenvalue);
    deflated -= result.eigenvalues(j) * v * v.transpose();
  }

  result.explained_variance.resize(k);
  for (int j = 0; j < k; ++j)
    result.explained_variance(j) =
        total_variance > 0.0 ? result.eigenvalues(j) / total_variance : 0.0;
  result.projections = centered * result.components;
  return result;
}

double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  const long n = points.rows();
  if (n != static_cast<long>(labels.size())) throw std::invalid_argument("silhouette: size mismatch");
  std::map<int, std::vector<long>> clusters;
  for (long i = 0; i < n; ++i) clusters[labels[static_cast<size_t>(i)]].push_back(i);
  if (clusters.size() < 2) return 0.0;

  double total = 0.0;
  long counted = 0;
  for (long i = 0; i < n; ++i) {
    const int own = labels[static_cast<size_t>(i)];
    if (clusters[own].size() < 2) continue;
    double a = 0.0;
    for (long j : clusters[own])
      if (j != i) a += (points.row(i) - points.row(j)).norm();
    a /= static_cast<double>(clusters[own].size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : clusters) {
      if (label == own) continue;
      double dist = 0.0;
      for (long j : members) dist += (points.row(i) - points.row(j)).norm();
      b = std::min(b, dist / static_cast<double>(members.size()));
    }
    total += (b - a) / std::max(a, b);
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

void write_projections_csv(const std::string& path, const PcaResult& result,
                           const std::vector<lang::Sentence>& labels) {
  if (result.projections.rows() != static_cast<long>(labels.size()))
    throw std::invalid_argument("projections and labels disagree");
  std::ofstream out(path);
  out << "pc1,pc2,verb,adjective,noun\n";
  const auto& names = lang::token_names();
  char buf[64];
  for (long i = 0; i < result.projections.rows(); ++i) {
    const auto& s = labels[static_cast<size_t>(i)];
    const double pc2 = result.projections.cols() > 1 ? result.projections(i, 1) : 0.0;
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g", result.projections(i, 0), pc2);
    out << buf << "," << names[static_cast<size_t>(s.verb)] << ","
        << names[static_cast<size_t>(s.adjective)] << "," << names[static_cast<size_t>(s.noun)]
        << "\n";
  }
}

namespace {

void write_ppm(const std::string& path, const torch::Tensor& vision) {
  const int s = static_cast<int>(vision.size(1));
  auto acc = vision.accessor<double, 3>();
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << s << " " << s << "\n255\n";
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(acc[ch][r][c], 0.0, 1.0);
        out.put(static_cast<char>(std::lround(v * 255.0)));
      }
}

void write_pgm(const std::string& path, const torch::Tensor& vision) {
  const int s = static_cast<int>(vision.size(1));
  auto acc = vision.accessor<double, 3>();
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << s << " " << s << "\n255\n";
  for (int r = 0; r < s; ++r)
    for (int c = 0; c < s; ++c) {
      const double v = std::clamp(acc[3][r][c], 0.0, 1.0);
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
}

std::string decode_rows(const torch::Tensor& rows) {
  const auto& names = lang::token_names();
  std::string text;
  auto idx = rows.argmax(-1);
  auto acc = idx.accessor<int64_t, 1>();
  for (int r = 0; r < idx.size(0); ++r) {
    if (r > 0) text += "|";
    text += names[static_cast<size_t>(acc[r])];
  }
  return text;
}

}  // namespace

DreamExport export_dream(fm::ForwardModel& model, agent::Actor& actor,
                         const lang::Sentence& sentence, const lang::ScaleConfig& scale,
                         uint64_t seed, int steps, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto arena = env::Arena::reset(seed, sentence, scale);
  const auto initial = arena.observation();

  fm::ActorFn actor_fn = [&actor](const torch::Tensor& h) {
    return actor->deterministic(h.reshape({1, -1})).reshape({4});
  };
  const auto dream = fm::dream_rollout(model, actor_fn, initial, steps);

  DreamExport result;
  result.steps = static_cast<int>(dream.size());
  result.trace_path = out_dir + "/trace.txt";
  std::ofstream trace(result.trace_path);
  trace << "# command: " << sentence.text() << "\n";
  trace << "# step | action | predicted command voice | predicted feedback voice\n";
  char buf[160];
  for (size_t t = 0; t < dream.size(); ++t) {
    const auto& step = dream[t];
    std::snprintf(buf, sizeof(buf), "frame_%03zu.ppm", t);
    const std::string frame_path = out_dir + "/" + buf;
    write_ppm(frame_path, step.observation.vision);
    std::snprintf(buf, sizeof(buf), "depth_%03zu.pgm", t);
    write_pgm(out_dir + "/" + buf, step.observation.vision);
    result.frame_paths.push_back(frame_path);

    const auto action_flat = step.action.contiguous();
    auto a = action_flat.accessor<double, 1>();
    std::snprintf(buf, sizeof(buf), "%zu | % .4f % .4f % .4f % .4f | ", t, a[0], a[1], a[2], a[3]);
    trace << buf << decode_rows(step.observation.command) << " | "
          << decode_rows(step.observation.feedback) << "\n";
  }
  return result;
}

}  // namespace curio::analysis
