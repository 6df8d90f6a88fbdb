#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "curio/agent.hpp"
#include "curio/fm.hpp"
#include "curio/lang.hpp"

namespace curio::analysis {

// Rows are (sentence, step) samples of the command-voice posterior mean;
// labels carry the commanded sentence per row.
struct LatentMatrix {
  Eigen::MatrixXd data;
  std::vector<lang::Sentence> labels;
};

LatentMatrix collect_command_latents(fm::ForwardModel& model, agent::Actor& actor,
                                     const std::vector<lang::Sentence>& sentences,
                                     int episodes_per_sentence, const lang::ScaleConfig& scale,
                                     uint64_t seed);

struct PcaResult {
  Eigen::MatrixXd components;          // d x k, orthonormal columns
  Eigen::VectorXd eigenvalues;         // k, non-increasing
  Eigen::VectorXd explained_variance;  // k, fraction of total variance
  Eigen::RowVectorXd mean;             // 1 x d
  Eigen::MatrixXd projections;         // n x k, zero mean per component
};

// Top-k principal components via power iteration with deflation. Sign
// convention: the largest-magnitude loading of each component is positive.
PcaResult pca(const Eigen::MatrixXd& data, int k = 2);

// Mean silhouette over integer labels of the projected rows; in [-1, 1].
double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels);

void write_projections_csv(const std::string& path, const PcaResult& result,
                           const std::vector<lang::Sentence>& labels);

struct DreamExport {
  std::vector<std::string> frame_paths;
  std::string trace_path;
  int steps = 0;
};

// Rolls a mental-planning episode: the arena provides only the initial
// observation; every later input is the model's own prediction. Writes RGB
// frames (PPM), depth frames (PGM) and a per-step trace of the commands and
// predicted voices.
DreamExport export_dream(fm::ForwardModel& model, agent::Actor& actor,
                         const lang::Sentence& sentence, const lang::ScaleConfig& scale,
                         uint64_t seed, int steps, const std::string& out_dir);

}  // namespace curio::analysis
