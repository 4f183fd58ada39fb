#pragma once

#include "gsgw/autodiff.hpp"
#include "gsgw/linalg.hpp"
#include "gsgw/measures.hpp"
#include "gsgw/softsort.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gsgw {

/// Per-point sorted squared-distance profile, truncated to the K nearest.
struct IntrinsicTokens {
  Mat tokens;
  std::size_t k = 0;

  std::size_t size() const { return static_cast<std::size_t>(tokens.rows()); }
};

IntrinsicTokens tokenize(const PointCloud& cloud, std::size_t k);

struct MatcherSpec {
  std::size_t token_dim = 32;
  std::size_t latent = 256;
  /// Single-head dot-product attention in place of mean-pool self-mixing.
  bool attention = false;

  void validate() const;
};

/// Flat parameter blocks. Both streams share every block.
struct MatcherParams {
  MatcherSpec spec;
  Vec rho;       // token encoder: K -> d -> d
  Vec encoder;   // self-mixing and cross-mixing blocks
  Vec context;   // W_c over [token, pair context]
  Vec readout;   // shared scalar head

  std::size_t count() const;
  Vec flat() const;
  void assign(const Vec& theta);
};

MatcherParams init_matcher(const MatcherSpec& spec, std::uint64_t seed);

struct ScoreVars {
  ad::Var s;
  ad::Var t;
};

/// Scores on a tape from a flat parameter node (layout of MatcherParams::flat).
ScoreVars predict_scores(const MatcherSpec& spec, ad::Var theta, const IntrinsicTokens& x, const IntrinsicTokens& y,
                         ad::Tape& tape);
ScoreVars predict_scores(const MatcherParams& params, const IntrinsicTokens& x, const IntrinsicTokens& y,
                         ad::Tape& tape);
std::pair<Vec, Vec> predict_score_values(const MatcherParams& params, const IntrinsicTokens& x,
                                         const IntrinsicTokens& y);

/// tau > 0 gives the soft plan, tau == 0 the hard monotone plan of the scores.
Coupling amortized_plan(const MatcherParams& params, const PointCloud& x, const PointCloud& y, double tau);

namespace ad {
/// (1 - lambda) * GW + lambda * sum_ij feat_cost_ij * plan_ij.
Var fgw_loss(Var plan, const CostMatrix& cx, const CostMatrix& cy, const Mat& feat_cost, double lambda);
}  // namespace ad

struct LabeledCloud {
  PointCloud cloud;
  std::vector<int> labels;
  std::string family;
};

/// Everything the FGW loss needs for one pair, precomputed once.
struct PairData {
  IntrinsicTokens tx;
  IntrinsicTokens ty;
  CostMatrix cx;
  CostMatrix cy;
  Mat feat_cost;
};

PairData make_pair_data(const PointCloud& x, const PointCloud& y, std::size_t k);

/// Amortized FGW loss of the soft plan for one pair.
ad::Var amortized_loss(const MatcherSpec& spec, ad::Var theta, const PairData& pair, double tau, double lambda,
                       ad::Tape& tape);

struct AmortizedTrainConfig {
  std::size_t epochs = 20;
  std::size_t batches_per_epoch = 10;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double grad_clip = 1.0;
  double lambda = 0.5;
  AnnealSchedule anneal{0.05, 0.005, 20, AnnealShape::exponential};
  std::uint64_t seed = 0;

  void validate() const;
};

struct AmortizedTrainResult {
  MatcherParams params;
  std::vector<double> loss_trace;  // mean batch loss per epoch
  bool retried = false;
};

/// Trains on random pairs of the dataset; labels are never read. A diverged run
/// is retried once with lr / 10 before OptimizationFailure.
AmortizedTrainResult train_amortized(const std::vector<LabeledCloud>& dataset, const MatcherParams& init,
                                     const AmortizedTrainConfig& cfg);

/// Mean FGW of amortized soft plans over the given pairs at temperature tau.
double evaluate_amortized_loss(const MatcherParams& params, const std::vector<LabeledCloud>& dataset,
                               const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double tau,
                               double lambda);

/// Fraction of i with labels_y[argmax_j plan_ij] == labels_x[i].
double label_transfer_accuracy(const Mat& plan, const std::vector<int>& labels_x, const std::vector<int>& labels_y);

/// Expected accuracy of a uniformly random assignment: sum_k pX_k * pY_k.
double random_label_baseline(const std::vector<int>& labels_x, const std::vector<int>& labels_y);

/// Procedural two-part shapes (dumbbell, L-shape, tripod) with unequal part
/// sizes, normalised and randomly rotated.
std::vector<LabeledCloud> synthetic_shapes(std::size_t count, std::uint64_t seed,
                                           const std::vector<std::size_t>& sizes = {64, 128});

/// Random ordered pairs drawn within the same shape family.
std::vector<std::pair<std::size_t, std::size_t>> family_pairs(const std::vector<LabeledCloud>& dataset,
                                                              std::size_t count, std::uint64_t seed);

/// npy point array plus a sidecar text file with one integer label per line.
void save_labeled(const std::filesystem::path& npy_path, const LabeledCloud& c);
LabeledCloud load_labeled(const std::filesystem::path& npy_path);
std::filesystem::path label_sidecar(const std::filesystem::path& npy_path);

}  // namespace gsgw
