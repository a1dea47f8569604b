#ifndef MENTOR_SSL_HPP_
#define MENTOR_SSL_HPP_

#include <cstdint>
#include <vector>

#include "mentor/config.hpp"
#include "mentor/graphs.hpp"
#include "mentor/rng.hpp"
#include "mentor/tensor.hpp"

namespace mentor {

// ---------------------------------------------------------------------------
// Moment-matching alignment

inline constexpr double kStdEpsilon = 1e-12;

/// Column-wise mean and population standard deviation (with kStdEpsilon inside the root).
struct GaussianMoments {
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd sigma;
};

GaussianMoments gaussian_moments(const Matrix& m);

/// Backpropagates d(mu), d(sigma) to the matrix the moments were taken from.
Matrix gaussian_moments_backward(const Matrix& m, const GaussianMoments& moments, const Eigen::RowVectorXd& grad_mu,
                                 const Eigen::RowVectorXd& grad_sigma);

/// mean_j |a.mu_j - b.mu_j| + mean_j |a.sigma_j - b.sigma_j|.
double moment_distance(const GaussianMoments& a, const GaussianMoments& b);

struct AlignmentLoss {
  double l1 = 0;  // ID direct guidance: d(id, fused)
  double l2 = 0;  // ID indirect guidance: d(id, v) + d(id, t)
  double l3 = 0;  // modality direct alignment: d(fused, v) + d(fused, t)
  double l4 = 0;  // modality indirect alignment: d(v, t)
  double total = 0;
};

struct AlignmentGrad {
  Matrix fused;
  Matrix id;
  Matrix visual;
  Matrix textual;
};

/// Levels outside `levels` contribute 0. `grad` (optional) receives d(total)/d(input).
/// The |.| kinks take subgradient 0.
AlignmentLoss alignment_loss(const Matrix& fused, const Matrix& id, const Matrix& visual, const Matrix& textual,
                             double lambda_align, const AlignLevels& levels, AlignmentGrad* grad = nullptr);

/// Every signed difference entering an |.| of the enabled levels; used to keep
/// finite-difference probes away from kinks.
std::vector<double> alignment_kink_distances(const Matrix& fused, const Matrix& id, const Matrix& visual,
                                             const Matrix& textual, const AlignLevels& levels);

// ---------------------------------------------------------------------------
// Feature masking

/// RNG substreams of one optimization step.
enum StepStream : std::uint64_t {
  kNegativeStream = 0,
  kMaskStream = 1,
  kVisualView1Stream = 2,
  kVisualView2Stream = 3,
  kTextualView1Stream = 4,
  kTextualView2Stream = 5,
};

struct FeatureMask {
  Matrix users;  // 0/1 keep mask
  Matrix items;
};

/// Each entry is 0 with probability p, 1 otherwise. Users are drawn before items, row-major.
FeatureMask draw_feature_mask(Eigen::Index n_users, Eigen::Index n_items, Eigen::Index width, double p, Rng& rng);

struct FeatureMaskGrad {
  Matrix users;  // through the predictor branch only
  Matrix items;
  Matrix pred_weight;
  Matrix pred_bias;
};

/// (1 - meancos(stopgrad(users o mask), users W + b)) + the same for items.
/// Rows with zero norm on either side count as cosine 0.
double feature_mask_loss(const Matrix& users, const Matrix& items, const FeatureMask& mask, const Matrix& pred_weight,
                         const Matrix& pred_bias, FeatureMaskGrad* grad = nullptr);

double feature_mask_loss(const Matrix& users, const Matrix& items, double p, const Matrix& pred_weight,
                         const Matrix& pred_bias, Rng& rng);

// ---------------------------------------------------------------------------
// Graph perturbation

/// E0 = emb, El = adj * E(l-1) + eps * U[0,1) noise (fresh per layer); returns sum_{l=0..layers} El.
/// Noise is drawn layer by layer, row-major.
Matrix perturbed_propagate(const NormAdjacency& adj, const Matrix& emb, unsigned layers, double eps, Rng& rng);

struct InfoNceGrad {
  Matrix view1;
  Matrix view2;
};

/// sum_{r in rows} -log softmax_s(z1_r . z2_s / tau)[r], z = L2-normalized rows, s ranging over
/// `rows`. `grad` (optional) is accumulated into (must be pre-sized like the views).
double info_nce(const Matrix& view1, const Matrix& view2, double tau, const std::vector<std::uint32_t>& rows,
                InfoNceGrad* grad = nullptr, double grad_scale = 1.0);

struct EnhancementLoss {
  double feature = 0;
  double graph = 0;
  double total = 0;
};

struct EnhancementInputs {
  const NormAdjacency* adjacency = nullptr;
  unsigned ui_layers = 2;
  std::uint32_t n_users = 0;
  const Matrix* visual_input = nullptr;   // modality inputs before propagation
  const Matrix* textual_input = nullptr;
  const Matrix* fused = nullptr;          // scoring representation
  const Matrix* pred_weight = nullptr;
  const Matrix* pred_bias = nullptr;
};

struct EnhancementSettings {
  double lambda_g = 0;
  double lambda_f = 0;
  double tau = 0.2;
  double p = 0.5;
  double eps = 0.1;
};

struct EnhancementGrad {
  Matrix visual_input;
  Matrix textual_input;
  Matrix fused;
  Matrix pred_weight;
  Matrix pred_bias;
};

/// lambda_g * graph + lambda_f * feature. `user_rows` / `item_rows` index users and
/// items (item indices not offset) and select InfoNCE rows and negatives. Randomness
/// comes from the StepStream substreams of `step_rng`. A term whose lambda is 0 is
/// skipped and reported as 0.
EnhancementLoss enhancement_loss(const EnhancementInputs& in, const EnhancementSettings& settings,
                                 const std::vector<std::uint32_t>& user_rows,
                                 const std::vector<std::uint32_t>& item_rows, const Rng& step_rng,
                                 EnhancementGrad* grad = nullptr);

}  // namespace mentor

#endif  // MENTOR_SSL_HPP_
