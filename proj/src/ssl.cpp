#include "mentor/ssl.hpp"

#include <cmath>

#include "mentor/error.hpp"
#include "mentor/model.hpp"

namespace mentor {

namespace {

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorCode::DimensionMismatch, what);
}

}  // namespace

GaussianMoments gaussian_moments(const Matrix& m) {
  if (m.rows() == 0) throw Error(ErrorCode::EmptyMatrix, "moments of an empty matrix");
  GaussianMoments g;
  const double n = static_cast<double>(m.rows());
  g.mu = m.colwise().sum() / n;
  const Matrix centered = m.rowwise() - g.mu;
  g.sigma = ((centered.cwiseAbs2().colwise().sum() / n).array() + kStdEpsilon).sqrt().matrix();
  return g;
}

Matrix gaussian_moments_backward(const Matrix& m, const GaussianMoments& moments, const Eigen::RowVectorXd& grad_mu,
                                 const Eigen::RowVectorXd& grad_sigma) {
  const double n = static_cast<double>(m.rows());
  // d sigma_j / d m_rj = (m_rj - mu_j) / (n sigma_j); the mean's own dependence cancels
  const Eigen::RowVectorXd scale = (grad_sigma.array() / (n * moments.sigma.array())).matrix();
  Matrix out = (m.rowwise() - moments.mu).array().rowwise() * scale.array();
  out.rowwise() += grad_mu / n;
  return out;
}

double moment_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.size() != b.sigma.size() || a.mu.size() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "moment dimensions differ");
  }
  return (a.mu - b.mu).cwiseAbs().mean() + (a.sigma - b.sigma).cwiseAbs().mean();
}

namespace {

struct MomentGrad {
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd sigma;
  bool touched = false;

  void ensure(Eigen::Index d) {
    if (!touched) {
      mu = Eigen::RowVectorXd::Zero(d);
      sigma = Eigen::RowVectorXd::Zero(d);
      touched = true;
    }
  }
};

// accumulates scale * d/d(moments) of moment_distance(a, b)
void distance_backward(const GaussianMoments& a, const GaussianMoments& b, double scale, MomentGrad& ga,
                       MomentGrad& gb) {
  const Eigen::Index d = a.mu.size();
  ga.ensure(d);
  gb.ensure(d);
  const double w = scale / static_cast<double>(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sm = w * sign(a.mu(j) - b.mu(j));
    const double ss = w * sign(a.sigma(j) - b.sigma(j));
    ga.mu(j) += sm;
    gb.mu(j) -= sm;
    ga.sigma(j) += ss;
    gb.sigma(j) -= ss;
  }
}

}  // namespace

AlignmentLoss alignment_loss(const Matrix& fused, const Matrix& id, const Matrix& visual, const Matrix& textual,
                             double lambda_align, const AlignLevels& levels, AlignmentGrad* grad) {
  require_same_shape(fused, id, "alignment: fused vs id");
  require_same_shape(fused, visual, "alignment: fused vs visual");
  require_same_shape(fused, textual, "alignment: fused vs textual");
  AlignmentLoss loss;
  if (grad != nullptr) {
    grad->fused = Matrix::Zero(fused.rows(), fused.cols());
    grad->id = Matrix::Zero(id.rows(), id.cols());
    grad->visual = Matrix::Zero(visual.rows(), visual.cols());
    grad->textual = Matrix::Zero(textual.rows(), textual.cols());
  }
  if (!levels.any()) return loss;

  const GaussianMoments mf = gaussian_moments(fused);
  const GaussianMoments mi = gaussian_moments(id);
  const GaussianMoments mv = gaussian_moments(visual);
  const GaussianMoments mt = gaussian_moments(textual);
  MomentGrad gf, gi, gv, gt;

  auto term = [&](const GaussianMoments& a, const GaussianMoments& b, MomentGrad& ga, MomentGrad& gb) {
    if (grad != nullptr) distance_backward(a, b, lambda_align, ga, gb);
    return moment_distance(a, b);
  };
  if (levels.l1) loss.l1 = term(mi, mf, gi, gf);
  if (levels.l2) loss.l2 = term(mi, mv, gi, gv) + term(mi, mt, gi, gt);
  if (levels.l3) loss.l3 = term(mf, mv, gf, gv) + term(mf, mt, gf, gt);
  if (levels.l4) loss.l4 = term(mv, mt, gv, gt);
  loss.total = lambda_align * (loss.l1 + loss.l2 + loss.l3 + loss.l4);

  if (grad != nullptr) {
    if (gf.touched) grad->fused = gaussian_moments_backward(fused, mf, gf.mu, gf.sigma);
    if (gi.touched) grad->id = gaussian_moments_backward(id, mi, gi.mu, gi.sigma);
    if (gv.touched) grad->visual = gaussian_moments_backward(visual, mv, gv.mu, gv.sigma);
    if (gt.touched) grad->textual = gaussian_moments_backward(textual, mt, gt.mu, gt.sigma);
  }
  return loss;
}

std::vector<double> alignment_kink_distances(const Matrix& fused, const Matrix& id, const Matrix& visual,
                                             const Matrix& textual, const AlignLevels& levels) {
  std::vector<double> out;
  if (!levels.any()) return out;
  const GaussianMoments mf = gaussian_moments(fused);
  const GaussianMoments mi = gaussian_moments(id);
  const GaussianMoments mv = gaussian_moments(visual);
  const GaussianMoments mt = gaussian_moments(textual);
  auto add = [&](const GaussianMoments& a, const GaussianMoments& b) {
    for (Eigen::Index j = 0; j < a.mu.size(); ++j) {
      out.push_back(a.mu(j) - b.mu(j));
      out.push_back(a.sigma(j) - b.sigma(j));
    }
  };
  if (levels.l1) add(mi, mf);
  if (levels.l2) {
    add(mi, mv);
    add(mi, mt);
  }
  if (levels.l3) {
    add(mf, mv);
    add(mf, mt);
  }
  if (levels.l4) add(mv, mt);
  return out;
}

FeatureMask draw_feature_mask(Eigen::Index n_users, Eigen::Index n_items, Eigen::Index width, double p, Rng& rng) {
  auto draw = [&](Eigen::Index rows) {
    Matrix m(rows, width);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? 0.0 : 1.0;
    return m;
  };
  FeatureMask mask;
  mask.users = draw(n_users);
  mask.items = draw(n_items);
  return mask;
}

namespace {

// 1 - mean_r cos(target_r, pred_r); fills d/d(pred) when requested
double cosine_side(const Matrix& target, const Matrix& pred, Matrix* grad_pred) {
  const Eigen::Index n = target.rows();
  if (grad_pred != nullptr) *grad_pred = Matrix::Zero(pred.rows(), pred.cols());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double na = target.row(r).norm();
    const double nb = pred.row(r).norm();
    if (na == 0.0 || nb == 0.0) continue;
    const double c = target.row(r).dot(pred.row(r)) / (na * nb);
    total += c;
    if (grad_pred != nullptr) {
      grad_pred->row(r) = -(target.row(r) / (na * nb) - c * pred.row(r) / (nb * nb)) / static_cast<double>(n);
    }
  }
  return 1.0 - total / static_cast<double>(n);
}

}  // namespace

double feature_mask_loss(const Matrix& users, const Matrix& items, const FeatureMask& mask, const Matrix& pred_weight,
                         const Matrix& pred_bias, FeatureMaskGrad* grad) {
  if (users.cols() != pred_weight.rows() || items.cols() != pred_weight.rows() ||
      pred_weight.rows() != pred_weight.cols() || pred_bias.cols() != pred_weight.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "feature mask predictor shape");
  }
  require_same_shape(users, mask.users, "feature mask: user mask shape");
  require_same_shape(items, mask.items, "feature mask: item mask shape");

  // the masked views are constants (stop-gradient); only the predictor branch is differentiated
  const Matrix masked_users = users.cwiseProduct(mask.users);
  const Matrix masked_items = items.cwiseProduct(mask.items);
  Matrix pred_users = users * pred_weight;
  pred_users.rowwise() += pred_bias.row(0);
  Matrix pred_items = items * pred_weight;
  pred_items.rowwise() += pred_bias.row(0);

  Matrix d_pred_users, d_pred_items;
  const double loss = cosine_side(masked_users, pred_users, grad ? &d_pred_users : nullptr) +
                      cosine_side(masked_items, pred_items, grad ? &d_pred_items : nullptr);
  if (grad != nullptr) {
    grad->pred_weight = users.transpose() * d_pred_users + items.transpose() * d_pred_items;
    grad->pred_bias = d_pred_users.colwise().sum() + d_pred_items.colwise().sum();
    grad->users = d_pred_users * pred_weight.transpose();
    grad->items = d_pred_items * pred_weight.transpose();
  }
  return loss;
}

double feature_mask_loss(const Matrix& users, const Matrix& items, double p, const Matrix& pred_weight,
                         const Matrix& pred_bias, Rng& rng) {
  const FeatureMask mask = draw_feature_mask(users.rows(), items.rows(), users.cols(), p, rng);
  return feature_mask_loss(users, items, mask, pred_weight, pred_bias);
}

Matrix perturbed_propagate(const NormAdjacency& adj, const Matrix& emb, unsigned layers, double eps, Rng& rng) {
  if (emb.rows() != adj.cols()) throw Error(ErrorCode::DimensionMismatch, "embedding rows do not match the graph");
  Matrix sum = emb;
  Matrix layer = emb;
  for (unsigned l = 0; l < layers; ++l) {
    layer = adj.multiply(layer);
    for (Eigen::Index i = 0; i < layer.size(); ++i) layer.data()[i] += eps * rng.uniform();
    sum += layer;
  }
  return sum;
}

double info_nce(const Matrix& view1, const Matrix& view2, double tau, const std::vector<std::uint32_t>& rows,
                InfoNceGrad* grad, double grad_scale) {
  require_same_shape(view1, view2, "info_nce: view shapes differ");
  if (tau <= 0) throw Error(ErrorCode::RangeError, "tau must be positive");
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m == 0) return 0.0;
  const Eigen::Index w = view1.cols();
  Matrix z1(m, w), z2(m, w);
  Vector n1(m), n2(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::uint32_t row = rows[static_cast<std::size_t>(r)];
    if (row >= view1.rows()) throw Error(ErrorCode::IndexOutOfRange, "info_nce row " + std::to_string(row));
    n1(r) = view1.row(row).norm();
    n2(r) = view2.row(row).norm();
    if (n1(r) == 0.0 || n2(r) == 0.0) throw Error(ErrorCode::ZeroRow, "info_nce row " + std::to_string(row));
    z1.row(r) = view1.row(row) / n1(r);
    z2.row(r) = view2.row(row) / n2(r);
  }
  Matrix logits = (z1 * z2.transpose()) / tau;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const double mx = logits.row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp().matrix();
    const double z = e.sum();
    loss += -(logits(r, r) - mx) + std::log(z);
    logits.row(r) = e / z;  // reuse as the softmax
  }
  if (grad != nullptr) {
    Matrix g = logits;
    g.diagonal().array() -= 1.0;
    const Matrix dz1 = (g * z2) / tau;
    const Matrix dz2 = (g.transpose() * z1) / tau;
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::uint32_t row = rows[static_cast<std::size_t>(r)];
      grad->view1.row(row) += grad_scale * (dz1.row(r) - z1.row(r) * z1.row(r).dot(dz1.row(r))) / n1(r);
      grad->view2.row(row) += grad_scale * (dz2.row(r) - z2.row(r) * z2.row(r).dot(dz2.row(r))) / n2(r);
    }
  }
  return loss;
}

EnhancementLoss enhancement_loss(const EnhancementInputs& in, const EnhancementSettings& settings,
                                 const std::vector<std::uint32_t>& user_rows,
                                 const std::vector<std::uint32_t>& item_rows, const Rng& step_rng,
                                 EnhancementGrad* grad) {
  EnhancementLoss loss;
  const Matrix& fused = *in.fused;
  const Eigen::Index n_items = fused.rows() - in.n_users;
  if (grad != nullptr) {
    grad->visual_input = Matrix::Zero(in.visual_input->rows(), in.visual_input->cols());
    grad->textual_input = Matrix::Zero(in.textual_input->rows(), in.textual_input->cols());
    grad->fused = Matrix::Zero(fused.rows(), fused.cols());
    grad->pred_weight = Matrix::Zero(in.pred_weight->rows(), in.pred_weight->cols());
    grad->pred_bias = Matrix::Zero(in.pred_bias->rows(), in.pred_bias->cols());
  }

  if (settings.lambda_f > 0) {
    Rng mask_rng = step_rng.split(kMaskStream);
    const FeatureMask mask = draw_feature_mask(in.n_users, n_items, fused.cols(), settings.p, mask_rng);
    FeatureMaskGrad fg;
    loss.feature = feature_mask_loss(fused.topRows(in.n_users), fused.bottomRows(n_items), mask, *in.pred_weight,
                                     *in.pred_bias, grad ? &fg : nullptr);
    if (grad != nullptr) {
      grad->fused.topRows(in.n_users) += settings.lambda_f * fg.users;
      grad->fused.bottomRows(n_items) += settings.lambda_f * fg.items;
      grad->pred_weight += settings.lambda_f * fg.pred_weight;
      grad->pred_bias += settings.lambda_f * fg.pred_bias;
    }
  }

  if (settings.lambda_g > 0) {
    std::vector<std::uint32_t> item_nodes(item_rows.size());
    for (std::size_t j = 0; j < item_rows.size(); ++j) item_nodes[j] = in.n_users + item_rows[j];
    auto modality_term = [&](const Matrix& input, std::uint64_t stream1, std::uint64_t stream2, Matrix* grad_input) {
      Rng rng1 = step_rng.split(stream1);
      Rng rng2 = step_rng.split(stream2);
      const Matrix view1 = perturbed_propagate(*in.adjacency, input, in.ui_layers, settings.eps, rng1);
      const Matrix view2 = perturbed_propagate(*in.adjacency, input, in.ui_layers, settings.eps, rng2);
      InfoNceGrad ng;
      if (grad_input != nullptr) {
        ng.view1 = Matrix::Zero(view1.rows(), view1.cols());
        ng.view2 = Matrix::Zero(view2.rows(), view2.cols());
      }
      InfoNceGrad* ngp = grad_input ? &ng : nullptr;
      const double value = info_nce(view1, view2, settings.tau, user_rows, ngp, settings.lambda_g) +
                           info_nce(view1, view2, settings.tau, item_nodes, ngp, settings.lambda_g);
      // the noise is additive, so both views share the propagation Jacobian
      if (grad_input != nullptr) *grad_input += propagate_ui(*in.adjacency, ng.view1 + ng.view2, in.ui_layers);
      return value;
    };
    loss.graph = modality_term(*in.visual_input, kVisualView1Stream, kVisualView2Stream,
                               grad ? &grad->visual_input : nullptr) +
                 modality_term(*in.textual_input, kTextualView1Stream, kTextualView2Stream,
                               grad ? &grad->textual_input : nullptr);
  }
  loss.total = settings.lambda_g * loss.graph + settings.lambda_f * loss.feature;
  return loss;
}

}  // namespace mentor
