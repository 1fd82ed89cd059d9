#include <algorithm>
#include <cmath>

#include "zrigf/contrastive.hpp"
#include "zrigf/error.hpp"

namespace zrigf {

CosineResult cosine_similarity(const PooledRepr& a, const PooledRepr& b) {
  const auto x = a.vector.data();
  const auto y = b.vector.data();
  if (x.size() != y.size()) {
    throw DimensionError("cosine_similarity: " + shape_to_string(a.vector.shape()) + " vs " +
                         shape_to_string(b.vector.shape()));
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  CosineResult r;
  r.degenerate = nx < kCosineEps || ny < kCosineEps;
  r.value = dot / (std::max(nx, kCosineEps) * std::max(ny, kCosineEps));
  return r;
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  return matmul_transposed(l2_normalize_rows(a, kCosineEps), l2_normalize_rows(b, kCosineEps));
}

Tensor clip_loss(const SimilarityMatrix& s) {
  const std::size_t n = s.sims.extent(0);
  if (s.sims.rank() != 2 || s.sims.extent(1) != n) {
    throw DimensionError("clip_loss: similarity matrix must be square, got " + shape_to_string(s.sims.shape()));
  }
  if (n < 2) throw ContractError("clip_loss: batch of " + std::to_string(n) + " has no negatives");
  const Tensor logits = scale(s.sims, exp(mul_scalar(s.log_tau, -1.0)));
  std::vector<int> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = static_cast<int>(i);
  const Tensor rows = take_along_rows(log_softmax(logits, 1), diag);
  const Tensor cols = take_along_rows(log_softmax(logits, 0), diag);
  return mul_scalar(add(mean(rows), mean(cols)), -1.0);
}

void clamp_log_tau(Tensor& log_tau) {
  for (double& v : log_tau.mutable_data()) v = std::clamp(v, kMinLogTau, kMaxLogTau);
}

ContrastiveLosses contrastive_total(const Tensor& match, const Tensor& recon, double lambda1) {
  return {match, recon, add(match, mul_scalar(recon, lambda1)), lambda1};
}

}  // namespace zrigf
