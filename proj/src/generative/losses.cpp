#include "zrigf/contrastive.hpp"
#include "zrigf/error.hpp"
#include "zrigf/generative.hpp"
#include "zrigf/tokenizer.hpp"

namespace zrigf {

Tensor preservation_loss(const Tensor& contexts, const Tensor& images, std::span<const std::uint8_t> y) {
  const std::size_t n = contexts.extent(0), m = images.extent(0);
  if (y.size() != n * m) {
    throw DimensionError("preservation_loss: match matrix of " + std::to_string(y.size()) + " entries for " +
                         std::to_string(n) + " contexts x " + std::to_string(m) + " images");
  }
  const Tensor s = cosine_matrix(contexts, images);
  std::vector<double> pos(n * m), neg(n * m);
  for (std::size_t i = 0; i < y.size(); ++i) {
    pos[i] = y[i] ? 1.0 : 0.0;
    neg[i] = 1.0 - pos[i];
  }
  // log(1 - sigmoid(s)) == log(sigmoid(-s))
  const Tensor ll = add(mul(Tensor::from_data({n, m}, std::move(pos)), log(sigmoid(s))),
                        mul(Tensor::from_data({n, m}, std::move(neg)), log(sigmoid(mul_scalar(s, -1.0)))));
  return mul_scalar(sum(ll), -1.0 / static_cast<double>(m));
}

Tensor generation_loss(const Tensor& logits, std::span<const int> gold, double smoothing) {
  if (logits.rank() != 2 || logits.extent(0) != gold.size()) {
    throw DimensionError("generation_loss: logits " + shape_to_string(logits.shape()) + " for " +
                         std::to_string(gold.size()) + " gold tokens");
  }
  std::vector<int> rows, targets;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == kPadId) continue;
    rows.push_back(static_cast<int>(i));
    targets.push_back(gold[i]);
  }
  if (rows.empty()) return Tensor::zeros({1});
  const Tensor lp = gather_rows(log_softmax(logits, 1), rows);
  const Tensor nll = mean(take_along_rows(lp, targets));
  if (smoothing == 0.0) return mul_scalar(nll, -1.0);
  return mul_scalar(add(mul_scalar(nll, 1.0 - smoothing), mul_scalar(mean(lp), smoothing)), -1.0);
}

Tensor generative_total(const Tensor& gen, const Tensor& preservation, double lambda2) {
  return add(gen, mul_scalar(preservation, lambda2));
}

}  // namespace zrigf
