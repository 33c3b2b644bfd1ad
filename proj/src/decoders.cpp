#include "bta/decoders.hpp"

#include <cmath>
#include <stdexcept>

namespace bta {

template <typename T>
FusedRepresentation<T> fuse_pool(const Tensor<T>& final_appearance, const Tensor<T>& final_motion) {
  FusedRepresentation<T> f;
  f.v_bar = mean_along_axis(final_appearance, 0);
  f.m_bar = mean_along_axis(final_motion, 0);
  f.o = concat_last_axis<T>({f.v_bar, f.m_bar});
  return f;
}

template <typename T>
Tensor<T> answer_trunk_forward(const AnswerTrunk<T>& trunk, const FusedRepresentation<T>& fused) {
  auto q = linear_forward(trunk.question_proj, fused.u_bar);
  auto y = linear_forward(trunk.joint, concat_last_axis<T>({fused.o, q}));
  return linear_forward(trunk.hidden, y);
}

template <typename T>
OpenEndedOutput<T> open_ended_decode(const AnswerTrunk<T>& trunk, const LinearLayer<T>& classifier,
                                     const FusedRepresentation<T>& fused) {
  OpenEndedOutput<T> out;
  out.logits = linear_forward(classifier, answer_trunk_forward(trunk, fused));
  out.probabilities = softmax_along_axis(out.logits, 0, T(1));
  return out;
}

long round_count(double raw, long count_min, long count_max) {
  if (!std::isfinite(raw)) throw NumericError("count regression produced a non-finite value");
  const double r = std::floor(raw + 0.5);
  if (r < static_cast<double>(count_min)) return count_min;
  if (r > static_cast<double>(count_max)) return count_max;
  return static_cast<long>(r);
}

template <typename T>
CountOutput<T> count_decode(const AnswerTrunk<T>& trunk, const LinearLayer<T>& regressor,
                            const FusedRepresentation<T>& fused, long count_min, long count_max) {
  CountOutput<T> out;
  out.raw = reshape(linear_forward(regressor, answer_trunk_forward(trunk, fused)), {});
  out.answer = round_count(static_cast<double>(out.raw.item()), count_min, count_max);
  return out;
}

template <typename T>
Tensor<T> multichoice_score(const MultiChoiceHead<T>& head, const Tensor<T>& o,
                            const Tensor<T>& o_candidate, const Tensor<T>& u_bar,
                            const Tensor<T>& a_bar) {
  if (!o_candidate.defined() || !a_bar.defined()) {
    throw std::invalid_argument("multichoice_score: missing candidate representation");
  }
  auto y = concat_last_axis<T>({o, o_candidate, linear_forward(head.question_proj, u_bar),
                                linear_forward(head.candidate_proj, a_bar)});
  return reshape(linear_forward(head.score, linear_forward(head.hidden, y)), {});
}

std::size_t select_answer(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("select_answer: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& probabilities, std::size_t label) {
  if (label >= probabilities.numel()) {
    throw std::out_of_range("label " + std::to_string(label) + " outside answer space of " +
                            std::to_string(probabilities.numel()));
  }
  return scale(log_floor(pick(probabilities, label), static_cast<T>(kLogFloor)), T(-1));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& raw, const Tensor<T>& target) {
  auto diff = sub(raw, target);
  return scale(sum(mul(diff, diff)), T(1) / static_cast<T>(raw.numel()));
}

template <typename T>
Tensor<T> hinge_loss(const Tensor<T>& scores, std::size_t correct) {
  if (correct >= scores.numel()) {
    throw std::out_of_range("correct index " + std::to_string(correct) + " outside " +
                            std::to_string(scores.numel()) + " candidates");
  }
  auto positive = pick(scores, correct);
  std::vector<Tensor<T>> terms;
  for (std::size_t i = 0; i < scores.numel(); ++i) {
    if (i == correct) continue;
    terms.push_back(relu(add_scalar(sub(pick(scores, i), positive), T(1))));
  }
  if (terms.empty()) return scale(positive, T(0));
  return add_n(terms);
}

#define BTA_INSTANTIATE(T)                                                                   \
  template FusedRepresentation<T> fuse_pool(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> answer_trunk_forward(const AnswerTrunk<T>&, const FusedRepresentation<T>&); \
  template OpenEndedOutput<T> open_ended_decode(const AnswerTrunk<T>&, const LinearLayer<T>&, \
                                                const FusedRepresentation<T>&);              \
  template CountOutput<T> count_decode(const AnswerTrunk<T>&, const LinearLayer<T>&,         \
                                       const FusedRepresentation<T>&, long, long);           \
  template Tensor<T> multichoice_score(const MultiChoiceHead<T>&, const Tensor<T>&,          \
                                       const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> cross_entropy_loss(const Tensor<T>&, std::size_t);                     \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> hinge_loss(const Tensor<T>&, std::size_t);

BTA_INSTANTIATE(float)
BTA_INSTANTIATE(double)

#undef BTA_INSTANTIATE

}  // namespace bta
