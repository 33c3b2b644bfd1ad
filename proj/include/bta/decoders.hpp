#pragma once

#include <span>
#include <vector>

#include "bta/layers.hpp"
#include "bta/sample.hpp"
#include "bta/tensor.hpp"

namespace bta {

template <typename T>
struct FusedRepresentation {
  Tensor<T> v_bar;  // d_f
  Tensor<T> m_bar;  // d_f
  Tensor<T> o;      // 2·d_f, [v̄; m̄]
  Tensor<T> u_bar;  // d′, mean of the question node features
};

/// Temporal average pooling of the final visual nodes followed by concatenation.
/// u_bar is left undefined; the caller fills it in.
template <typename T>
FusedRepresentation<T> fuse_pool(const Tensor<T>& final_appearance, const Tensor<T>& final_motion);

/// W_1 (question projection), W_2 (joint) and W_y, shared by the open-ended
/// and count heads.
template <typename T>
struct AnswerTrunk {
  LinearLayer<T> question_proj;
  LinearLayer<T> joint;
  LinearLayer<T> hidden;
};

/// y′ = σ(W_y σ(W_2 [o, W_1 ū + b] + b) + b)
template <typename T>
Tensor<T> answer_trunk_forward(const AnswerTrunk<T>& trunk, const FusedRepresentation<T>& fused);

template <typename T>
struct OpenEndedOutput {
  Tensor<T> logits;
  Tensor<T> probabilities;
};

template <typename T>
OpenEndedOutput<T> open_ended_decode(const AnswerTrunk<T>& trunk, const LinearLayer<T>& classifier,
                                     const FusedRepresentation<T>& fused);

template <typename T>
struct CountOutput {
  Tensor<T> raw;  // scalar
  long answer = 0;
};

long round_count(double raw, long count_min, long count_max);

template <typename T>
CountOutput<T> count_decode(const AnswerTrunk<T>& trunk, const LinearLayer<T>& regressor,
                            const FusedRepresentation<T>& fused, long count_min, long count_max);

template <typename T>
struct MultiChoiceHead {
  LinearLayer<T> question_proj;   // W_w
  LinearLayer<T> candidate_proj;  // W_a
  LinearLayer<T> hidden;          // W_y, relu
  LinearLayer<T> score;           // W_y′, → 1
};

/// s_i = W_y′ σ(W_y [o, o_i^a, W_w ū + b, W_a ā_i + b] + b) + b, as a scalar tensor.
template <typename T>
Tensor<T> multichoice_score(const MultiChoiceHead<T>& head, const Tensor<T>& o,
                            const Tensor<T>& o_candidate, const Tensor<T>& u_bar,
                            const Tensor<T>& a_bar);

/// Index of the largest score; ties go to the lowest index.
std::size_t select_answer(std::span<const double> scores);

template <typename T>
std::size_t select_answer(const Tensor<T>& scores) {
  std::vector<double> s(scores.data().begin(), scores.data().end());
  return select_answer(std::span<const double>(s));
}

inline constexpr double kLogFloor = 1e-12;

/// −log max(p[label], 1e-12)
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& probabilities, std::size_t label);

/// Mean of (raw − target)² over the elements of raw.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& raw, const Tensor<T>& target);

/// Σ over negatives n of max(0, 1 + s_n − s_correct).
template <typename T>
Tensor<T> hinge_loss(const Tensor<T>& scores, std::size_t correct);

}  // namespace bta
