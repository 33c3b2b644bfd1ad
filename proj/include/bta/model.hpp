#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bta/decoders.hpp"
#include "bta/graph.hpp"
#include "bta/interactions.hpp"
#include "bta/layers.hpp"
#include "bta/params.hpp"
#include "bta/sample.hpp"

namespace bta {

/// Architecture sizes. d′ = model_dim, d_f = fused_dim.
struct ModelConfig {
  TaskKind task = TaskKind::open_ended;
  std::size_t feature_dim = 32;  // d_in of the precomputed appearance/motion features
  std::size_t embed_dim = 300;
  std::size_t model_dim = 512;
  std::size_t fused_dim = 256;
  std::size_t gcn_layers = 2;
  std::size_t num_labels = 2;      // open-ended
  std::size_t num_candidates = 5;  // multi-choice
  long count_min = 1;
  long count_max = 10;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Ablation rows of the interaction study.
enum class Ablation {
  no_appearance,
  no_motion,
  no_q2v_v2v,
  no_q2a,
  no_q2m,
  no_q2v,
  no_a2m,
  no_m2a,
  no_v2v,
  no_bridge,
};

const std::vector<Ablation>& all_ablations();
std::string ablation_name(Ablation a);
Ablation parse_ablation(const std::string& name);

/// Which stages of the forward pass run.
struct Pathway {
  bool appearance = true;
  bool motion = true;
  bool q2a = true;
  bool q2m = true;
  bool m2a = true;  // produces the final appearance nodes
  bool a2m = true;  // produces the final motion nodes
  bool bridge = true;

  static Pathway from(const std::vector<Ablation>& ablations);
};

struct ForwardConfig {
  double lambda = 10.0;
  Pathway pathway;
};

/// A stage of the forward pass failed; the message starts with the stage name.
class ForwardError : public std::runtime_error {
 public:
  ForwardError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  LinearLayer<T> appearance_proj;  // W_p^v
  LinearLayer<T> motion_proj;      // W_p^m
  BiGRUEncoder<T> encoder;
  LinearLayer<T> q2a_fc;  // W_f^v
  LinearLayer<T> q2m_fc;  // W_f^m
  GCNStack<T> q2a_gcn;    // W_g^v
  GCNStack<T> q2m_gcn;    // W_g^m
  GCNStack<T> m2a_bridge_gcn;  // W_gb^m
  GCNStack<T> a2m_bridge_gcn;  // W_gb^v
  LinearLayer<T> m2a_fc;       // W_b^v
  LinearLayer<T> a2m_fc;       // W_b^m
  LinearLayer<T> m2a_direct_fc;  // W_wob^v
  LinearLayer<T> a2m_direct_fc;  // W_wob^m
  LinearLayer<T> appearance_skip;  // W_s^v, one-way / no-V2V ablations
  LinearLayer<T> motion_skip;      // W_s^m
  AnswerTrunk<T> trunk;            // open-ended and count
  LinearLayer<T> classifier;       // W_y′ (open-ended)
  LinearLayer<T> regressor;        // W_c (count)
  MultiChoiceHead<T> choice;       // multi-choice

 private:
  ModelConfig config_;
  ParamStore<T> params_;
};

template <typename T>
struct ForwardResult {
  Tensor<T> appearance_nodes;  // V̂
  Tensor<T> motion_nodes;      // M̂
  Tensor<T> question_nodes;    // U
  GraphBundle<T> graphs;
  Tensor<T> appearance_conditioned;  // Ṽ
  Tensor<T> motion_conditioned;      // M̃
  Tensor<T> bridged_motion;          // U_b^m
  Tensor<T> aggregated_motion;       // Û_b^m
  Tensor<T> bridged_appearance;      // U_b^v
  Tensor<T> aggregated_appearance;   // Û_b^v
  Tensor<T> final_appearance;        // V^f
  Tensor<T> final_motion;            // M^f
  FusedRepresentation<T> fused;
  InteractionTrace<T> trace;
};

/// Graph construction, Q2A/Q2M, then bridged M2A/A2M (or the ablated variants).
template <typename T>
ForwardResult<T> full_forward(const Model<T>& model, const Tensor<T>& appearance,
                              const Tensor<T>& motion, const QuestionInput<T>& question,
                              const ForwardConfig& config);

template <typename T>
struct Prediction {
  TaskKind task = TaskKind::open_ended;
  /// Probabilities (open-ended), scalar regression (count) or per-candidate scores.
  Tensor<T> output;
  long answer = 0;
};

template <typename T>
struct SampleEvaluation {
  Prediction<T> prediction;
  Tensor<T> loss;  // defined when requested
  ForwardResult<T> question_pass;
};

/// Runs every pass a sample needs (one, or 1 + candidates for multi-choice),
/// decodes, and optionally builds the task loss.
template <typename T>
SampleEvaluation<T> run_sample(const Model<T>& model, const QASample<T>& sample,
                               const ForwardConfig& config, bool with_loss);

}  // namespace bta
