#include "bta/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace bta {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (feature_dim == 0 || embed_dim == 0) fail("feature and embedding dims must be positive");
  if (model_dim == 0 || model_dim % 2 != 0) fail("model_dim must be positive and even");
  if (fused_dim == 0) fail("fused_dim must be positive");
  if (gcn_layers == 0) fail("gcn_layers must be at least 1");
  if (task == TaskKind::open_ended && num_labels < 2) fail("open-ended needs at least 2 labels");
  if (task == TaskKind::multi_choice && num_candidates < 2) fail("multi-choice needs >= 2 candidates");
  if (task == TaskKind::count && count_min > count_max) fail("count_min > count_max");
}

const std::vector<Ablation>& all_ablations() {
  static const std::vector<Ablation> all = {
      Ablation::no_appearance, Ablation::no_motion, Ablation::no_q2v_v2v, Ablation::no_q2a,
      Ablation::no_q2m,        Ablation::no_q2v,    Ablation::no_a2m,     Ablation::no_m2a,
      Ablation::no_v2v,        Ablation::no_bridge};
  return all;
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::no_appearance: return "no-appearance";
    case Ablation::no_motion: return "no-motion";
    case Ablation::no_q2v_v2v: return "no-q2v-v2v";
    case Ablation::no_q2a: return "no-q2a";
    case Ablation::no_q2m: return "no-q2m";
    case Ablation::no_q2v: return "no-q2v";
    case Ablation::no_a2m: return "no-a2m";
    case Ablation::no_m2a: return "no-m2a";
    case Ablation::no_v2v: return "no-v2v";
    case Ablation::no_bridge: return "no-bridge";
  }
  return "?";
}

Ablation parse_ablation(const std::string& name) {
  for (auto a : all_ablations())
    if (ablation_name(a) == name) return a;
  throw std::invalid_argument("unknown ablation '" + name + "'");
}

Pathway Pathway::from(const std::vector<Ablation>& ablations) {
  Pathway p;
  for (auto a : ablations) {
    switch (a) {
      case Ablation::no_appearance:
        p.appearance = p.q2a = p.m2a = p.a2m = false;
        break;
      case Ablation::no_motion:
        p.motion = p.q2m = p.m2a = p.a2m = false;
        break;
      case Ablation::no_q2v_v2v:
        p.q2a = p.q2m = p.m2a = p.a2m = false;
        break;
      case Ablation::no_q2a: p.q2a = false; break;
      case Ablation::no_q2m: p.q2m = false; break;
      case Ablation::no_q2v: p.q2a = p.q2m = false; break;
      case Ablation::no_a2m: p.a2m = false; break;
      case Ablation::no_m2a: p.m2a = false; break;
      case Ablation::no_v2v: p.m2a = p.a2m = false; break;
      case Ablation::no_bridge: p.bridge = false; break;
    }
  }
  return p;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t din = config.feature_dim, d = config.model_dim, df = config.fused_dim;
  std::vector<std::size_t> gcn_dims(config.gcn_layers + 1, d);
  auto& p = params_;
  using L = LinearLayer<T>;
  const auto relu = Activation::relu, none = Activation::none;
  const auto app = Branch::appearance, mot = Branch::motion, dec = Branch::decoder;

  appearance_proj = L::create(p, "W_p^v", "b_p^v", din, d, none, app, rng);
  motion_proj = L::create(p, "W_p^m", "b_p^m", din, d, none, mot, rng);
  encoder = BiGRUEncoder<T>::create(p, config.embed_dim, d, rng);
  q2a_fc = L::create(p, "W_f^v", "b_f^v", d, d, relu, app, rng);
  q2a_gcn = GCNStack<T>::create(p, "W_g^v", gcn_dims, relu, app, rng);
  q2m_fc = L::create(p, "W_f^m", "b_f^m", d, d, relu, mot, rng);
  q2m_gcn = GCNStack<T>::create(p, "W_g^m", gcn_dims, relu, mot, rng);
  m2a_bridge_gcn = GCNStack<T>::create(p, "W_gb^m", gcn_dims, relu, mot, rng);
  m2a_fc = L::create(p, "W_b^v", "b_b^v", d, df, relu, app, rng);
  a2m_bridge_gcn = GCNStack<T>::create(p, "W_gb^v", gcn_dims, relu, app, rng);
  a2m_fc = L::create(p, "W_b^m", "b_b^m", d, df, relu, mot, rng);
  m2a_direct_fc = L::create(p, "W_wob^v", "b_wob^v", d, df, relu, app, rng);
  a2m_direct_fc = L::create(p, "W_wob^m", "b_wob^m", d, df, relu, mot, rng);
  appearance_skip = L::create(p, "W_s^v", "b_s^v", d, df, relu, app, rng);
  motion_skip = L::create(p, "W_s^m", "b_s^m", d, df, relu, mot, rng);

  if (config.task == TaskKind::multi_choice) {
    choice.question_proj = L::create(p, "W_w", "b_w", d, d, none, dec, rng);
    choice.candidate_proj = L::create(p, "W_a", "b_a", d, d, none, dec, rng);
    choice.hidden = L::create(p, "W_y", "b_y", 2 * (2 * df) + 2 * d, d, relu, dec, rng);
    choice.score = L::create(p, "W_y'", "b_y'", d, 1, none, dec, rng);
  } else {
    trunk.question_proj = L::create(p, "W_1", "b_1", d, d, none, dec, rng);
    trunk.joint = L::create(p, "W_2", "b_2", 2 * df + d, d, relu, dec, rng);
    trunk.hidden = L::create(p, "W_y", "b_y", d, df, relu, dec, rng);
    if (config.task == TaskKind::open_ended) {
      classifier = L::create(p, "W_y'", "b_y'", df, config.num_labels, none, dec, rng);
    } else {
      regressor = L::create(p, "W_c", "b_c", df, 1, none, dec, rng);
    }
  }
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ForwardError&) {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw ForwardError(name, e.what());
  }
}

std::vector<std::string> numbered(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(prefix) + std::to_string(i));
  return out;
}

}  // namespace

template <typename T>
ForwardResult<T> full_forward(const Model<T>& model, const Tensor<T>& appearance,
                              const Tensor<T>& motion, const QuestionInput<T>& question,
                              const ForwardConfig& config) {
  const auto& cfg = model.config();
  const auto& path = config.pathway;
  const T lambda = static_cast<T>(config.lambda);
  ForwardResult<T> r;

  stage("input", [&] {
    auto check = [&](const Tensor<T>& t, std::size_t cols, const char* what) {
      if (!t.defined() || t.rank() != 2 || t.dim(0) == 0 || t.dim(1) != cols) {
        throw DimensionError(std::string(what) + " has shape " +
                             (t.defined() ? shape_str(t.shape()) : std::string("<none>")) +
                             ", expected n x " + std::to_string(cols));
      }
    };
    if (path.appearance) check(appearance, cfg.feature_dim, "appearance features");
    if (path.motion) check(motion, cfg.feature_dim, "motion features");
    check(question.embeddings, cfg.embed_dim, "question embeddings");
  });

  // Graph construction.
  stage("question encoder", [&] { r.question_nodes = bigru_encode(model.encoder, question.embeddings); });
  const auto& u = r.question_nodes;
  stage("question graph", [&] {
    r.graphs.affinity = question_affinity(u, lambda);
    r.graphs.adjacency = adjacency_from_dependencies<T>(question.edges, u.dim(0));
    r.graphs.question = question_graph_weights(u, r.graphs.adjacency, lambda);
  });
  if (path.appearance) {
    stage("appearance graph", [&] {
      r.appearance_nodes = linear_forward(model.appearance_proj, appearance);
      r.graphs.appearance = visual_edge_weights(r.appearance_nodes, lambda);
    });
  }
  if (path.motion) {
    stage("motion graph", [&] {
      r.motion_nodes = linear_forward(model.motion_proj, motion);
      r.graphs.motion = visual_edge_weights(r.motion_nodes, lambda);
    });
  }

  // Question-to-visual.
  if (path.appearance) {
    if (path.q2a) {
      stage("Q2A", [&] {
        auto q = q2v_interaction(r.appearance_nodes, u, r.graphs.appearance, model.q2a_fc,
                                 model.q2a_gcn, lambda);
        r.trace.matrices["S^v"] = q.interaction;
        r.appearance_conditioned = q.conditioned;
      });
    } else {
      r.appearance_conditioned = r.appearance_nodes;
    }
  }
  if (path.motion) {
    if (path.q2m) {
      stage("Q2M", [&] {
        auto q = q2v_interaction(r.motion_nodes, u, r.graphs.motion, model.q2m_fc, model.q2m_gcn,
                                 lambda);
        r.trace.matrices["S^m"] = q.interaction;
        r.motion_conditioned = q.conditioned;
      });
    } else {
      r.motion_conditioned = r.motion_nodes;
    }
  }

  // Visual-to-visual.
  const auto& v_tilde = r.appearance_conditioned;
  const auto& m_tilde = r.motion_conditioned;
  if (path.appearance) {
    if (path.m2a && path.motion) {
      stage("M2A", [&] {
        if (path.bridge) {
          auto b = bridge_aggregate(u, m_tilde, r.graphs.question, model.m2a_bridge_gcn, lambda);
          auto out = v2v_deliver(v_tilde, b.aggregated, model.m2a_fc, lambda);
          r.bridged_motion = b.bridged;
          r.aggregated_motion = b.aggregated;
          r.trace.matrices["bridge^m"] = b.attention;
          r.trace.matrices["S_b^v"] = out.interaction;
          r.final_appearance = out.output;
        } else {
          auto out = v2v_no_bridge(v_tilde, m_tilde, model.m2a_direct_fc, lambda);
          r.trace.matrices["S_wob^v"] = out.interaction;
          r.final_appearance = out.output;
        }
      });
    } else {
      stage("appearance skip", [&] { r.final_appearance = linear_forward(model.appearance_skip, v_tilde); });
    }
  }
  if (path.motion) {
    if (path.a2m && path.appearance) {
      stage("A2M", [&] {
        if (path.bridge) {
          auto b = bridge_aggregate(u, v_tilde, r.graphs.question, model.a2m_bridge_gcn, lambda);
          auto out = v2v_deliver(m_tilde, b.aggregated, model.a2m_fc, lambda);
          r.bridged_appearance = b.bridged;
          r.aggregated_appearance = b.aggregated;
          r.trace.matrices["bridge^v"] = b.attention;
          r.trace.matrices["S_b^m"] = out.interaction;
          r.final_motion = out.output;
        } else {
          auto out = v2v_no_bridge(m_tilde, v_tilde, model.a2m_direct_fc, lambda);
          r.trace.matrices["S_wob^m"] = out.interaction;
          r.final_motion = out.output;
        }
      });
    } else {
      stage("motion skip", [&] { r.final_motion = linear_forward(model.motion_skip, m_tilde); });
    }
  }

  stage("fusion", [&] {
    // An ablated branch contributes a zero pooled vector so decoder shapes stay fixed.
    auto v_f = path.appearance ? r.final_appearance : Tensor<T>::zeros({1, cfg.fused_dim});
    auto m_f = path.motion ? r.final_motion : Tensor<T>::zeros({1, cfg.fused_dim});
    r.fused = fuse_pool(v_f, m_f);
    r.fused.u_bar = mean_along_axis(u, 0);
  });

  if (path.appearance) r.trace.frame_labels = numbered("frame ", appearance.dim(0));
  if (path.motion) r.trace.clip_labels = numbered("clip ", motion.dim(0));
  r.trace.token_labels = question.tokens;
  if (r.trace.token_labels.size() != u.dim(0)) r.trace.token_labels = numbered("token ", u.dim(0));
  return r;
}

template <typename T>
SampleEvaluation<T> run_sample(const Model<T>& model, const QASample<T>& sample,
                               const ForwardConfig& config, bool with_loss) {
  const auto& cfg = model.config();
  SampleEvaluation<T> ev;
  ev.prediction.task = cfg.task;
  ev.question_pass = full_forward(model, sample.appearance, sample.motion, sample.question, config);
  const auto& fused = ev.question_pass.fused;

  switch (cfg.task) {
    case TaskKind::open_ended: {
      auto out = stage("decoder", [&] { return open_ended_decode(model.trunk, model.classifier, fused); });
      ev.prediction.output = out.probabilities;
      ev.prediction.answer = static_cast<long>(select_answer(out.probabilities));
      if (with_loss) {
        if (sample.answer < 0 || static_cast<std::size_t>(sample.answer) >= cfg.num_labels) {
          throw std::out_of_range("sample " + sample.id + ": label out of range");
        }
        ev.loss = cross_entropy_loss(out.probabilities, static_cast<std::size_t>(sample.answer));
      }
      break;
    }
    case TaskKind::count: {
      auto out = stage("decoder", [&] {
        return count_decode(model.trunk, model.regressor, fused, cfg.count_min, cfg.count_max);
      });
      ev.prediction.output = out.raw;
      ev.prediction.answer = out.answer;
      if (with_loss) {
        ev.loss = mse_loss(out.raw, Tensor<T>::scalar(static_cast<T>(sample.answer)));
      }
      break;
    }
    case TaskKind::multi_choice: {
      if (sample.candidates.empty()) {
        throw ForwardError("decoder", "sample " + sample.id + " has no answer candidates");
      }
      std::vector<Tensor<T>> scores;
      const std::size_t k = sample.question.size();
      for (std::size_t i = 0; i < sample.candidates.size(); ++i) {
        const auto& cand = sample.candidates[i];
        auto joint = append_candidate(sample.question, cand);
        auto pass = full_forward(model, sample.appearance, sample.motion, joint, config);
        auto a_bar = stage("candidate", [&] {
          return mean_along_axis(slice_rows(pass.question_nodes, k, k + cand.size()), 0);
        });
        auto s = stage("decoder", [&] {
          return multichoice_score(model.choice, fused.o, pass.fused.o, fused.u_bar, a_bar);
        });
        scores.push_back(reshape(s, {1}));
      }
      auto all = concat_last_axis(scores);
      ev.prediction.output = all;
      ev.prediction.answer = static_cast<long>(select_answer(all));
      if (with_loss) {
        if (sample.answer < 0 || static_cast<std::size_t>(sample.answer) >= scores.size()) {
          throw std::out_of_range("sample " + sample.id + ": correct candidate out of range");
        }
        ev.loss = hinge_loss(all, static_cast<std::size_t>(sample.answer));
      }
      break;
    }
  }
  return ev;
}

template class Model<float>;
template class Model<double>;
template ForwardResult<float> full_forward(const Model<float>&, const Tensor<float>&,
                                           const Tensor<float>&, const QuestionInput<float>&,
                                           const ForwardConfig&);
template ForwardResult<double> full_forward(const Model<double>&, const Tensor<double>&,
                                            const Tensor<double>&, const QuestionInput<double>&,
                                            const ForwardConfig&);
template SampleEvaluation<float> run_sample(const Model<float>&, const QASample<float>&,
                                            const ForwardConfig&, bool);
template SampleEvaluation<double> run_sample(const Model<double>&, const QASample<double>&,
                                             const ForwardConfig&, bool);

}  // namespace bta
