#include "bta/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bta/manifest.hpp"
#include "bta/random.hpp"

namespace bta {

namespace {

constexpr std::size_t kVocabulary = 64;
const char* const kRelations[] = {"nsubj", "dobj", "amod", "det", "prep", "advmod"};

// Stored values go through float so a dataset written as f32 and read back
// is identical to the one generated in memory.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

template <typename T>
Tensor<T> to_tensor(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
  std::vector<T> data(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) data[i] = static_cast<T>(f32(v[i]));
  return Tensor<T>({rows, cols}, std::move(data));
}

std::vector<double> normal_vector(Rng& rng, std::size_t n, double sd = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

std::vector<double> unit(std::vector<double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

struct Vocabulary {
  std::vector<std::vector<double>> embedding;

  Vocabulary(Rng& rng, std::size_t dim) {
    for (std::size_t w = 0; w < kVocabulary; ++w) embedding.push_back(normal_vector(rng, dim, 0.5));
  }
};

// Random tree over k tokens: token i > 0 hangs off an earlier token.
template <typename T>
QuestionInput<T> random_question(Rng& rng, const Vocabulary& vocab, std::size_t k, std::size_t dim,
                                 const std::string& prefix) {
  QuestionInput<T> q;
  std::vector<double> rows;
  rows.reserve(k * dim);
  for (std::size_t i = 0; i < k; ++i) {
    const auto w = rng.index(kVocabulary);
    q.tokens.push_back(prefix + std::to_string(w));
    rows.insert(rows.end(), vocab.embedding[w].begin(), vocab.embedding[w].end());
  }
  for (std::size_t i = 1; i < k; ++i) {
    const auto parent = rng.index(i);
    q.edges.push_back({parent, i, kRelations[rng.index(std::size(kRelations))]});
  }
  q.embeddings = to_tensor<T>(k, dim, rows);
  return q;
}

// Appearance frames follow their clip's motion feature plus noise.
std::vector<double> frames_from_clips(Rng& rng, const std::vector<double>& motion, std::size_t clips,
                                      std::size_t per_clip, std::size_t dim, double noise) {
  std::vector<double> out;
  out.reserve(clips * per_clip * dim);
  for (std::size_t c = 0; c < clips; ++c) {
    for (std::size_t t = 0; t < per_clip; ++t) {
      for (std::size_t j = 0; j < dim; ++j) out.push_back(motion[c * dim + j] + noise * rng.normal());
    }
  }
  return out;
}

std::size_t count_bursts(const std::vector<double>& motion, const std::vector<double>& direction,
                         std::size_t clips) {
  const std::size_t dim = direction.size();
  std::size_t n = 0;
  for (std::size_t c = 0; c < clips; ++c) {
    if (dot(&motion[c * dim], direction.data(), dim) > kBurstThreshold) ++n;
  }
  return n;
}

}  // namespace

std::vector<double> synthetic_burst_direction(const SyntheticSpec& spec) {
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  return unit(normal_vector(rng, spec.feature_dim));
}

template <typename T>
Dataset<T> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.samples == 0 || spec.clips == 0 || spec.frames_per_clip == 0 || spec.tokens == 0 ||
      spec.feature_dim == 0 || spec.embed_dim == 0) {
    throw std::invalid_argument("synthetic sizes must be at least 1");
  }
  Rng rng(spec.seed);
  const std::size_t n = spec.clips, per = spec.frames_per_clip, d = spec.feature_dim;
  Vocabulary vocab(rng, spec.embed_dim);

  Dataset<T> ds;
  ds.name = "synthetic-" + task_name(spec.task) + "-" + std::to_string(spec.seed);
  ds.answers.task = spec.task;
  ds.clips = n;
  ds.frames_per_clip = per;
  ds.feature_dim = d;
  ds.embed_dim = spec.embed_dim;

  std::vector<std::vector<double>> prototypes;
  std::vector<double> burst;
  std::vector<double> projection;  // embed_dim × d
  switch (spec.task) {
    case TaskKind::open_ended:
      if (spec.num_labels == 0) throw std::invalid_argument("num_labels must be at least 1");
      for (std::size_t k = 0; k < spec.num_labels; ++k) {
        prototypes.push_back(normal_vector(rng, d));
        ds.answers.labels.push_back("label" + std::to_string(k));
      }
      break;
    case TaskKind::count:
      burst = synthetic_burst_direction(spec);
      ds.answers.count_min = 1;
      ds.answers.count_max = std::max<long>(1, std::min<long>(spec.count_max, static_cast<long>(n)));
      break;
    case TaskKind::multi_choice:
      if (spec.num_candidates == 0 || spec.candidate_tokens == 0) {
        throw std::invalid_argument("multi-choice needs candidates and candidate tokens");
      }
      projection = normal_vector(rng, spec.embed_dim * d, 1.0 / std::sqrt(static_cast<double>(d)));
      ds.answers.num_candidates = spec.num_candidates;
      break;
  }

  for (std::size_t i = 0; i < spec.samples; ++i) {
    QASample<T> s;
    s.id = "s" + std::to_string(i);
    s.question = random_question<T>(rng, vocab, spec.tokens, spec.embed_dim, "w");
    std::vector<double> motion(n * d);

    switch (spec.task) {
      case TaskKind::open_ended: {
        const auto& proto = prototypes[rng.index(prototypes.size())];
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t j = 0; j < d; ++j) motion[c * d + j] = proto[j] + spec.noise * rng.normal();
        for (auto& x : motion) x = f32(x);
        // The label is whatever prototype the realised clip mean is nearest to.
        std::vector<double> mean(d, 0.0);
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t j = 0; j < d; ++j) mean[j] += motion[c * d + j] / static_cast<double>(n);
        double best = INFINITY;
        for (std::size_t k = 0; k < prototypes.size(); ++k) {
          double dist = 0.0;
          for (std::size_t j = 0; j < d; ++j) dist += (mean[j] - prototypes[k][j]) * (mean[j] - prototypes[k][j]);
          if (dist < best) {
            best = dist;
            s.answer = static_cast<long>(k);
          }
        }
        break;
      }
      case TaskKind::count: {
        const auto target = static_cast<std::size_t>(
            ds.answers.count_min + static_cast<long>(rng.index(
                                       static_cast<std::size_t>(ds.answers.count_max - ds.answers.count_min + 1))));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
        do {
          for (std::size_t c = 0; c < n; ++c)
            for (std::size_t j = 0; j < d; ++j) motion[c * d + j] = spec.noise * rng.normal();
          for (std::size_t k = 0; k < target; ++k)
            for (std::size_t j = 0; j < d; ++j) motion[order[k] * d + j] += 3.0 * burst[j];
          for (auto& x : motion) x = f32(x);
        } while (count_bursts(motion, burst, n) != target);
        s.answer = static_cast<long>(target);
        break;
      }
      case TaskKind::multi_choice: {
        const auto planted = unit(normal_vector(rng, d));
        for (std::size_t c = 0; c < n; ++c)
          for (std::size_t j = 0; j < d; ++j) motion[c * d + j] = spec.noise * rng.normal();
        s.answer = static_cast<long>(i % spec.num_candidates);
        for (std::size_t c = 0; c < spec.num_candidates; ++c) {
          const auto dir = static_cast<long>(c) == s.answer ? planted : unit(normal_vector(rng, d));
          std::vector<double> image(spec.embed_dim, 0.0);
          for (std::size_t e = 0; e < spec.embed_dim; ++e) image[e] = dot(&projection[e * d], dir.data(), d);
          auto cand = random_question<T>(rng, vocab, spec.candidate_tokens, spec.embed_dim, "a");
          std::vector<double> rows;
          for (std::size_t t = 0; t < spec.candidate_tokens; ++t)
            for (std::size_t e = 0; e < spec.embed_dim; ++e) rows.push_back(image[e] + spec.noise * rng.normal());
          cand.embeddings = to_tensor<T>(spec.candidate_tokens, spec.embed_dim, rows);
          s.candidates.push_back(std::move(cand));
        }
        auto frames = frames_from_clips(rng, motion, n, per, d, spec.noise);
        for (std::size_t f = 0; f < n * per; ++f)
          for (std::size_t j = 0; j < d; ++j) frames[f * d + j] += 2.0 * planted[j];
        s.appearance = to_tensor<T>(n * per, d, frames);
        break;
      }
    }
    if (!s.appearance.defined()) s.appearance = to_tensor<T>(n * per, d, frames_from_clips(rng, motion, n, per, d, spec.noise));
    s.motion = to_tensor<T>(n, d, motion);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::filesystem::path write_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  return write_manifest(generate_synthetic<float>(spec), dir);
}

template Dataset<float> generate_synthetic<float>(const SyntheticSpec&);
template Dataset<double> generate_synthetic<double>(const SyntheticSpec&);

}  // namespace bta
