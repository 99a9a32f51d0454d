#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cops/train.hpp"

namespace cops {

/// Records with their cleaned text and encoder means [N,L].
struct LatentCorpus {
  std::vector<LabeledRecord> records;
  std::vector<std::string> cleaned;
  Tensor<float> mu;

  std::size_t size() const { return records.size(); }
};

inline void require_trained(const Generator& g) {
  require(g.trained, ErrorCode::UntrainedModel, "generator has not been trained");
}

inline LatentCorpus latent_corpus(const Generator& g, std::span<const LabeledRecord> records) {
  require_trained(g);
  LatentCorpus c;
  c.records.assign(records.begin(), records.end());
  const auto items = g.featurizer.encode_all(records);
  for (const auto& it : items) c.cleaned.push_back(it.cleaned);
  c.mu = items.empty() ? Tensor<float>({0, g.model.config().latent_dim}) : g.latent_means(items);
  return c;
}

inline double cosine(const float* a, const float* b, std::size_t n) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  const double den = std::sqrt(aa) * std::sqrt(bb);
  return den > 0 ? ab / den : 0.0;
}

/// Index of the entry (other than `ref`) whose mean is most cosine-similar
/// to the reference's. Ties go to the lower index.
inline std::size_t nearest_neighbor(const LatentCorpus& c, std::size_t ref) {
  require(c.size() >= 2, ErrorCode::EmptyCorpus, "need at least two sentences to find a neighbour");
  require(ref < c.size(), ErrorCode::InvalidArgument, "reference index out of range");
  const std::size_t l = c.mu.dim(1);
  std::size_t best = ref == 0 ? 1 : 0;
  double best_sim = -2.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (j == ref) continue;
    const double s = cosine(c.mu.data() + ref * l, c.mu.data() + j * l, l);
    if (s > best_sim) {
      best_sim = s;
      best = j;
    }
  }
  return best;
}

struct SynthesisOptions {
  std::vector<double> alphas{0.25, 0.5, 0.75};
  /// Drop outputs equal to either endpoint sentence (and repeats).
  bool drop_duplicates = true;
};

namespace detail {

/// Greedy decodes of (1-a)*mu[ref] + a*mu[nn] for every (ref, a) pair,
/// rendered to cleaned text. Rows are ref-major.
inline std::vector<std::string> decode_interpolations(const Generator& g, const LatentCorpus& c,
                                                      std::span<const std::size_t> refs,
                                                      std::span<const std::size_t> neighbors,
                                                      std::span<const double> alphas,
                                                      std::size_t batch_size = 96) {
  const std::size_t l = c.mu.dim(1), rows = refs.size() * alphas.size();
  std::vector<std::string> out;
  out.reserve(rows);
  for (std::size_t start = 0; start < rows; start += batch_size) {
    const std::size_t n = std::min(batch_size, rows - start);
    Tensor<float> z({n, l});
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t row = start + r, k = row / alphas.size();
      const double a = alphas[row % alphas.size()];
      const float* m1 = c.mu.data() + refs[k] * l;
      const float* m2 = c.mu.data() + neighbors[k] * l;
      for (std::size_t d = 0; d < l; ++d) z.data()[r * l + d] = static_cast<float>((1.0 - a) * m1[d] + a * m2[d]);
    }
    for (const auto& ids : g.model.greedy_decode(z)) out.push_back(g.render(ids));
  }
  return out;
}

}  // namespace detail

/// Interpolates between the reference and its nearest neighbour in latent
/// space and greedily decodes one sentence per alpha.
inline std::vector<std::string> synthesize_sentence(const Generator& g, const LatentCorpus& c, std::size_t ref,
                                                    const SynthesisOptions& opts = {}) {
  require_trained(g);
  for (double a : opts.alphas) require(std::isfinite(a), ErrorCode::InvalidArgument, "alpha must be finite");
  const std::size_t nn = nearest_neighbor(c, ref);
  const std::size_t refs[] = {ref}, nns[] = {nn};
  auto decoded = detail::decode_interpolations(g, c, refs, nns, opts.alphas);
  if (!opts.drop_duplicates) return decoded;
  std::vector<std::string> out;
  std::set<std::string> seen{c.cleaned[ref], c.cleaned[nn]};
  for (auto& s : decoded) {
    if (!s.empty() && seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

struct AugmentOptions {
  std::set<Label> target_classes{Label::Spam, Label::Smishing};
  std::vector<double> alphas{0.25, 0.5, 0.75};
  std::uint64_t seed = 7;
  /// Std-dev of the Gaussian noise added to a mean in the fallback phase.
  double noise_scale = 0.5;
  /// Fallback draws allowed per missing record before giving up.
  std::size_t attempts_per_record = 50;
};

/// Returns `train` followed by synthetic records so that every target class
/// ends at twice its original count. Synthetic texts never repeat each other
/// or any train text after cleaning. Neighbours are searched within the
/// reference's own class.
inline std::vector<LabeledRecord> augment_dataset(std::span<const LabeledRecord> train, const Generator& g,
                                                  const AugmentOptions& opts = {}) {
  std::vector<LabeledRecord> out(train.begin(), train.end());
  if (opts.target_classes.empty()) return out;
  require_trained(g);
  const auto& prep = g.featurizer.prep();
  std::unordered_set<std::string> seen;
  for (const auto& r : train) seen.insert(clean_text(r.text, prep));
  RngStream rng = RngStream(opts.seed).derive(3);

  for (Label target : opts.target_classes) {
    std::vector<LabeledRecord> members;
    for (const auto& r : train) {
      if (r.label == target) members.push_back(r);
    }
    if (members.empty()) continue;
    const std::size_t need = members.size();
    std::size_t made = 0;
    const auto accept = [&](const std::string& rendered) {
      auto text = clean_text(rendered, prep);
      if (made >= need || text.empty() || !seen.insert(text).second) return;
      out.push_back({text, target, "synthetic", true});
      ++made;
    };
    const auto corpus = latent_corpus(g, members);

    if (corpus.size() >= 2) {
      std::vector<std::size_t> refs(corpus.size()), nns;
      std::iota(refs.begin(), refs.end(), 0);
      rng.shuffle(refs);
      for (auto r : refs) nns.push_back(nearest_neighbor(corpus, r));
      for (const auto& s : detail::decode_interpolations(g, corpus, refs, nns, opts.alphas)) accept(s);
    }

    // Fallback: sampled decodes around noisy corpus means.
    const std::size_t l = corpus.mu.dim(1);
    const std::size_t budget = (need - made) * opts.attempts_per_record;
    std::size_t attempts = 0;
    while (made < need && attempts < budget) {
      const std::size_t n = std::min<std::size_t>(64, budget - attempts);
      Tensor<float> z({n, l});
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t k = rng.below(corpus.size());
        for (std::size_t d = 0; d < l; ++d) {
          z.data()[r * l + d] = corpus.mu.data()[k * l + d] + static_cast<float>(opts.noise_scale * rng.normal());
        }
      }
      for (const auto& ids : g.model.sample_decode(z, rng)) accept(g.render(ids));
      attempts += n;
    }
    require(made == need, ErrorCode::AugmentationExhausted,
            "produced " + std::to_string(made) + " of " + std::to_string(need) + " distinct synthetic " +
                std::string(label_name(target)) + " records");
  }
  return out;
}

}  // namespace cops
