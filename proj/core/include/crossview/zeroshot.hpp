#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossview/store.hpp"
#include "crossview/tensor.hpp"

namespace crossview::zeroshot {

using numcore::Mat;
using numcore::Vec;

// Cosine similarity is signed, so it cannot feed a probability ratio as-is.
// Both links are strictly positive and monotone in the similarity.
enum class LinkKind { shifted, exponential };

struct LinkFunction {
  LinkKind kind = LinkKind::shifted;
  double eps = 1e-6;       // floor for the shifted link
  double tau_link = 0.07;  // temperature for the exponential link

  double operator()(double sim) const;
  void check() const;
  const char* name() const;
};

LinkFunction link_from_string(const std::string& s);

struct PriorTable {
  Mat values;          // C x T, strictly positive
  std::string source;  // which image set produced it
};

// p(a_ct) = mean over image rows of link(s_j . a_ct)
PriorTable estimate_priors(const store::PromptSet& ps, const Mat& images,
                           const LinkFunction& link,
                           const std::string& source = "transductive");

// score(c) = sum_t [ log link(s . a_ct) - log p(a_ct) ], the log of the
// attribute-probability product
Vec class_scores_dap(const Vec& s, const store::PromptSet& ps, const PriorTable& priors,
                     const LinkFunction& link);

// lowest index wins ties
std::size_t argmax_class(const Vec& scores);

struct PromptScoreReport {
  Mat alpha;  // mean within-class similarity, self term included
  Mat beta;   // mean similarity against every prompt of every class
  Mat w;      // alpha / beta
  std::vector<std::vector<std::size_t>> ranking;  // per class, by w descending
};

PromptScoreReport prompt_scores(const store::PromptSet& ps);

enum class SelectMode { best, worst, random };
SelectMode select_mode_from_string(const std::string& s);

// Output holds k prompts per class in selection order with a compact matrix;
// each kept prompt records its w as the score.
store::PromptSet select_prompts(const store::PromptSet& ps, std::size_t k, SelectMode mode,
                                std::uint64_t seed = 0);

struct ClassifyResult {
  std::vector<std::size_t> labels;
  Mat scores;  // N x C log-scores
  PriorTable priors;
};

// Priors come from the classified set itself unless a reference matrix is
// given (the inductive reading).
ClassifyResult classify(const Mat& embeddings, const store::PromptSet& ps,
                        const LinkFunction& link, const Mat* prior_reference = nullptr);

}  // namespace crossview::zeroshot
