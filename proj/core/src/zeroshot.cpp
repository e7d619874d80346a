#include "crossview/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crossview/ops.hpp"
#include "crossview/rng.hpp"

namespace crossview::zeroshot {

double LinkFunction::operator()(double sim) const {
  if (kind == LinkKind::shifted) return std::max((1.0 + sim) / 2.0, eps);
  return std::exp(sim / tau_link);
}

void LinkFunction::check() const {
  if (kind == LinkKind::shifted && eps <= 0.0)
    fail(ErrKind::parameter, "shifted link: eps must be positive");
  if (kind == LinkKind::exponential && tau_link <= 0.0)
    fail(ErrKind::parameter, "exponential link: temperature must be positive");
}

const char* LinkFunction::name() const {
  return kind == LinkKind::shifted ? "shifted" : "exponential";
}

LinkFunction link_from_string(const std::string& s) {
  LinkFunction link;
  if (s == "shifted")
    link.kind = LinkKind::shifted;
  else if (s == "exponential")
    link.kind = LinkKind::exponential;
  else
    fail(ErrKind::parameter, "unknown link function: " + s);
  return link;
}

namespace {

void check_unit_rows(const Mat& m, const char* what) {
  for (std::size_t r = 0; r < m.rows; ++r)
    if (!numcore::is_unit(m.row(r), m.cols))
      fail(ErrKind::contract,
           std::string(what) + " row " + std::to_string(r) + " is not unit norm");
}

}  // namespace

PriorTable estimate_priors(const store::PromptSet& ps, const Mat& images,
                           const LinkFunction& link, const std::string& source) {
  link.check();
  if (images.rows == 0)
    fail(ErrKind::parameter, "prior estimation needs a nonempty image set");
  if (images.cols != ps.matrix.cols)
    fail(ErrKind::dimension, "image dim does not match prompt dim");
  check_unit_rows(images, "image");
  const std::size_t c_count = ps.C();
  const std::size_t t_count = ps.T();
  PriorTable table;
  table.values = Mat(c_count, t_count);
  table.source = source;
  for (std::size_t c = 0; c < c_count; ++c)
    for (std::size_t t = 0; t < t_count; ++t) {
      const Vec a = ps.prompt_vec(c, t);
      double acc = 0.0;
      for (std::size_t j = 0; j < images.rows; ++j) {
        const double* s = images.row(j);
        double sim = 0.0;
        for (std::size_t d = 0; d < images.cols; ++d) sim += s[d] * a[d];
        acc += link(sim);
      }
      table.values.at(c, t) = acc / static_cast<double>(images.rows);
    }
  return table;
}

Vec class_scores_dap(const Vec& s, const store::PromptSet& ps, const PriorTable& priors,
                     const LinkFunction& link) {
  link.check();
  numcore::require_finite(s, "embedding");
  if (s.size() != ps.matrix.cols)
    fail(ErrKind::dimension, "embedding dim does not match prompt dim");
  const std::size_t c_count = ps.C();
  const std::size_t t_count = ps.T();
  if (priors.values.rows != c_count || priors.values.cols != t_count)
    fail(ErrKind::dimension, "prior table shape does not match the prompt set");
  for (double p : priors.values.data)
    if (!(p > 0.0)) fail(ErrKind::contract, "priors must be strictly positive");

  Vec out(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      const Vec a = ps.prompt_vec(c, t);
      acc += std::log(link(numcore::dot(s, a))) - std::log(priors.values.at(c, t));
    }
    out[c] = acc;
  }
  return out;
}

std::size_t argmax_class(const Vec& scores) {
  if (scores.empty()) fail(ErrKind::parameter, "argmax over empty scores");
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

PromptScoreReport prompt_scores(const store::PromptSet& ps) {
  const std::size_t c_count = ps.C();
  const std::size_t t_count = ps.T();
  check_unit_rows(ps.matrix, "prompt");

  // gather the prompt vectors once; all sums run over these
  std::vector<Vec> a(c_count * t_count);
  for (std::size_t c = 0; c < c_count; ++c)
    for (std::size_t t = 0; t < t_count; ++t) a[c * t_count + t] = ps.prompt_vec(c, t);

  PromptScoreReport rep;
  rep.alpha = Mat(c_count, t_count);
  rep.beta = Mat(c_count, t_count);
  rep.w = Mat(c_count, t_count);
  for (std::size_t c = 0; c < c_count; ++c)
    for (std::size_t t = 0; t < t_count; ++t) {
      const Vec& self = a[c * t_count + t];
      double within = 0.0;
      for (std::size_t q = 0; q < t_count; ++q)
        within += numcore::dot(self, a[c * t_count + q]);
      double overall = 0.0;
      for (std::size_t d = 0; d < c_count; ++d)
        for (std::size_t q = 0; q < t_count; ++q)
          overall += numcore::dot(self, a[d * t_count + q]);
      const double alpha = within / static_cast<double>(t_count);
      const double beta = overall / static_cast<double>(c_count * t_count);
      if (std::fabs(beta) <= 1e-12)
        fail(ErrKind::degenerate, "prompt geometry degenerate: beta for class " +
                                      std::to_string(c) + " prompt " + std::to_string(t) +
                                      " is within 1e-12 of zero");
      rep.alpha.at(c, t) = alpha;
      rep.beta.at(c, t) = beta;
      rep.w.at(c, t) = alpha / beta;
    }

  rep.ranking.resize(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    std::vector<std::size_t> idx(t_count);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      return rep.w.at(c, x) > rep.w.at(c, y);
    });
    rep.ranking[c] = std::move(idx);
  }
  return rep;
}

SelectMode select_mode_from_string(const std::string& s) {
  if (s == "best") return SelectMode::best;
  if (s == "worst") return SelectMode::worst;
  if (s == "random") return SelectMode::random;
  fail(ErrKind::parameter, "unknown selection mode: " + s);
}

store::PromptSet select_prompts(const store::PromptSet& ps, std::size_t k, SelectMode mode,
                                std::uint64_t seed) {
  const std::size_t c_count = ps.C();
  const std::size_t t_count = ps.T();
  if (k < 1 || k > t_count)
    fail(ErrKind::parameter, "selection size " + std::to_string(k) +
                                 " out of range [1," + std::to_string(t_count) + "]");
  const PromptScoreReport rep = prompt_scores(ps);

  numcore::Rng rng(seed);
  store::PromptSet out;
  out.view_tag = ps.view_tag;
  out.matrix = Mat(c_count * k, ps.matrix.cols);
  for (std::size_t c = 0; c < c_count; ++c) {
    std::vector<std::size_t> pick;
    if (mode == SelectMode::best) {
      pick.assign(rep.ranking[c].begin(), rep.ranking[c].begin() + k);
    } else if (mode == SelectMode::worst) {
      std::vector<std::size_t> idx(t_count);
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return rep.w.at(c, x) < rep.w.at(c, y);
      });
      pick.assign(idx.begin(), idx.begin() + k);
    } else {
      std::vector<std::size_t> idx(t_count);
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx);
      pick.assign(idx.begin(), idx.begin() + k);
    }

    store::PromptClass pc;
    pc.name = ps.classes[c].name;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t t = pick[j];
      const std::size_t row = c * k + j;
      out.matrix.set_row(row, ps.prompt_vec(c, t));
      store::Prompt p;
      p.row = static_cast<std::uint32_t>(row);
      p.text = ps.classes[c].prompts[t].text;
      p.score = rep.w.at(c, t);
      pc.prompts.push_back(std::move(p));
    }
    out.classes.push_back(std::move(pc));
  }
  return out;
}

ClassifyResult classify(const Mat& embeddings, const store::PromptSet& ps,
                        const LinkFunction& link, const Mat* prior_reference) {
  link.check();
  if (embeddings.rows == 0) fail(ErrKind::parameter, "classify: no embeddings");
  if (embeddings.cols != ps.matrix.cols)
    fail(ErrKind::dimension, "embedding dim does not match prompt dim");
  check_unit_rows(embeddings, "embedding");

  ClassifyResult res;
  if (prior_reference) {
    res.priors = estimate_priors(ps, *prior_reference, link, "reference");
  } else {
    res.priors = estimate_priors(ps, embeddings, link, "transductive");
  }
  const std::size_t c_count = ps.C();
  res.scores = Mat(embeddings.rows, c_count);
  res.labels.resize(embeddings.rows);
  for (std::size_t i = 0; i < embeddings.rows; ++i) {
    const Vec sc = class_scores_dap(embeddings.row_vec(i), ps, res.priors, link);
    res.scores.set_row(i, sc);
    res.labels[i] = argmax_class(sc);
  }
  return res;
}

}  // namespace crossview::zeroshot
