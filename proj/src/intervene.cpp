#include "gradlab/intervene.hpp"

#include <cmath>

#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

TinyLM apply(const TinyLM& base, const ParamSlice& slice, const Intervention& iv) {
  if (!iv.gradiend) throw UsageError("intervention without a gradiend");
  if (!std::isfinite(iv.alpha)) throw UsageError("intervention alpha must be finite");
  if (iv.gradiend->slice != slice.descriptor()) {
    throw SliceMismatch("gradiend was trained on " + iv.gradiend->slice + ", not " +
                        slice.descriptor());
  }
  TinyLM out = base;
  if (iv.alpha != 0.0) slice.add_to(out.params(), decode(*iv.gradiend, iv.h_star), iv.alpha);
  return out;
}

std::string_view name(AlphaRule r) {
  return r == AlphaRule::TargetArticle ? "target_article" : "source_article";
}

std::vector<double> default_grid() { return {0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0}; }

bool satisfies_tolerance(double lms, const LmsScore& base, double tau) {
  if (base.metric == LmsMetric::Accuracy) return lms >= tau * base.value;
  return lms <= base.value / tau;
}

std::size_t select_alpha_star(std::vector<AlphaPoint>& points, const LmsScore& base, double tau) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& p = points[i];
    p.candidate = satisfies_tolerance(p.lms, base, tau);
    if (!p.candidate) continue;
    if (!best || p.mean_target_prob > points[*best].mean_target_prob ||
        (p.mean_target_prob == points[*best].mean_target_prob && p.alpha < points[*best].alpha)) {
      best = i;
    }
  }
  if (!best) throw NoCandidates("no alpha satisfies the language-modeling tolerance");
  return *best;
}

double mean_article_prob(const TinyLM& model, const std::vector<MaskedInstance>& items,
                         Article article) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& inst : items) {
    if (!inst.single_mask()) continue;
    sum += article_probabilities(model, inst)[static_cast<std::size_t>(article)];
    ++count;
  }
  if (count == 0) throw MissingTask("no single-mask instances to score");
  return sum / static_cast<double>(count);
}

AlphaSweep sweep(const SweepRequest& req) {
  if (!req.base || !req.gradiend || !req.neutral || !req.target_dataset) {
    throw UsageError("sweep request is incomplete");
  }
  if (req.grid.empty()) throw UsageError("alpha grid is empty");
  for (std::size_t i = 0; i < req.grid.size(); ++i) {
    if (!(req.grid[i] > 0.0) || !std::isfinite(req.grid[i]) ||
        (i > 0 && !(req.grid[i] > req.grid[i - 1]))) {
      throw UsageError("alpha grid must be positive and strictly increasing");
    }
  }
  if (!(req.tau > 0.0 && req.tau <= 1.0)) throw UsageError("tau must be in (0, 1]");

  AlphaSweep out;
  out.variant = req.direction.transition.name();
  out.direction = std::string(name(req.direction.source_article())) + "->" +
                  std::string(name(req.direction.target_article()));
  out.h_star = req.direction.forward ? +1.0 : -1.0;
  out.tau = req.tau;
  out.rule = req.rule;
  out.measured_article = req.rule == AlphaRule::TargetArticle ? req.direction.target_article()
                                                              : req.direction.source_article();
  out.base = lms_score(*req.base, *req.neutral, req.policy);
  out.base_target_prob = mean_article_prob(*req.base, *req.target_dataset, out.measured_article);

  for (double alpha : req.grid) {
    const TinyLM m = apply(*req.base, req.slice, {req.gradiend, out.h_star, alpha});
    AlphaPoint p;
    p.alpha = alpha;
    p.lms = lms_score(m, *req.neutral, req.policy).value;
    p.mean_target_prob = mean_article_prob(m, *req.target_dataset, out.measured_article);
    out.points.push_back(p);
  }
  try {
    out.alpha_star = select_alpha_star(out.points, out.base, out.tau);
  } catch (const NoCandidates&) {
    if (!req.allow_empty) throw;
  }
  return out;
}

void write_sweep_csv_header(std::ostream& os) {
  os << "variant,direction,alpha,lms,lms_metric,candidate,mean_target_prob,is_alpha_star\n";
}

void write_sweep_csv(std::ostream& os, const AlphaSweep& s) {
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    os << csv_field(s.variant) << ',' << s.direction << ',' << fmt_double(p.alpha) << ','
       << fmt_double(p.lms) << ',' << name(s.base.metric) << ',' << (p.candidate ? 1 : 0) << ','
       << fmt_double(p.mean_target_prob) << ',' << (s.alpha_star == i ? 1 : 0) << '\n';
  }
}

}  // namespace gradlab
