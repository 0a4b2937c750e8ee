#pragma once

// W~ = W + alpha * dec(h*) on the selected slice, and the alpha sweep under
// the language-modeling-score tolerance.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gradlab/gradiend.hpp"
#include "gradlab/toylm.hpp"

namespace gradlab {

struct Intervention {
  const GradiendModel* gradiend = nullptr;
  double h_star = +1.0;  // +1 drives z1 -> z2
  double alpha = 0.0;
};

/// Copy of `base` with the slice moved by alpha * dec(h*).
TinyLM apply(const TinyLM& base, const ParamSlice& slice, const Intervention& iv);

/// Which article's mean probability alpha* maximizes.
enum class AlphaRule : std::uint8_t {
  TargetArticle,  // destination article of the directed transition (default)
  SourceArticle,  // the figure-caption reading
};
std::string_view name(AlphaRule r);

struct AlphaPoint {
  double alpha = 0.0;
  double lms = 0.0;
  double mean_target_prob = 0.0;
  bool candidate = false;
};

struct AlphaSweep {
  std::string variant;
  std::string direction;  // "der->die"
  double h_star = +1.0;
  double tau = 0.99;
  LmsScore base;
  double base_target_prob = 0.0;
  Article measured_article = Article::Der;
  AlphaRule rule = AlphaRule::TargetArticle;
  std::vector<AlphaPoint> points;
  std::optional<std::size_t> alpha_star;  // index into points

  double alpha_star_value() const { return points.at(alpha_star.value()).alpha; }
};

/// {0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0}
std::vector<double> default_grid();

/// A point is a candidate when lms >= tau * base (accuracy) or
/// lms <= base / tau (perplexity).
bool satisfies_tolerance(double lms, const LmsScore& base, double tau);

/// Marks candidates and returns the index of the candidate with the highest
/// mean target probability; ties go to the smaller alpha. Throws NoCandidates.
std::size_t select_alpha_star(std::vector<AlphaPoint>& points, const LmsScore& base, double tau);

struct SweepRequest {
  const TinyLM* base = nullptr;
  ParamSlice slice;
  const GradiendModel* gradiend = nullptr;
  DirectedTransition direction;
  std::vector<double> grid = default_grid();
  const NeutralDataset* neutral = nullptr;
  double tau = 0.99;
  const std::vector<MaskedInstance>* target_dataset = nullptr;
  AlphaRule rule = AlphaRule::TargetArticle;
  LmsPolicy policy;
  /// Return an empty sweep instead of throwing NoCandidates.
  bool allow_empty = false;
};

AlphaSweep sweep(const SweepRequest& req);

/// Mean probability of `article` over single-mask instances.
double mean_article_prob(const TinyLM& model, const std::vector<MaskedInstance>& items,
                         Article article);

void write_sweep_csv_header(std::ostream& os);
void write_sweep_csv(std::ostream& os, const AlphaSweep& s);

}  // namespace gradlab
