#pragma once

// Encoded-value analysis, probability-shift heatmaps with corrected
// significance, rule/spillover pattern scoring and Top-k decoder overlap.

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gradlab/gradiend.hpp"
#include "gradlab/gradtasks.hpp"
#include "gradlab/paradigm.hpp"
#include "gradlab/stats.hpp"
#include "gradlab/toylm.hpp"

namespace gradlab {

// --- Encodings -------------------------------------------------------------

/// Downsamples every cell's samples to the smallest per-cell count (seeded),
/// then correlates labels with encoded values. Throws MissingTask unless all
/// 12 cells are present.
double correlation_protocol(const GradiendModel& g, const std::vector<GradientSample>& test,
                            std::uint64_t seed);

struct EncodingSource {
  std::string source;  // cell name, or "neutral"
  int label = 0;
  std::vector<double> h;
  double mean = 0.0;
  double stddev = 0.0;
};

struct EncodingReport {
  std::string variant;
  std::vector<EncodingSource> sources;  // 12 cells then "neutral"

  const EncodingSource& at(const std::string& source) const;
};

/// `neutral` holds gradients of the masked-LM loss on neutral sentences.
EncodingReport encoding_report(const GradiendModel& g, const std::vector<GradientSample>& samples,
                               const std::vector<Vec>& neutral, std::uint64_t seed);

// --- Probability shifts ----------------------------------------------------

/// Per-instance article probabilities of one model on single-mask instances.
std::vector<std::array<double, 6>> instance_probs(const TinyLM& model,
                                                  const std::vector<MaskedInstance>& items);

double delta_p(const TinyLM& base, const TinyLM& modified, const std::vector<MaskedInstance>& items,
               Article article);

struct DeltaPCell {
  Cell cell;
  Article article = Article::Der;
  double delta_p = 0.0;
  double cohens_d = 0.0;
  double p_raw = 1.0;
  double p_bh = 1.0;
  std::string stars;
};

struct Heatmap {
  std::string variant;
  std::string direction;
  double alpha = 0.0;
  std::vector<DeltaPCell> entries;  // 72, cell-major then article

  const DeltaPCell& at(Cell c, Article a) const {
    return entries[static_cast<std::size_t>(c.index() * 6 + static_cast<int>(a))];
  }
  DeltaPCell& at(Cell c, Article a) {
    return entries[static_cast<std::size_t>(c.index() * 6 + static_cast<int>(a))];
  }
};

struct HeatmapConfig {
  std::size_t n_perm = 10000;
  std::uint64_t seed = 0;
};

/// Builds the 72-entry grid over every cell's test split and applies the BH
/// correction across the whole grid.
Heatmap heatmap(const TinyLM& base, const TinyLM& modified, const DatasetArchive& corpus,
                const HeatmapConfig& cfg = {});

/// Recomputes p_bh and stars from p_raw.
void apply_bh(Heatmap& h);

// --- Patterns ----------------------------------------------------------------

struct PatternScore {
  Hypothesis hypothesis = Hypothesis::LocalRule;
  double score = 0.0;  // matched / expected
  std::size_t matched = 0;
  std::size_t expected = 0;
  std::vector<DeltaPCell> off_pattern;  // significant entries outside the expectation
};

/// An entry supports an expectation when p_bh < level and sign(delta_p)
/// matches the expected sign.
std::vector<PatternScore> pattern_score(const Heatmap& h, const DirectedTransition& dt,
                                        double level = 0.05);

/// Heatmap that is significant exactly on the hypothesis' expectation.
Heatmap synthesize_heatmap(const DirectedTransition& dt, Hypothesis hyp);

// --- Top-k overlap -----------------------------------------------------------

/// Indices of the k largest |w_d|, ties to the lower index, returned sorted.
std::vector<std::size_t> topk_indices(const GradiendModel& g, std::size_t k);
double overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t k);

struct OverlapReport {
  std::string group;
  std::size_t k = 0;
  std::vector<std::string> variants;
  std::vector<std::vector<double>> matrix;  // symmetric, unit diagonal
  std::optional<double> max_overlap;        // empty for groups with one member
};

using GradiendSet = std::map<std::string, GradiendModel>;

OverlapReport group_overlap(const ArticleGroup& group, const GradiendSet& models, std::size_t k);
/// The six article groups followed by the control group.
std::vector<OverlapReport> group_overlap_report(const GradiendSet& models, std::size_t k);

struct AblationPoint {
  std::string a;
  std::string b;
  std::size_t k = 0;
  double overlap = 0.0;
};

/// Every unordered pair over the grid; n is appended when missing.
std::vector<AblationPoint> k_ablation(const GradiendSet& models, std::vector<std::size_t> k_grid);
std::vector<std::size_t> default_k_grid(std::size_t n);

// --- CSV -------------------------------------------------------------------

void write_heatmap_csv_header(std::ostream& os);
void write_heatmap_csv(std::ostream& os, const Heatmap& h);
/// Rows = models, columns = variants, values x100 with one decimal.
void write_correlation_table(std::ostream& os, const std::vector<std::string>& variants,
                             const std::map<std::string, std::map<std::string, double>>& rows);
/// Long format: one row per unordered pair.
void write_overlap_csv(std::ostream& os, const std::vector<OverlapReport>& reports);
/// One row per group with the maximum pairwise overlap in percent, then the
/// mean over the article groups.
void write_overlap_table(std::ostream& os, const std::vector<OverlapReport>& reports);
void write_ablation_csv(std::ostream& os, const std::vector<AblationPoint>& points);
void write_encoding_csv(std::ostream& os, const EncodingReport& r, bool header = true);
void write_pattern_csv_header(std::ostream& os);
void write_pattern_csv(std::ostream& os, const std::string& variant, const std::string& direction,
                       const std::vector<PatternScore>& scores);

}  // namespace gradlab
