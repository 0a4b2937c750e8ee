#include "gradlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

namespace {

std::vector<std::size_t> downsample(std::size_t n, std::size_t keep, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(keep, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::array<std::vector<const GradientSample*>, kNumCells> by_cell(
    const std::vector<GradientSample>& samples) {
  std::array<std::vector<const GradientSample*>, kNumCells> out;
  for (const auto& s : samples) out[static_cast<std::size_t>(s.cell.index())].push_back(&s);
  return out;
}

std::string pct1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

void summarize(EncodingSource& s) {
  if (s.h.empty()) return;
  s.mean = std::accumulate(s.h.begin(), s.h.end(), 0.0) / static_cast<double>(s.h.size());
  double ss = 0.0;
  for (double v : s.h) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.h.size() > 1 ? std::sqrt(ss / static_cast<double>(s.h.size() - 1)) : 0.0;
}

}  // namespace

double correlation_protocol(const GradiendModel& g, const std::vector<GradientSample>& test,
                            std::uint64_t seed) {
  const auto cells = by_cell(test);
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (Cell c : all_cells()) {
    const auto& v = cells[static_cast<std::size_t>(c.index())];
    if (v.empty()) throw MissingTask("correlation protocol: no samples for " + name(c));
    smallest = std::min(smallest, v.size());
  }
  std::vector<double> labels, h;
  for (Cell c : all_cells()) {
    const auto& v = cells[static_cast<std::size_t>(c.index())];
    for (auto i : downsample(v.size(), smallest, mix_seed(seed, static_cast<std::uint64_t>(c.index())))) {
      labels.push_back(static_cast<double>(v[i]->label));
      h.push_back(encode(g, v[i]->input));
    }
  }
  return pearson(labels, h);
}

const EncodingSource& EncodingReport::at(const std::string& source) const {
  for (const auto& s : sources) {
    if (s.source == source) return s;
  }
  throw MissingTask("encoding report has no source " + source);
}

EncodingReport encoding_report(const GradiendModel& g, const std::vector<GradientSample>& samples,
                               const std::vector<Vec>& neutral, std::uint64_t seed) {
  const auto cells = by_cell(samples);
  std::size_t common = neutral.size();
  for (Cell c : all_cells()) {
    const auto& v = cells[static_cast<std::size_t>(c.index())];
    if (v.empty()) throw MissingTask("encoding report: no samples for " + name(c));
    common = std::min(common, v.size());
  }
  if (common == 0) throw MissingTask("encoding report: no neutral gradients");
  EncodingReport r;
  r.variant = g.transition;
  for (Cell c : all_cells()) {
    const auto& v = cells[static_cast<std::size_t>(c.index())];
    EncodingSource src;
    src.source = name(c);
    src.label = v.front()->label;
    for (auto i : downsample(v.size(), common, mix_seed(seed, static_cast<std::uint64_t>(c.index())))) {
      src.h.push_back(encode(g, v[i]->input));
    }
    summarize(src);
    r.sources.push_back(std::move(src));
  }
  EncodingSource n;
  n.source = "neutral";
  for (auto i : downsample(neutral.size(), common, mix_seed(seed, 0x4e45))) {
    n.h.push_back(encode(g, neutral[i]));
  }
  summarize(n);
  r.sources.push_back(std::move(n));
  return r;
}

std::vector<std::array<double, 6>> instance_probs(const TinyLM& model,
                                                  const std::vector<MaskedInstance>& items) {
  std::vector<std::array<double, 6>> out;
  for (const auto& inst : items) {
    if (inst.single_mask()) out.push_back(article_probabilities(model, inst));
  }
  return out;
}

double delta_p(const TinyLM& base, const TinyLM& modified, const std::vector<MaskedInstance>& items,
               Article article) {
  const auto b = instance_probs(base, items);
  const auto m = instance_probs(modified, items);
  if (b.empty()) throw MissingTask("delta_p: no single-mask instances");
  const auto a = static_cast<std::size_t>(article);
  double sb = 0.0, sm = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    sb += b[i][a];
    sm += m[i][a];
  }
  return sm / static_cast<double>(m.size()) - sb / static_cast<double>(b.size());
}

void apply_bh(Heatmap& h) {
  std::vector<double> p;
  for (const auto& e : h.entries) p.push_back(e.p_raw);
  const auto adj = bh_adjust(p);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    h.entries[i].p_bh = adj[i];
    h.entries[i].stars = stars(adj[i]);
  }
}

Heatmap heatmap(const TinyLM& base, const TinyLM& modified, const DatasetArchive& corpus,
                const HeatmapConfig& cfg) {
  Heatmap h;
  h.entries.resize(kNumCells * 6);
  for (Cell c : all_cells()) {
    const auto& items = corpus.at(c).test;
    const auto pb = instance_probs(base, items);
    const auto pm = instance_probs(modified, items);
    if (pb.empty()) throw MissingTask("heatmap: no single-mask test instances for " + name(c));
    for (Article a : kArticles) {
      const auto ai = static_cast<std::size_t>(a);
      std::vector<double> xb, xm, diff;
      for (std::size_t i = 0; i < pb.size(); ++i) {
        xb.push_back(pb[i][ai]);
        xm.push_back(pm[i][ai]);
        diff.push_back(pm[i][ai] - pb[i][ai]);
      }
      DeltaPCell& e = h.at(c, a);
      e.cell = c;
      e.article = a;
      e.delta_p = std::accumulate(xm.begin(), xm.end(), 0.0) / static_cast<double>(xm.size()) -
                  std::accumulate(xb.begin(), xb.end(), 0.0) / static_cast<double>(xb.size());
      try {
        e.cohens_d = cohens_d(xm, xb);
      } catch (const DegenerateVariance&) {
        e.cohens_d = 0.0;
      }
      e.p_raw = paired_permutation_test(
          diff, cfg.n_perm, mix_seed(cfg.seed, static_cast<std::uint64_t>(c.index() * 6) + ai));
    }
  }
  apply_bh(h);
  return h;
}

std::vector<PatternScore> pattern_score(const Heatmap& h, const DirectedTransition& dt,
                                        double level) {
  if (h.entries.size() != kNumCells * 6) throw MissingTask("pattern_score: heatmap is incomplete");
  std::vector<PatternScore> out;
  for (Hypothesis hyp : kHypotheses) {
    PatternScore ps;
    ps.hypothesis = hyp;
    const auto expected = expected_pattern(dt, hyp);
    std::set<std::tuple<int, int, int>> exp_set;
    for (const auto& e : expected) {
      exp_set.insert({e.cell.index(), static_cast<int>(e.article), e.sign});
    }
    ps.expected = expected.size();
    for (const auto& e : h.entries) {
      if (!(e.p_bh < level) || e.delta_p == 0.0) continue;
      const int sign = e.delta_p > 0.0 ? +1 : -1;
      if (exp_set.count({e.cell.index(), static_cast<int>(e.article), sign})) {
        ++ps.matched;
      } else {
        ps.off_pattern.push_back(e);
      }
    }
    ps.score = ps.expected ? static_cast<double>(ps.matched) / static_cast<double>(ps.expected) : 0.0;
    out.push_back(std::move(ps));
  }
  return out;
}

Heatmap synthesize_heatmap(const DirectedTransition& dt, Hypothesis hyp) {
  Heatmap h;
  h.variant = dt.transition.name();
  h.entries.resize(kNumCells * 6);
  for (Cell c : all_cells()) {
    for (Article a : kArticles) {
      auto& e = h.at(c, a);
      e.cell = c;
      e.article = a;
    }
  }
  for (const auto& x : expected_pattern(dt, hyp)) {
    auto& e = h.at(x.cell, x.article);
    e.delta_p = 0.1 * x.sign;
    e.p_raw = 1e-4;
  }
  apply_bh(h);
  return h;
}

std::vector<std::size_t> topk_indices(const GradiendModel& g, std::size_t k) {
  const std::size_t n = static_cast<std::size_t>(g.w_d.size());
  if (k < 1 || k > n) {
    throw BadK("k must be in [1, " + std::to_string(n) + "], got " + std::to_string(k));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double x = std::abs(g.w_d(static_cast<Eigen::Index>(a)));
                      const double y = std::abs(g.w_d(static_cast<Eigen::Index>(b)));
                      return x > y || (x == y && a < b);
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t k) {
  if (k == 0 || a.size() != k || b.size() != k) throw BadK("overlap needs two sets of size k");
  std::vector<std::size_t> sa = a, sb = b, common;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(k);
}

OverlapReport group_overlap(const ArticleGroup& group, const GradiendSet& models, std::size_t k) {
  OverlapReport r;
  r.group = group.name();
  r.k = k;
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& t : group.transitions) {
    const auto it = models.find(t.name());
    if (it == models.end()) throw MissingVariant("no gradiend for " + t.name());
    r.variants.push_back(t.name());
    sets.push_back(topk_indices(it->second, k));
  }
  const std::size_t m = sets.size();
  r.matrix.assign(m, std::vector<double>(m, 1.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double o = overlap(sets[i], sets[j], k);
      r.matrix[i][j] = r.matrix[j][i] = o;
      r.max_overlap = std::max(r.max_overlap.value_or(0.0), o);
    }
  }
  return r;
}

std::vector<OverlapReport> group_overlap_report(const GradiendSet& models, std::size_t k) {
  std::vector<OverlapReport> out;
  for (const auto& g : article_groups()) out.push_back(group_overlap(g, models, k));
  out.push_back(group_overlap(control_group(), models, k));
  return out;
}

std::vector<std::size_t> default_k_grid(std::size_t n) {
  std::vector<std::size_t> grid;
  for (std::size_t k = 16; k < n; k *= 2) grid.push_back(k);
  grid.push_back(n);
  return grid;
}

std::vector<AblationPoint> k_ablation(const GradiendSet& models, std::vector<std::size_t> k_grid) {
  if (models.empty()) throw MissingVariant("k ablation needs gradiends");
  const std::size_t n = models.begin()->second.n();
  for (const auto& [name, m] : models) {
    if (m.n() != n) throw DimensionMismatch("k ablation over gradiends of different size");
  }
  std::sort(k_grid.begin(), k_grid.end());
  k_grid.erase(std::unique(k_grid.begin(), k_grid.end()), k_grid.end());
  if (k_grid.empty() || k_grid.back() != n) k_grid.push_back(n);
  std::vector<std::string> names;
  std::vector<std::map<std::size_t, std::vector<std::size_t>>> sets;
  for (const auto& [name, m] : models) {
    names.push_back(name);
    std::map<std::size_t, std::vector<std::size_t>> s;
    for (auto k : k_grid) s[k] = topk_indices(m, k);
    sets.push_back(std::move(s));
  }
  std::vector<AblationPoint> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      for (auto k : k_grid) {
        out.push_back({names[i], names[j], k, overlap(sets[i][k], sets[j][k], k)});
      }
    }
  }
  return out;
}

void write_heatmap_csv_header(std::ostream& os) {
  os << "variant,direction,alpha,cell,article,delta_p,cohens_d,p_raw,p_bh,stars\n";
}

void write_heatmap_csv(std::ostream& os, const Heatmap& h) {
  for (const auto& e : h.entries) {
    os << csv_field(h.variant) << ',' << h.direction << ',' << fmt_double(h.alpha) << ','
       << name(e.cell) << ',' << name(e.article) << ',' << fmt_double(e.delta_p) << ','
       << fmt_double(e.cohens_d) << ',' << fmt_double(e.p_raw) << ',' << fmt_double(e.p_bh) << ','
       << e.stars << '\n';
  }
}

void write_correlation_table(std::ostream& os, const std::vector<std::string>& variants,
                             const std::map<std::string, std::map<std::string, double>>& rows) {
  os << "model";
  for (const auto& v : variants) os << ',' << csv_field(v);
  os << '\n';
  for (const auto& [model, values] : rows) {
    os << csv_field(model);
    for (const auto& v : variants) {
      os << ',';
      if (auto it = values.find(v); it != values.end()) os << pct1(it->second);
    }
    os << '\n';
  }
}

void write_overlap_csv(std::ostream& os, const std::vector<OverlapReport>& reports) {
  os << "group,k,variant_a,variant_b,overlap\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < r.variants.size(); ++i) {
      for (std::size_t j = i + 1; j < r.variants.size(); ++j) {
        os << csv_field(r.group) << ',' << r.k << ',' << csv_field(r.variants[i]) << ','
           << csv_field(r.variants[j]) << ',' << fmt_double(r.matrix[i][j]) << '\n';
      }
    }
  }
}

void write_overlap_table(std::ostream& os, const std::vector<OverlapReport>& reports) {
  os << "group,k,members,max_overlap\n";
  double sum = 0.0;
  std::size_t count = 0;
  const std::string control = control_group().name();
  for (const auto& r : reports) {
    os << csv_field(r.group) << ',' << r.k << ',' << r.variants.size() << ','
       << (r.max_overlap ? pct1(*r.max_overlap) : "") << '\n';
    if (r.group != control && r.max_overlap) {
      sum += *r.max_overlap;
      ++count;
    }
  }
  if (count) os << "mean_article_groups," << reports.front().k << ',' << count << ',' << pct1(sum / static_cast<double>(count)) << '\n';
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationPoint>& points) {
  os << "pair,k,overlap\n";
  for (const auto& p : points) {
    os << csv_field(p.a + "|" + p.b) << ',' << p.k << ',' << fmt_double(p.overlap) << '\n';
  }
}

void write_encoding_csv(std::ostream& os, const EncodingReport& r, bool header) {
  if (header) os << "variant,source,label,h\n";
  for (const auto& s : r.sources) {
    for (double h : s.h) {
      os << csv_field(r.variant) << ',' << s.source << ',' << s.label << ',' << fmt_double(h) << '\n';
    }
  }
}

void write_pattern_csv_header(std::ostream& os) {
  os << "variant,direction,hypothesis,score,matched,expected,off_pattern\n";
}

void write_pattern_csv(std::ostream& os, const std::string& variant, const std::string& direction,
                       const std::vector<PatternScore>& scores) {
  for (const auto& s : scores) {
    std::string off;
    for (const auto& e : s.off_pattern) {
      if (!off.empty()) off += ';';
      off += name(e.cell) + ":" + std::string(name(e.article)) + (e.delta_p > 0 ? "+" : "-");
    }
    os << csv_field(variant) << ',' << direction << ',' << name(s.hypothesis) << ','
       << fmt_double(s.score) << ',' << s.matched << ',' << s.expected << ',' << csv_field(off)
       << '\n';
  }
}

}  // namespace gradlab
