#include "gradlab/gradiend.hpp"

#include <algorithm>
#include <cmath>

#include "gradlab/errors.hpp"
#include "gradlab/optim.hpp"
#include "gradlab/stats.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

namespace {
constexpr std::uint32_t kGradiendVersion = 1;

void check_dim(const GradiendModel& m, const Vec& x) {
  if (static_cast<std::size_t>(x.size()) != m.n()) {
    throw DimensionMismatch("gradiend expects " + std::to_string(m.n()) + " inputs, got " +
                            std::to_string(x.size()));
  }
}
}  // namespace

GradiendModel init_gradiend(std::size_t n, std::uint64_t seed, std::string slice,
                            std::string transition) {
  if (n == 0) throw DimensionMismatch("gradiend needs n >= 1");
  GradiendModel m;
  const auto N = static_cast<Eigen::Index>(n);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(n));
  Rng rng(seed);
  m.w_e.resize(N);
  m.w_d.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) m.w_e(i) = sigma * rng.normal();
  for (Eigen::Index i = 0; i < N; ++i) m.w_d(i) = sigma * rng.normal();
  m.b_d = Vec::Zero(N);
  m.slice = std::move(slice);
  m.transition = std::move(transition);
  return m;
}

double encode(const GradiendModel& m, const Vec& x) {
  check_dim(m, x);
  return m.sign * std::tanh(m.w_e.dot(x) + m.b_e);
}

Vec decode(const GradiendModel& m, double h_star) {
  return (m.sign * h_star) * m.w_d + m.b_d;
}

double reconstruction_loss(const GradiendModel& m, const std::vector<GradientSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += (decode(m, encode(m, s.input)) - s.target).squaredNorm();
  return total / static_cast<double>(samples.size());
}

double label_correlation(const GradiendModel& m, const std::vector<GradientSample>& samples) {
  std::vector<double> labels, h;
  for (const auto& s : samples) {
    labels.push_back(static_cast<double>(s.label));
    h.push_back(encode(m, s.input));
  }
  return pearson(labels, h);
}

GradiendModel normalize_sign(GradiendModel m, const std::vector<GradientSample>& val) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : val) {
    if (s.label != +1) continue;
    sum += encode(m, s.input);
    ++count;
  }
  if (count == 0) throw NoPositiveSamples("sign normalization needs +1 samples");
  if (sum < 0.0) m.sign = -m.sign;
  return m;
}

std::vector<GradientSample> eval_subset(const std::vector<GradientSample>& val,
                                        const GradiendTrainConfig& cfg) {
  std::array<std::size_t, kNumCells> taken{};
  std::vector<GradientSample> out;
  for (const auto& s : val) {
    auto& t = taken[static_cast<std::size_t>(s.cell.index())];
    if (t < cfg.eval_per_cell) {
      out.push_back(s);
      ++t;
    }
  }
  if (out.size() > cfg.eval_cap) {
    std::vector<std::size_t> idx(out.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(mix_seed(cfg.seed, 0x4556));
    rng.shuffle(idx);
    idx.resize(cfg.eval_cap);
    std::sort(idx.begin(), idx.end());
    std::vector<GradientSample> sub;
    for (auto i : idx) sub.push_back(std::move(out[i]));
    out = std::move(sub);
  }
  return out;
}

GradiendRun train_gradiend(const std::vector<GradientSample>& train,
                           const std::vector<GradientSample>& val,
                           const GradiendTrainConfig& cfg, const std::string& slice,
                           const std::string& transition) {
  if (cfg.steps <= 0) throw UsageError("gradiend steps must be > 0");
  if (cfg.eval_every <= 0 || cfg.eval_every > cfg.steps) {
    throw UsageError("gradiend eval interval must be in [1, steps]");
  }
  if (train.empty()) throw MissingTask("gradiend training set is empty");
  bool has_pos = false, has_neg = false;
  for (const auto& s : train) {
    has_pos |= s.label == +1;
    has_neg |= s.label == -1;
  }
  if (!has_pos || !has_neg) throw MissingTask("gradiend training needs both swapped labels");

  const std::size_t n = static_cast<std::size_t>(train.front().input.size());
  std::array<std::vector<std::size_t>, kNumCells> by_cell;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (static_cast<std::size_t>(train[i].input.size()) != n ||
        static_cast<std::size_t>(train[i].target.size()) != n) {
      throw DimensionMismatch("gradient samples differ in length");
    }
    by_cell[static_cast<std::size_t>(train[i].cell.index())].push_back(i);
  }
  // Cells without samples get a placeholder slot that the loop skips.
  std::array<std::size_t, kNumCells> counts{};
  for (int c = 0; c < kNumCells; ++c) {
    counts[static_cast<std::size_t>(c)] = std::max<std::size_t>(1, by_cell[static_cast<std::size_t>(c)].size());
  }
  RoundRobinSampler sampler(counts, mix_seed(cfg.seed, 0x5341));

  const auto eval = eval_subset(val, cfg);
  GradiendModel m = init_gradiend(n, mix_seed(cfg.seed, 0x494e), slice, transition);
  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, {n, 1, n, n},
            {true, false, true, false});

  GradiendRun best;
  best.seed = cfg.seed;
  best.val_correlation = -std::numeric_limits<double>::infinity();
  Vec g_we(static_cast<Eigen::Index>(n)), g_wd(static_cast<Eigen::Index>(n)),
      g_bd(static_cast<Eigen::Index>(n));
  double g_be = 0.0;
  double window_loss = 0.0;
  int window = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    SamplerEntry e = sampler.next();
    while (by_cell[static_cast<std::size_t>(e.cell.index())].empty()) e = sampler.next();
    const GradientSample& s = train[by_cell[static_cast<std::size_t>(e.cell.index())][e.batch]];

    // Forward: out = t * w_d + b_d, since sign^2 = 1.
    const double z = m.w_e.dot(s.input) + m.b_e;
    const double t = std::tanh(z);
    const Vec r = t * m.w_d + m.b_d - s.target;
    const double loss = r.squaredNorm();
    if (!std::isfinite(loss)) throw Diverged("gradiend loss is not finite at step " + std::to_string(step));
    window_loss += loss;
    ++window;

    g_wd = 2.0 * t * r;
    g_bd = 2.0 * r;
    const double dz = 2.0 * r.dot(m.w_d) * (1.0 - t * t);
    g_we = dz * s.input;
    g_be = dz;
    adam.step({{m.w_e.data(), n}, {&m.b_e, 1}, {m.w_d.data(), n}, {m.b_d.data(), n}},
              {{g_we.data(), n}, {&g_be, 1}, {g_wd.data(), n}, {g_bd.data(), n}});

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      double corr = 0.0;
      if (!eval.empty()) {
        bool any_pos = false;
        for (const auto& v : eval) any_pos |= v.label == +1;
        if (any_pos) m = normalize_sign(std::move(m), eval);
        try {
          corr = label_correlation(m, eval);
        } catch (const DegenerateVariance&) {
          corr = 0.0;
        }
      }
      if (corr > best.val_correlation) {
        best.model = m;
        best.val_correlation = corr;
        best.best_step = step;
      }
      best.final_loss = window_loss / static_cast<double>(window);
      window_loss = 0.0;
      window = 0;
    }
  }
  return best;
}

const GradiendRun& select_best_seed(const std::vector<GradiendRun>& runs) {
  if (runs.empty()) throw MissingVariant("no gradiend runs to select from");
  const GradiendRun* best = &runs.front();
  for (const auto& r : runs) {
    if (r.val_correlation > best->val_correlation ||
        (r.val_correlation == best->val_correlation && r.seed < best->seed)) {
      best = &r;
    }
  }
  return *best;
}

nlohmann::json to_json(const GradiendTrainConfig& cfg) {
  return {{"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"steps", cfg.steps},
          {"eval_every", cfg.eval_every},
          {"eval_cap", cfg.eval_cap},
          {"eval_per_cell", cfg.eval_per_cell},
          {"seed", cfg.seed}};
}

std::string serialize(const GradiendModel& m) {
  if (static_cast<std::size_t>(m.w_d.size()) != m.n() ||
      static_cast<std::size_t>(m.b_d.size()) != m.n()) {
    throw DimensionMismatch("gradiend tensors disagree on n");
  }
  std::string out = "GRD1";
  bin::put_u32(out, kGradiendVersion);
  bin::put_str(out, m.transition);
  bin::put_str(out, m.slice);
  bin::put_u64(out, m.n());
  bin::put_i32(out, m.sign);
  bin::put_f64s(out, {m.w_e.data(), m.n()});
  bin::put_f64s(out, {m.w_d.data(), m.n()});
  bin::put_f64s(out, {m.b_d.data(), m.n()});
  bin::put_f64(out, m.b_e);
  return out;
}

GradiendModel deserialize_gradiend(const std::string& bytes) {
  bin::Reader r(bytes);
  r.expect_magic("GRD1");
  if (r.u32() != kGradiendVersion) throw FormatError("unsupported GRD1 version");
  GradiendModel m;
  m.transition = r.str();
  m.slice = r.str();
  const auto n = r.u64();
  m.sign = r.i32();
  if (m.sign != 1 && m.sign != -1) throw FormatError("GRD1 polarity must be +1 or -1");
  const auto N = static_cast<Eigen::Index>(n);
  auto we = r.f64s(n);
  auto wd = r.f64s(n);
  auto bd = r.f64s(n);
  m.w_e = Eigen::Map<Vec>(we.data(), N);
  m.w_d = Eigen::Map<Vec>(wd.data(), N);
  m.b_d = Eigen::Map<Vec>(bd.data(), N);
  m.b_e = r.f64();
  if (!r.done()) throw FormatError("trailing bytes in GRD1 container");
  return m;
}

void save_gradiend(const std::filesystem::path& path, const GradiendModel& m,
                   const nlohmann::json& sidecar) {
  write_file(path, serialize(m));
  auto side = path;
  side += ".json";
  write_file(side, sidecar.dump(2) + "\n");
}

GradiendModel load_gradiend(const std::filesystem::path& path) {
  return deserialize_gradiend(read_file(path));
}

}  // namespace gradlab
