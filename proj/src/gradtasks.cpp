#include "gradlab/gradtasks.hpp"

#include <algorithm>
#include <numeric>

#include "gradlab/errors.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

namespace {
constexpr std::uint32_t kCacheVersion = 1;
}

TaskPlan plan_tasks(const Transition& t, std::size_t batch_size) {
  if (!t.is_valid()) throw UsageError("transition " + t.name() + " is not a valid transition");
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  TaskPlan plan;
  plan.transition = t;
  plan.batch_size = batch_size;
  for (Cell c : all_cells()) {
    TaskAssignment& a = plan.tasks[static_cast<std::size_t>(c.index())];
    a.cell = c;
    const Article own = article_of(c);
    if (c == t.first) {
      a.pair = {own, article_of(t.second)};
      a.label = +1;
    } else if (c == t.second) {
      a.pair = {own, article_of(t.first)};
      a.label = -1;
    } else {
      a.pair = {own, own};
      a.label = 0;
    }
  }
  return plan;
}

namespace {

Vec mean_slice_grad(const TinyLM& model, const ParamSlice& slice,
                    std::span<const MaskedInstance> batch, Article target) {
  Vec sum = Vec::Zero(static_cast<Eigen::Index>(slice.size()));
  for (const auto& inst : batch) sum += grad_wrt_slice(model, slice, inst, target);
  return sum / static_cast<double>(batch.size());
}

void check_batch(std::span<const MaskedInstance> batch) {
  if (batch.empty()) throw UsageError("gradient batch is empty");
  for (const auto& inst : batch) {
    if (!(inst.cell == batch.front().cell)) {
      throw MixedCells("batch mixes cells " + name(batch.front().cell) + " and " +
                       name(inst.cell));
    }
  }
}

}  // namespace

GradientSample batch_gradient_sample(const TinyLM& model, const ParamSlice& slice,
                                     std::span<const MaskedInstance> batch,
                                     const TargetPair& pair, int label) {
  check_batch(batch);
  GradientSample s;
  s.cell = batch.front().cell;
  s.label = label;
  s.batch_size = batch.size();
  s.input = mean_slice_grad(model, slice, batch, pair.alternative);
  if (pair.is_identity()) {
    s.target = Vec::Zero(s.input.size());
  } else {
    s.target = mean_slice_grad(model, slice, batch, pair.factual) - s.input;
  }
  return s;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return out;
}

RoundRobinSampler::RoundRobinSampler(const std::array<std::size_t, kNumCells>& batch_counts,
                                     std::uint64_t seed)
    : counts_(batch_counts), seed_(seed) {
  for (Cell c : all_cells()) {
    if (counts_[static_cast<std::size_t>(c.index())] == 0) {
      throw MissingTask("sampler: no batches for cell " + name(c));
    }
  }
  max_count_ = *std::max_element(counts_.begin(), counts_.end());
  start_cycle();
}

void RoundRobinSampler::start_cycle() {
  for (std::size_t c = 0; c < kNumCells; ++c) {
    auto& o = order_[c];
    o.resize(counts_[c]);
    std::iota(o.begin(), o.end(), std::size_t{0});
    Rng rng(mix_seed(mix_seed(seed_, cycle_), c));
    rng.shuffle(o);
  }
  round_ = 0;
  cell_ = 0;
}

SamplerEntry RoundRobinSampler::next() {
  if (round_ == max_count_) {
    ++cycle_;
    start_cycle();
  }
  const auto& o = order_[cell_];
  SamplerEntry e{Cell::from_index(static_cast<int>(cell_)), o[round_ % o.size()]};
  if (++cell_ == kNumCells) {
    cell_ = 0;
    ++round_;
  }
  return e;
}

std::string_view name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

GradientBank::GradientBank(const TinyLM& model, ParamSlice slice, const DatasetArchive& corpus,
                           std::size_t batch_size, std::uint64_t seed)
    : model_(model),
      slice_(std::move(slice)),
      corpus_(corpus),
      batch_size_(batch_size),
      seed_(seed),
      checksum_(model.params().checksum()) {
  if (batch_size_ == 0) throw UsageError("batch size must be >= 1");
  slice_.flatten(model_.params());
}

const std::vector<MaskedInstance>& GradientBank::items(Cell c, Split s) const {
  const CellDataset& ds = corpus_.at(c);
  switch (s) {
    case Split::Train: return ds.train;
    case Split::Val: return ds.val;
    case Split::Test: return ds.test;
  }
  return ds.test;
}

const std::vector<std::vector<std::size_t>>& GradientBank::batches(Cell c, Split s) {
  const auto key = std::pair{c.index(), static_cast<int>(s)};
  auto it = batches_.find(key);
  if (it != batches_.end()) return it->second;
  const std::size_t n = items(c, s).size();
  std::vector<std::vector<std::size_t>> b;
  if (s == Split::Train) {
    b = make_batches(n, batch_size_, mix_seed(seed_, 0x4241 + static_cast<std::uint64_t>(c.index())));
  } else {
    for (std::size_t i = 0; i < n; ++i) b.push_back({i});
  }
  return batches_.emplace(key, std::move(b)).first->second;
}

const Vec& GradientBank::mean_grad(Cell c, Split s, std::size_t batch, Article a) {
  const auto key = std::tuple{c.index(), static_cast<int>(s), batch, static_cast<int>(a)};
  auto it = grads_.find(key);
  if (it != grads_.end()) return it->second;
  const auto& idx = batches(c, s)[batch];
  const auto& src = items(c, s);
  std::vector<MaskedInstance> chosen;
  chosen.reserve(idx.size());
  for (auto i : idx) chosen.push_back(src[i]);
  return grads_.emplace(key, mean_slice_grad(model_, slice_, chosen, a)).first->second;
}

SampleSet GradientBank::samples(const TaskPlan& plan, Split split) {
  SampleSet set;
  set.transition = plan.transition.name();
  set.n = slice_.size();
  set.batch_size = split == Split::Train ? batch_size_ : 1;
  set.model_checksum = checksum_;
  for (Cell c : all_cells()) {
    const TaskAssignment& task = plan.at(c);
    const auto& b = batches(c, split);
    for (std::size_t i = 0; i < b.size(); ++i) {
      GradientSample s;
      s.cell = c;
      s.label = task.label;
      s.batch_size = b[i].size();
      s.input = mean_grad(c, split, i, task.pair.alternative);
      if (task.pair.is_identity()) {
        s.target = Vec::Zero(s.input.size());
      } else {
        s.target = mean_grad(c, split, i, task.pair.factual) - s.input;
      }
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

std::string serialize(const SampleSet& set) {
  std::string out = "GCH1";
  bin::put_u32(out, kCacheVersion);
  bin::put_u64(out, set.n);
  bin::put_u64(out, set.batch_size);
  bin::put_str(out, set.transition);
  bin::put_str(out, set.model_checksum);
  bin::put_u64(out, set.samples.size());
  for (const auto& s : set.samples) {
    if (static_cast<std::size_t>(s.input.size()) != set.n ||
        static_cast<std::size_t>(s.target.size()) != set.n) {
      throw DimensionMismatch("gradient sample length differs from cache header");
    }
    bin::put_i32(out, s.label);
    bin::put_u32(out, static_cast<std::uint32_t>(s.cell.index()));
    bin::put_u64(out, s.batch_size);
    bin::put_f64s(out, {s.input.data(), set.n});
    bin::put_f64s(out, {s.target.data(), set.n});
  }
  return out;
}

SampleSet deserialize_samples(const std::string& bytes) {
  bin::Reader r(bytes);
  r.expect_magic("GCH1");
  if (r.u32() != kCacheVersion) throw FormatError("unsupported GCH1 version");
  SampleSet set;
  set.n = r.u64();
  set.batch_size = r.u64();
  set.transition = r.str();
  set.model_checksum = r.str();
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    GradientSample s;
    s.label = r.i32();
    const auto cell = r.u32();
    if (cell >= kNumCells) throw FormatError("cell index out of range in gradient cache");
    s.cell = Cell::from_index(static_cast<int>(cell));
    s.batch_size = r.u64();
    auto in = r.f64s(set.n);
    auto tg = r.f64s(set.n);
    s.input = Eigen::Map<Vec>(in.data(), static_cast<Eigen::Index>(set.n));
    s.target = Eigen::Map<Vec>(tg.data(), static_cast<Eigen::Index>(set.n));
    set.samples.push_back(std::move(s));
  }
  if (!r.done()) throw FormatError("trailing bytes in GCH1 container");
  return set;
}

void save_samples(const std::filesystem::path& path, const SampleSet& set) {
  write_file(path, serialize(set));
}

SampleSet load_samples(const std::filesystem::path& path) {
  return deserialize_samples(read_file(path));
}

}  // namespace gradlab
