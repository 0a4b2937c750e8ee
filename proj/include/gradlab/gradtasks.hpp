#pragma once

// Swapped and identity gradient tasks for one transition, batch gradient
// samples, the oversampled round-robin batch sampler and the on-disk cache.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "gradlab/corpus.hpp"
#include "gradlab/paradigm.hpp"
#include "gradlab/toylm.hpp"

namespace gradlab {

struct TargetPair {
  Article factual = Article::Der;
  Article alternative = Article::Der;
  bool is_identity() const { return factual == alternative; }
  friend bool operator==(const TargetPair&, const TargetPair&) = default;
};

struct GradientSample {
  Vec input;   // mean gradient toward the alternative article
  Vec target;  // factual minus alternative; exactly zero for identity pairs
  int label = 0;
  Cell cell;
  std::size_t batch_size = 1;
};

struct TaskAssignment {
  Cell cell;
  TargetPair pair;
  int label = 0;
};

struct TaskPlan {
  Transition transition;
  std::array<TaskAssignment, kNumCells> tasks;  // by Cell::index()
  std::size_t batch_size = 16;

  const TaskAssignment& at(Cell c) const { return tasks[static_cast<std::size_t>(c.index())]; }
};

TaskPlan plan_tasks(const Transition& t, std::size_t batch_size = 16);

GradientSample batch_gradient_sample(const TinyLM& model, const ParamSlice& slice,
                                     std::span<const MaskedInstance> batch,
                                     const TargetPair& pair, int label);

/// Seeded partition of [0, n) into consecutive batches of size B; the last
/// batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed);

struct SamplerEntry {
  Cell cell;
  std::size_t batch = 0;
  friend bool operator==(const SamplerEntry&, const SamplerEntry&) = default;
};

/// Every cycle visits max(batch_counts) rounds; each round emits one batch per
/// cell in canonical order. Cells with fewer batches repeat their per-cycle
/// shuffled order.
class RoundRobinSampler {
 public:
  RoundRobinSampler(const std::array<std::size_t, kNumCells>& batch_counts, std::uint64_t seed);

  SamplerEntry next();
  std::size_t cycle_length() const { return kNumCells * max_count_; }

 private:
  void start_cycle();

  std::array<std::size_t, kNumCells> counts_;
  std::array<std::vector<std::size_t>, kNumCells> order_;
  std::size_t max_count_ = 0;
  std::uint64_t seed_;
  std::uint64_t cycle_ = 0;
  std::size_t round_ = 0;
  std::size_t cell_ = 0;
};

enum class Split : std::uint8_t { Train, Val, Test };
std::string_view name(Split s);

struct SampleSet {
  std::string transition;
  std::size_t n = 0;
  std::size_t batch_size = 0;
  std::string model_checksum;
  std::vector<GradientSample> samples;
};

/// Memoizes mean slice gradients per (cell, split, batch, article) so that
/// identity samples and factual gradients are shared across variants.
class GradientBank {
 public:
  /// Train splits use batches of `batch_size`; validation and test splits use
  /// one instance per sample.
  GradientBank(const TinyLM& model, ParamSlice slice, const DatasetArchive& corpus,
               std::size_t batch_size, std::uint64_t seed);

  SampleSet samples(const TaskPlan& plan, Split split);
  const ParamSlice& slice() const { return slice_; }
  const std::string& model_checksum() const { return checksum_; }

 private:
  const std::vector<std::vector<std::size_t>>& batches(Cell c, Split s);
  const Vec& mean_grad(Cell c, Split s, std::size_t batch, Article a);
  const std::vector<MaskedInstance>& items(Cell c, Split s) const;

  const TinyLM& model_;
  ParamSlice slice_;
  const DatasetArchive& corpus_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::string checksum_;
  std::map<std::pair<int, int>, std::vector<std::vector<std::size_t>>> batches_;
  std::map<std::tuple<int, int, std::size_t, int>, Vec> grads_;
};

/// "GCH1" container: header then one record per sample.
std::string serialize(const SampleSet& set);
SampleSet deserialize_samples(const std::string& bytes);
void save_samples(const std::filesystem::path& path, const SampleSet& set);
SampleSet load_samples(const std::filesystem::path& path);

}  // namespace gradlab
