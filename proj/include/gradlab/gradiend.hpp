#pragma once

// One-dimensional-bottleneck gradient autoencoder:
//   h = s * tanh(w_e . x + b_e),   dec(h) = (s * h) * w_d + b_d

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradlab/gradtasks.hpp"
#include "gradlab/toylm.hpp"

namespace gradlab {

struct GradiendModel {
  Vec w_e;
  double b_e = 0.0;
  Vec w_d;
  Vec b_d;
  int sign = +1;
  std::string slice;       // ParamSlice descriptor
  std::string transition;  // variant name

  std::size_t n() const { return static_cast<std::size_t>(w_e.size()); }
};

/// w_e, w_d ~ N(0, 1/sqrt(n)); biases zero; sign +1.
GradiendModel init_gradiend(std::size_t n, std::uint64_t seed, std::string slice = {},
                            std::string transition = {});

double encode(const GradiendModel& m, const Vec& x);
Vec decode(const GradiendModel& m, double h_star);

/// Mean over samples of the squared reconstruction error ||dec(enc(x)) - y||^2.
double reconstruction_loss(const GradiendModel& m, const std::vector<GradientSample>& samples);

/// Pearson correlation between labels and encoded values.
double label_correlation(const GradiendModel& m, const std::vector<GradientSample>& samples);

/// Flips the polarity so the mean encoding of +1 samples is non-negative.
GradiendModel normalize_sign(GradiendModel m, const std::vector<GradientSample>& val);

struct GradiendTrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-2;  // L2, weights only
  int steps = 5000;
  int eval_every = 1000;
  std::size_t eval_cap = 500;
  std::size_t eval_per_cell = 100;
  std::uint64_t seed = 0;
};

struct GradiendRun {
  GradiendModel model;
  double val_correlation = 0.0;
  int best_step = 0;
  double final_loss = 0.0;  // mean training loss over the last eval window
  std::uint64_t seed = 0;
};

/// Validation subset used during training: at most eval_per_cell samples per
/// cell, then at most eval_cap overall (seeded).
std::vector<GradientSample> eval_subset(const std::vector<GradientSample>& val,
                                        const GradiendTrainConfig& cfg);

/// One sample per Adam step, drawn by the round-robin sampler over the
/// per-cell training samples. Keeps the checkpoint with the best validation
/// correlation.
GradiendRun train_gradiend(const std::vector<GradientSample>& train,
                           const std::vector<GradientSample>& val,
                           const GradiendTrainConfig& cfg, const std::string& slice = {},
                           const std::string& transition = {});

/// Highest validation correlation; ties go to the lower seed.
const GradiendRun& select_best_seed(const std::vector<GradiendRun>& runs);

nlohmann::json to_json(const GradiendTrainConfig& cfg);

std::string serialize(const GradiendModel& m);
GradiendModel deserialize_gradiend(const std::string& bytes);
/// Writes the "GRD1" container and a JSON sidecar next to it.
void save_gradiend(const std::filesystem::path& path, const GradiendModel& m,
                   const nlohmann::json& sidecar);
GradiendModel load_gradiend(const std::filesystem::path& path);

}  // namespace gradlab
