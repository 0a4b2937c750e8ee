#pragma once

// Run configuration, the artifact manifest and the six pipeline stages that
// the command-line tool exposes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradlab/gradiend.hpp"
#include "gradlab/intervene.hpp"
#include "gradlab/toylm.hpp"

namespace gradlab {

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t cell_size = 400;
  std::size_t neutral_size = 400;
  ModelConfig model;
  int pool = 3;  // article-head pooling length, decoder models only
  PretrainConfig pretrain;
  std::string slice;  // empty selects the default slice
  std::vector<std::string> transitions;  // empty selects the 17-variant catalog
  std::size_t batch_size = 16;
  GradiendTrainConfig gradiend;
  std::vector<std::uint64_t> gradiend_seeds{0, 1, 2};
  std::vector<double> alpha_grid = default_grid();
  double tau = 0.99;
  AlphaRule alpha_rule = AlphaRule::TargetArticle;
  std::size_t k = 64;
  std::vector<std::size_t> k_grid;  // empty selects default_k_grid(n)
  std::size_t n_perm = 10000;
  std::filesystem::path out = "out";

  /// Resolves transition names against the paradigm; throws UsageError.
  std::vector<Transition> resolved_transitions() const;
  void validate() const;
};

/// Unknown keys and malformed values throw UsageError.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);
/// SHA-256 of the canonical JSON form, output directory excluded.
std::string config_hash(const RunConfig& cfg);

enum class Stage : std::uint8_t { Generate, Pretrain, Gradiend, Sweep, Analyze, Report };
std::string_view name(Stage s);

/// Per-stage config hashes, inputs and output content hashes, kept as
/// manifest.json in the output directory.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path root);

  static Manifest load(const std::filesystem::path& root);
  void save() const;

  bool has(Stage s) const;
  /// Throws when the stage never ran, ran under a different configuration,
  /// or one of its outputs changed on disk since.
  void require(Stage s, const std::string& stage_config_hash) const;
  void record(Stage s, const std::string& stage_config_hash,
              const std::vector<std::filesystem::path>& outputs);
  /// Relative paths of the stage's outputs.
  std::vector<std::string> outputs(Stage s) const;
  const nlohmann::json& data() const { return data_; }

 private:
  std::filesystem::path root_;
  nlohmann::json data_;
};

/// Hash of the configuration that a stage and all its upstream stages read.
std::string stage_config_hash(const RunConfig& cfg, Stage s);

/// Filesystem-safe form of a variant name: "G[F,M]_Nom" -> "G_F-M_Nom".
std::string safe_name(const std::string& variant);

void cmd_generate(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
void cmd_gradiend(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);
void cmd_analyze(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);
void run_stage(Stage s, const RunConfig& cfg);

/// Progress lines go to stderr; quiet() silences them.
void set_quiet(bool quiet);

}  // namespace gradlab
