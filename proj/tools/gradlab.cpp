#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gradlab/errors.hpp"
#include "gradlab/pipeline.hpp"

using namespace gradlab;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char ch : s) {
    if (ch == '[') ++depth;
    if (ch == ']') --depth;
    if (ch == sep && depth == 0) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradlab: gradient autoencoders for article transitions in a toy language model"};
  app.require_subcommand(1);

  std::string config_path, transitions, alpha_grid, out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau;
  std::optional<std::size_t> k;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--transitions", transitions, "comma-separated variant names, e.g. \"G[F,M]_Nom\"");
  app.add_option("--alpha-grid", alpha_grid, "comma-separated increasing alphas");
  app.add_option("--tau", tau, "language-modeling-score tolerance in (0, 1]");
  app.add_option("--k", k, "Top-k size for decoder overlap");
  app.add_option("--out", out, "output directory");
  app.add_flag("--quiet", quiet, "no progress output");

  const std::vector<std::pair<Stage, const char*>> stages{
      {Stage::Generate, "write the per-cell and neutral datasets"},
      {Stage::Pretrain, "pretrain the toy language model"},
      {Stage::Gradiend, "train one gradient autoencoder per variant"},
      {Stage::Sweep, "select alpha* for every directed transition"},
      {Stage::Analyze, "emit correlation, heatmap, pattern and overlap reports"},
      {Stage::Report, "summarize the reports as Markdown"}};
  std::vector<CLI::App*> subs;
  for (const auto& [s, help] : stages) subs.push_back(app.add_subcommand(std::string(name(s)), help));
  auto* all = app.add_subcommand("all", "run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Usage);
  }

  try {
    set_quiet(quiet);
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!transitions.empty()) cfg.transitions = split_list(transitions, ',');
    if (!alpha_grid.empty()) {
      cfg.alpha_grid.clear();
      for (const auto& a : split_list(alpha_grid, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(a, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != a.size()) throw UsageError("bad alpha '" + a + "'");
        cfg.alpha_grid.push_back(v);
      }
    }
    if (tau) cfg.tau = *tau;
    if (k) cfg.k = *k;
    if (!out.empty()) cfg.out = out;
    cfg.validate();

    if (all->parsed()) {
      for (const auto& [s, help] : stages) run_stage(s, cfg);
      return 0;
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) run_stage(stages[i].first, cfg);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ExitCode::Data);
  }
}
