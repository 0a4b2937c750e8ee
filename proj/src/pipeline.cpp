#include "gradlab/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "gradlab/analysis.hpp"
#include "gradlab/corpus.hpp"
#include "gradlab/errors.hpp"
#include "gradlab/gradtasks.hpp"
#include "gradlab/util.hpp"

namespace gradlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool g_quiet = false;

void log(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << std::endl;
}

// Reads `key` from `obj` into `dst` when present; wrong types are usage errors.
template <typename T>
void read(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

const json& section(const json& j, const char* key, std::initializer_list<const char*> allowed) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  const json& s = j.at(key);
  if (!s.is_object()) throw UsageError(std::string("config section '") + key + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : s.items()) {
    if (!ok.count(k)) throw UsageError("unknown config key '" + std::string(key) + "." + k + "'");
  }
  return s;
}

constexpr std::array<Stage, 6> kStages{Stage::Generate, Stage::Pretrain, Stage::Gradiend,
                                       Stage::Sweep,    Stage::Analyze,  Stage::Report};

std::string stage_key(Stage s) { return std::string(name(s)); }

fs::path data_dir(const RunConfig& c) { return c.out / "data"; }
fs::path model_path(const RunConfig& c) { return c.out / "model" / "base.tlm"; }
fs::path gradiend_path(const RunConfig& c, const std::string& variant) {
  return c.out / "gradiends" / (safe_name(variant) + ".grd");
}
fs::path sweep_csv(const RunConfig& c) { return c.out / "sweeps" / "sweeps.csv"; }
fs::path alpha_csv(const RunConfig& c) { return c.out / "sweeps" / "alpha_star.csv"; }
fs::path report_dir(const RunConfig& c) { return c.out / "reports"; }

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  write_file(p, s);
}

DatasetArchive load_archive(const RunConfig& cfg) {
  DatasetArchive ar;
  for (Cell c : all_cells()) {
    ar.cells[static_cast<std::size_t>(c.index())] =
        cell_dataset_from_jsonl(read_file(data_dir(cfg) / (name(c) + ".jsonl")), c);
  }
  ar.neutral = neutral_dataset_from_jsonl(read_file(data_dir(cfg) / "neutral.jsonl"));
  return ar;
}

TinyLM load_model(const RunConfig& cfg) { return TinyLM::deserialize(read_file(model_path(cfg))); }

ParamSlice resolve_slice(const RunConfig& cfg, const TinyLM& m) {
  return cfg.slice.empty() ? default_slice(m) : make_slice(m, cfg.slice);
}

std::string model_row_name(const RunConfig& cfg) {
  return cfg.model.kind == ModelKind::Mlm ? "TinyMLM" : "TinyCLM";
}

struct AlphaStarRow {
  std::string variant;
  bool forward = true;
  std::optional<double> alpha;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& p) { return parse_csv(read_file(p)); }

std::vector<AlphaStarRow> read_alpha_stars(const RunConfig& cfg) {
  std::vector<AlphaStarRow> out;
  const auto rows = read_csv(alpha_csv(cfg));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 4) throw FormatError("malformed alpha_star.csv row " + std::to_string(i + 1));
    AlphaStarRow a;
    a.variant = r[0];
    a.forward = r[2] == "+1";
    if (!r[3].empty()) a.alpha = std::stod(r[3]);
    out.push_back(a);
  }
  return out;
}

std::string markdown_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::string s;
  auto line = [&](const std::vector<std::string>& r) {
    s += "|";
    for (const auto& f : r) s += " " + f + " |";
    s += "\n";
  };
  line(rows[0]);
  s += "|";
  for (std::size_t i = 0; i < rows[0].size(); ++i) s += "---|";
  s += "\n";
  for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i]);
  return s;
}

}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

std::string_view name(Stage s) {
  switch (s) {
    case Stage::Generate: return "generate";
    case Stage::Pretrain: return "pretrain";
    case Stage::Gradiend: return "gradiend";
    case Stage::Sweep: return "sweep";
    case Stage::Analyze: return "analyze";
    case Stage::Report: return "report";
  }
  return "?";
}

std::string safe_name(const std::string& variant) {
  std::string out;
  for (char ch : variant) {
    if (ch == '[' || ch == ']') {
      if (ch == '[') out += '_';
    } else if (ch == ',') {
      out += '-';
    } else {
      out += ch;
    }
  }
  return out;
}

// --- RunConfig -----------------------------------------------------------

std::vector<Transition> RunConfig::resolved_transitions() const {
  if (transitions.empty()) return catalog_transitions();
  std::vector<Transition> out;
  for (const auto& t : transitions) {
    auto parsed = parse_transition(t);
    if (!parsed) throw UsageError("unknown transition '" + t + "'");
    if (std::find(out.begin(), out.end(), *parsed) == out.end()) out.push_back(*parsed);
  }
  return out;
}

void RunConfig::validate() const {
  if (cell_size == 0 || neutral_size == 0) throw UsageError("corpus sizes must be positive");
  if (batch_size == 0) throw UsageError("gradient batch size must be positive");
  if (gradiend_seeds.empty()) throw UsageError("at least one gradiend seed is required");
  if (gradiend.steps <= 0 || gradiend.eval_every <= 0 || gradiend.eval_every > gradiend.steps) {
    throw UsageError("gradiend steps must be positive and eval_every in [1, steps]");
  }
  if (alpha_grid.empty()) throw UsageError("alpha grid is empty");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0.0) || (i > 0 && !(alpha_grid[i] > alpha_grid[i - 1]))) {
      throw UsageError("alpha grid must be positive and strictly increasing");
    }
  }
  if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("tau must be in (0, 1]");
  if (k == 0) throw BadK("k must be positive");
  if (n_perm == 0) throw UsageError("n_perm must be positive");
  if (pool < 1) throw UsageError("pool must be >= 1");
  resolved_transitions();
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  static const std::set<std::string> top{"seed",     "corpus",       "model",    "pretrain",
                                         "slice",    "transitions",  "gradients", "gradiend",
                                         "intervention", "analysis", "out"};
  for (const auto& [k, v] : j.items()) {
    if (!top.count(k)) throw UsageError("unknown config key '" + k + "'");
  }
  RunConfig c;
  read(j, "seed", c.seed);
  const auto& corpus = section(j, "corpus", {"cell_size", "neutral_size"});
  read(corpus, "cell_size", c.cell_size);
  read(corpus, "neutral_size", c.neutral_size);

  const auto& model = section(j, "model", {"kind", "d_model", "n_layers", "n_heads", "d_ff", "max_len", "pool"});
  std::string kind = "mlm";
  read(model, "kind", kind);
  if (kind == "mlm") {
    c.model.kind = ModelKind::Mlm;
  } else if (kind == "clm") {
    c.model.kind = ModelKind::Clm;
  } else {
    throw UsageError("model.kind must be 'mlm' or 'clm'");
  }
  read(model, "d_model", c.model.d_model);
  read(model, "n_layers", c.model.n_layers);
  read(model, "n_heads", c.model.n_heads);
  read(model, "d_ff", c.model.d_ff);
  read(model, "max_len", c.model.max_len);
  read(model, "pool", c.pool);

  const auto& pt = section(j, "pretrain", {"epochs", "batch_size", "lr", "mask_rate", "weight_decay", "target_accuracy"});
  read(pt, "epochs", c.pretrain.max_epochs);
  read(pt, "batch_size", c.pretrain.batch_size);
  read(pt, "lr", c.pretrain.lr);
  read(pt, "mask_rate", c.pretrain.mask_rate);
  read(pt, "weight_decay", c.pretrain.weight_decay);
  read(pt, "target_accuracy", c.pretrain.target_accuracy);

  read(j, "slice", c.slice);
  read(j, "transitions", c.transitions);
  const auto& gs = section(j, "gradients", {"batch_size"});
  read(gs, "batch_size", c.batch_size);

  const auto& gd = section(j, "gradiend", {"lr", "weight_decay", "steps", "eval_every", "eval_cap", "eval_per_cell", "seeds"});
  read(gd, "lr", c.gradiend.lr);
  read(gd, "weight_decay", c.gradiend.weight_decay);
  read(gd, "steps", c.gradiend.steps);
  read(gd, "eval_every", c.gradiend.eval_every);
  read(gd, "eval_cap", c.gradiend.eval_cap);
  read(gd, "eval_per_cell", c.gradiend.eval_per_cell);
  read(gd, "seeds", c.gradiend_seeds);

  const auto& iv = section(j, "intervention", {"alpha_grid", "tau", "alpha_rule"});
  read(iv, "alpha_grid", c.alpha_grid);
  read(iv, "tau", c.tau);
  std::string rule = std::string(name(c.alpha_rule));
  read(iv, "alpha_rule", rule);
  if (rule == name(AlphaRule::TargetArticle)) {
    c.alpha_rule = AlphaRule::TargetArticle;
  } else if (rule == name(AlphaRule::SourceArticle)) {
    c.alpha_rule = AlphaRule::SourceArticle;
  } else {
    throw UsageError("intervention.alpha_rule must be target_article or source_article");
  }

  const auto& an = section(j, "analysis", {"k", "k_grid", "n_perm"});
  read(an, "k", c.k);
  read(an, "k_grid", c.k_grid);
  read(an, "n_perm", c.n_perm);

  std::string out = c.out.string();
  read(j, "out", out);
  c.out = out;
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"corpus", {{"cell_size", c.cell_size}, {"neutral_size", c.neutral_size}}},
      {"model",
       {{"kind", c.model.kind == ModelKind::Mlm ? "mlm" : "clm"},
        {"d_model", c.model.d_model},
        {"n_layers", c.model.n_layers},
        {"n_heads", c.model.n_heads},
        {"d_ff", c.model.d_ff},
        {"max_len", c.model.max_len},
        {"pool", c.pool}}},
      {"pretrain",
       {{"epochs", c.pretrain.max_epochs},
        {"batch_size", c.pretrain.batch_size},
        {"lr", c.pretrain.lr},
        {"mask_rate", c.pretrain.mask_rate},
        {"weight_decay", c.pretrain.weight_decay},
        {"target_accuracy", c.pretrain.target_accuracy}}},
      {"slice", c.slice},
      {"transitions", c.transitions},
      {"gradients", {{"batch_size", c.batch_size}}},
      {"gradiend",
       {{"lr", c.gradiend.lr},
        {"weight_decay", c.gradiend.weight_decay},
        {"steps", c.gradiend.steps},
        {"eval_every", c.gradiend.eval_every},
        {"eval_cap", c.gradiend.eval_cap},
        {"eval_per_cell", c.gradiend.eval_per_cell},
        {"seeds", c.gradiend_seeds}}},
      {"intervention",
       {{"alpha_grid", c.alpha_grid}, {"tau", c.tau}, {"alpha_rule", std::string(name(c.alpha_rule))}}},
      {"analysis", {{"k", c.k}, {"k_grid", c.k_grid}, {"n_perm", c.n_perm}}},
      {"out", c.out.string()},
  };
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("out");
  return sha256_hex(j.dump());
}

std::string stage_config_hash(const RunConfig& cfg, Stage s) {
  const json full = to_json(cfg);
  json j;
  const auto take = [&](const char* k) { j[k] = full.at(k); };
  take("seed");
  take("corpus");
  if (s >= Stage::Pretrain) {
    take("model");
    take("pretrain");
  }
  if (s >= Stage::Gradiend) {
    take("slice");
    take("transitions");
    take("gradients");
    take("gradiend");
  }
  if (s >= Stage::Sweep) take("intervention");
  if (s >= Stage::Analyze) take("analysis");
  return sha256_hex(j.dump());
}

// --- Manifest ------------------------------------------------------------

Manifest::Manifest(fs::path root) : root_(std::move(root)) {
  data_ = {{"version", 1}, {"stages", json::object()}};
}

Manifest Manifest::load(const fs::path& root) {
  Manifest m(root);
  const fs::path p = root / "manifest.json";
  if (fs::exists(p)) {
    try {
      m.data_ = json::parse(read_file(p));
    } catch (const json::parse_error& e) {
      throw FormatError("manifest: " + std::string(e.what()));
    }
  }
  return m;
}

void Manifest::save() const {
  fs::create_directories(root_);
  write_file(root_ / "manifest.json", data_.dump(2) + "\n");
}

bool Manifest::has(Stage s) const { return data_.at("stages").contains(stage_key(s)); }

void Manifest::require(Stage s, const std::string& hash) const {
  if (!has(s)) {
    throw Error("stage '" + stage_key(s) + "' has not been run for " + root_.string(), ExitCode::Data);
  }
  const json& e = data_.at("stages").at(stage_key(s));
  if (e.at("config_hash").get<std::string>() != hash) {
    throw StaleArtifact("stage '" + stage_key(s) + "' ran under a different configuration; rerun it");
  }
  for (const auto& [rel, digest] : e.at("outputs").items()) {
    const fs::path p = root_ / rel;
    if (!fs::exists(p)) throw StaleArtifact("missing artifact " + p.string());
    if (sha256_file(p) != digest.get<std::string>()) {
      throw StaleArtifact("artifact " + p.string() + " changed since stage '" + stage_key(s) + "'");
    }
  }
}

void Manifest::record(Stage s, const std::string& hash, const std::vector<fs::path>& outputs) {
  json outs = json::object();
  for (const auto& p : outputs) {
    outs[fs::relative(p, root_).generic_string()] = sha256_file(p);
  }
  json inputs = json::object();
  for (Stage up : kStages) {
    if (up >= s) break;
    if (has(up)) inputs[stage_key(up)] = data_.at("stages").at(stage_key(up)).at("config_hash");
  }
  data_["stages"][stage_key(s)] = {{"config_hash", hash}, {"inputs", inputs}, {"outputs", outs}};
  // Downstream records were built from the previous outputs of this stage.
  for (Stage down : kStages) {
    if (down > s) data_["stages"].erase(stage_key(down));
  }
}

std::vector<std::string> Manifest::outputs(Stage s) const {
  std::vector<std::string> out;
  if (!has(s)) return out;
  for (const auto& [rel, d] : data_.at("stages").at(stage_key(s)).at("outputs").items()) {
    out.push_back(rel);
  }
  return out;
}

// --- Stages --------------------------------------------------------------

namespace {
// Every stage up to `last` must be current, so that edits anywhere upstream
// are caught.
void require_through(const Manifest& m, const RunConfig& cfg, Stage last) {
  for (Stage s : kStages) {
    if (s > last) break;
    m.require(s, stage_config_hash(cfg, s));
  }
}
}  // namespace

void cmd_generate(const RunConfig& cfg) {
  cfg.validate();
  const Lexicon lex = Lexicon::default_german();
  std::vector<fs::path> outs;
  for (Cell c : all_cells()) {
    const auto ds = generate_cell_dataset(lex, c, cfg.cell_size, cfg.seed);
    const fs::path p = data_dir(cfg) / (name(c) + ".jsonl");
    write_text(p, to_jsonl(ds));
    outs.push_back(p);
  }
  const fs::path np = data_dir(cfg) / "neutral.jsonl";
  write_text(np, to_jsonl(generate_neutral_dataset(lex, cfg.neutral_size, cfg.seed)));
  outs.push_back(np);
  const SplitRatios ratios;
  const json archive = {{"seed", cfg.seed},
                        {"cell_size", cfg.cell_size},
                        {"neutral_size", cfg.neutral_size},
                        {"split", {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test},
                                   {"rule", "val = floor(0.1 * size), test = floor(0.1 * size), train = rest"}}},
                        {"lexicon_sha256", lex.canonical_hash()}};
  const fs::path ap = data_dir(cfg) / "archive.json";
  write_text(ap, archive.dump(2) + "\n");
  outs.push_back(ap);
  Manifest m = Manifest::load(cfg.out);
  m.record(Stage::Generate, stage_config_hash(cfg, Stage::Generate), outs);
  m.save();
  log("generate: 12 cell datasets and the neutral set written to " + data_dir(cfg).string());
}

void cmd_pretrain(const RunConfig& cfg) {
  cfg.validate();
  Manifest m = Manifest::load(cfg.out);
  require_through(m, cfg, Stage::Generate);
  const DatasetArchive ar = load_archive(cfg);
  ModelConfig mc = cfg.model;
  PretrainReport rep;
  const TinyLM model = mc.kind == ModelKind::Mlm
                           ? pretrain_mlm(ar, mc, cfg.pretrain, cfg.seed, &rep)
                           : pretrain_clm(ar, mc, cfg.pretrain, cfg.pool, cfg.seed, &rep);
  write_text(model_path(cfg), model.serialize());
  const LmsScore lms = lms_score(model, ar.neutral, LmsPolicy{0.15, cfg.seed});
  json accs = json::object();
  for (Cell c : all_cells()) accs[name(c)] = rep.val_accuracy[static_cast<std::size_t>(c.index())];
  const json report = {{"epochs", rep.epochs},
                       {"final_loss", rep.final_loss},
                       {"val_article_accuracy", accs},
                       {"min_val_article_accuracy", rep.min_val_accuracy},
                       {"lms", lms.value},
                       {"lms_metric", std::string(name(lms.metric))},
                       {"checksum", model.params().checksum()}};
  const fs::path rp = cfg.out / "model" / "pretrain.json";
  write_text(rp, report.dump(2) + "\n");
  m.record(Stage::Pretrain, stage_config_hash(cfg, Stage::Pretrain), {model_path(cfg), rp});
  m.save();
  log("pretrain: " + std::to_string(rep.epochs) + " epochs, min article accuracy " +
      fmt_double(rep.min_val_accuracy) + ", lms " + fmt_double(lms.value));
}

void cmd_gradiend(const RunConfig& cfg) {
  cfg.validate();
  Manifest m = Manifest::load(cfg.out);
  require_through(m, cfg, Stage::Pretrain);
  const DatasetArchive ar = load_archive(cfg);
  const TinyLM model = load_model(cfg);
  const ParamSlice slice = resolve_slice(cfg, model);
  GradientBank bank(model, slice, ar, cfg.batch_size, cfg.seed);

  std::ostringstream runs;
  runs << "variant,seed,val_correlation,best_step,final_loss,selected\n";
  std::vector<fs::path> outs;
  for (const auto& t : cfg.resolved_transitions()) {
    const TaskPlan plan = plan_tasks(t, cfg.batch_size);
    const SampleSet train = bank.samples(plan, Split::Train);
    const SampleSet val = bank.samples(plan, Split::Val);
    std::vector<GradiendRun> results;
    for (auto s : cfg.gradiend_seeds) {
      GradiendTrainConfig gc = cfg.gradiend;
      gc.seed = s;
      results.push_back(train_gradiend(train.samples, val.samples, gc, slice.descriptor(), t.name()));
    }
    const GradiendRun& best = select_best_seed(results);
    for (const auto& r : results) {
      runs << csv_field(t.name()) << ',' << r.seed << ',' << fmt_double(r.val_correlation) << ','
           << r.best_step << ',' << fmt_double(r.final_loss) << ',' << (&r == &best ? 1 : 0) << '\n';
    }
    json side = {{"config", to_json(cfg.gradiend)},
                 {"seed", best.seed},
                 {"val_correlation", best.val_correlation},
                 {"best_step", best.best_step},
                 {"final_loss", best.final_loss},
                 {"model_checksum", bank.model_checksum()}};
    const fs::path p = gradiend_path(cfg, t.name());
    fs::create_directories(p.parent_path());
    save_gradiend(p, best.model, side);
    outs.push_back(p);
    outs.push_back(fs::path(p.string() + ".json"));
    log("gradiend: " + t.name() + " val correlation " + fmt_double(best.val_correlation) +
        " (seed " + std::to_string(best.seed) + ")");
  }
  const fs::path rp = cfg.out / "gradiends" / "runs.csv";
  write_text(rp, runs.str());
  outs.push_back(rp);
  m.record(Stage::Gradiend, stage_config_hash(cfg, Stage::Gradiend), outs);
  m.save();
}

void cmd_sweep(const RunConfig& cfg) {
  cfg.validate();
  Manifest m = Manifest::load(cfg.out);
  require_through(m, cfg, Stage::Gradiend);
  const DatasetArchive ar = load_archive(cfg);
  const TinyLM model = load_model(cfg);
  const ParamSlice slice = resolve_slice(cfg, model);

  std::ostringstream sweeps, stars;
  write_sweep_csv_header(sweeps);
  stars << "variant,direction,h_star,alpha_star,lms,base_lms,lms_metric,base_target_prob,target_prob\n";
  for (const auto& t : cfg.resolved_transitions()) {
    const GradiendModel g = load_gradiend(gradiend_path(cfg, t.name()));
    for (bool forward : {true, false}) {
      SweepRequest req;
      req.base = &model;
      req.slice = slice;
      req.gradiend = &g;
      req.direction = DirectedTransition{t, forward};
      req.grid = cfg.alpha_grid;
      req.neutral = &ar.neutral;
      req.tau = cfg.tau;
      req.target_dataset = &ar.at(req.direction.source()).val;
      req.rule = cfg.alpha_rule;
      req.policy = LmsPolicy{0.15, cfg.seed};
      req.allow_empty = true;
      const AlphaSweep s = sweep(req);
      write_sweep_csv(sweeps, s);
      stars << csv_field(s.variant) << ',' << s.direction << ',' << (forward ? "+1" : "-1") << ',';
      if (s.alpha_star) {
        const auto& p = s.points[*s.alpha_star];
        stars << fmt_double(p.alpha) << ',' << fmt_double(p.lms) << ',';
      } else {
        stars << ",,";
      }
      stars << fmt_double(s.base.value) << ',' << name(s.base.metric) << ','
            << fmt_double(s.base_target_prob) << ','
            << (s.alpha_star ? fmt_double(s.points[*s.alpha_star].mean_target_prob) : "") << '\n';
      log("sweep: " + s.variant + " " + s.direction + " alpha* " +
          (s.alpha_star ? fmt_double(s.alpha_star_value()) : std::string("none")));
    }
  }
  write_text(sweep_csv(cfg), sweeps.str());
  write_text(alpha_csv(cfg), stars.str());
  m.record(Stage::Sweep, stage_config_hash(cfg, Stage::Sweep), {sweep_csv(cfg), alpha_csv(cfg)});
  m.save();
}

void cmd_analyze(const RunConfig& cfg) {
  cfg.validate();
  Manifest m = Manifest::load(cfg.out);
  require_through(m, cfg, Stage::Sweep);
  const DatasetArchive ar = load_archive(cfg);
  const TinyLM model = load_model(cfg);
  const ParamSlice slice = resolve_slice(cfg, model);
  GradientBank bank(model, slice, ar, cfg.batch_size, cfg.seed);
  const auto transitions = cfg.resolved_transitions();

  GradiendSet models;
  for (const auto& t : transitions) models.emplace(t.name(), load_gradiend(gradiend_path(cfg, t.name())));

  std::vector<Vec> neutral;
  for (std::size_t i = 0; i < ar.neutral.sentences.size(); ++i) {
    neutral.push_back(neutral_grad_wrt_slice(model, slice, ar.neutral.sentences[i], cfg.seed, i));
  }

  std::vector<std::string> names;
  std::map<std::string, double> corr;
  std::ostringstream enc, enc_summary;
  enc_summary << "variant,source,label,count,mean,stddev\n";
  bool first = true;
  for (const auto& t : transitions) {
    const auto& g = models.at(t.name());
    const SampleSet test = bank.samples(plan_tasks(t, cfg.batch_size), Split::Test);
    names.push_back(t.name());
    corr[t.name()] = correlation_protocol(g, test.samples, cfg.seed);
    const EncodingReport er = encoding_report(g, test.samples, neutral, cfg.seed);
    write_encoding_csv(enc, er, first);
    first = false;
    for (const auto& s : er.sources) {
      enc_summary << csv_field(er.variant) << ',' << s.source << ',' << s.label << ',' << s.h.size()
                  << ',' << fmt_double(s.mean) << ',' << fmt_double(s.stddev) << '\n';
    }
  }
  std::ostringstream corr_csv;
  write_correlation_table(corr_csv, names, {{model_row_name(cfg), corr}});

  std::ostringstream heat, pat, eff;
  write_heatmap_csv_header(heat);
  write_pattern_csv_header(pat);
  eff << "variant,direction,alpha_star,source_cell,target_article,delta_p,cohens_d,p_bh,stars\n";
  const HeatmapConfig hc{cfg.n_perm, cfg.seed};
  for (const auto& a : read_alpha_stars(cfg)) {
    const auto t = parse_transition(a.variant);
    if (!t) throw FormatError("alpha_star.csv names unknown variant " + a.variant);
    const DirectedTransition dt{*t, a.forward};
    const std::string dir = std::string(name(dt.source_article())) + "->" +
                            std::string(name(dt.target_article()));
    eff << csv_field(a.variant) << ',' << dir << ',';
    if (!a.alpha) {
      eff << ",,,,,,\n";
      continue;
    }
    const auto& g = models.at(a.variant);
    const TinyLM modified = apply(model, slice, {&g, a.forward ? 1.0 : -1.0, *a.alpha});
    Heatmap h = heatmap(model, modified, ar, hc);
    h.variant = a.variant;
    h.direction = dir;
    h.alpha = *a.alpha;
    write_heatmap_csv(heat, h);
    write_pattern_csv(pat, a.variant, dir, pattern_score(h, dt));
    const auto& e = h.at(dt.source(), dt.target_article());
    eff << fmt_double(*a.alpha) << ',' << name(dt.source()) << ',' << name(dt.target_article())
        << ',' << fmt_double(e.delta_p) << ',' << fmt_double(e.cohens_d) << ','
        << fmt_double(e.p_bh) << ',' << e.stars << '\n';
    log("analyze: heatmap " + a.variant + " " + dir);
  }

  // Overlap over the groups whose members were all trained.
  std::vector<OverlapReport> overlaps;
  auto add_group = [&](const ArticleGroup& grp) {
    for (const auto& t : grp.transitions) {
      if (!models.count(t.name())) return;
    }
    overlaps.push_back(group_overlap(grp, models, cfg.k));
  };
  for (const auto& grp : article_groups()) add_group(grp);
  add_group(control_group());
  std::ostringstream ov, ovt, abl;
  write_overlap_csv(ov, overlaps);
  write_overlap_table(ovt, overlaps);
  const std::size_t n = models.begin()->second.n();
  if (cfg.k > n / 10) log("analyze: warning, k/n = " + fmt_double(double(cfg.k) / double(n)) + " exceeds 0.1");
  write_ablation_csv(abl, k_ablation(models, cfg.k_grid.empty() ? default_k_grid(n) : cfg.k_grid));

  const fs::path dir = report_dir(cfg);
  const std::vector<std::pair<std::string, std::string>> files{
      {"correlation.csv", corr_csv.str()}, {"encodings.csv", enc.str()},
      {"encoding_summary.csv", enc_summary.str()}, {"heatmaps.csv", heat.str()},
      {"patterns.csv", pat.str()}, {"intervention.csv", eff.str()},
      {"overlap.csv", ov.str()}, {"overlap_table.csv", ovt.str()}, {"ablation.csv", abl.str()}};
  std::vector<fs::path> outs;
  for (const auto& [f, body] : files) {
    write_text(dir / f, body);
    outs.push_back(dir / f);
  }
  m.record(Stage::Analyze, stage_config_hash(cfg, Stage::Analyze), outs);
  m.save();
}

void cmd_report(const RunConfig& cfg) {
  cfg.validate();
  Manifest m = Manifest::load(cfg.out);
  require_through(m, cfg, Stage::Analyze);
  const fs::path dir = report_dir(cfg);
  std::ostringstream md;
  md << "# Run report\n\n";
  md << "config hash: `" << config_hash(cfg) << "`\n\n";
  const json pre = json::parse(read_file(cfg.out / "model" / "pretrain.json"));
  md << "Base model: " << pre.at("epochs").get<int>() << " epochs, minimum article accuracy "
     << fmt_double(pre.at("min_val_article_accuracy").get<double>()) << ", "
     << pre.at("lms_metric").get<std::string>() << " " << fmt_double(pre.at("lms").get<double>())
     << ".\n\n";
  const std::vector<std::pair<std::string, std::string>> sections{
      {"Encoding correlation (x100)", "correlation.csv"},
      {"Intervention at alpha*", "intervention.csv"},
      {"Top-k overlap", "overlap_table.csv"}};
  for (const auto& [title, file] : sections) {
    md << "## " << title << "\n\n" << markdown_table(read_csv(dir / file)) << "\n";
  }
  const fs::path rp = dir / "report.md";
  write_text(rp, md.str());
  m.record(Stage::Report, stage_config_hash(cfg, Stage::Analyze), {rp});
  m.save();
  log("report: " + rp.string());
}

void run_stage(Stage s, const RunConfig& cfg) {
  switch (s) {
    case Stage::Generate: return cmd_generate(cfg);
    case Stage::Pretrain: return cmd_pretrain(cfg);
    case Stage::Gradiend: return cmd_gradiend(cfg);
    case Stage::Sweep: return cmd_sweep(cfg);
    case Stage::Analyze: return cmd_analyze(cfg);
    case Stage::Report: return cmd_report(cfg);
  }
}

}  // namespace gradlab
