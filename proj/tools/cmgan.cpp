// Command-line front end. Talks to the library only through cmgan.h.
// Results go to stdout, progress lines to stderr.

#include <cmgan.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.
int exit_code(cmgan_status st) {
  switch (st) {
    case CMGAN_OK: return 0;
    case CMGAN_ERR_USAGE: return 1;
    case CMGAN_ERR_NUMERIC: return 3;
    default: return 2;
  }
}

struct Failure {
  int code;
};

void check(cmgan_status st) {
  if (st == CMGAN_OK) return;
  std::cerr << "error: " << cmgan_last_error() << "\n";
  throw Failure{exit_code(st)};
}

[[noreturn]] void usage_error(const std::string& what) {
  std::cerr << "error: " << what << "\n";
  throw Failure{1};
}

struct ConfigFree { void operator()(cmgan_config* p) const { cmgan_config_free(p); } };
struct DatasetFree { void operator()(cmgan_dataset* p) const { cmgan_dataset_free(p); } };
struct ModelFree { void operator()(cmgan_model* p) const { cmgan_model_free(p); } };
struct LockFree { void operator()(cmgan_lock* p) const { cmgan_lock_free(p); } };
struct StringFree { void operator()(char* p) const { cmgan_string_free(p); } };

using Config = std::unique_ptr<cmgan_config, ConfigFree>;
using DatasetPtr = std::unique_ptr<cmgan_dataset, DatasetFree>;
using Model = std::unique_ptr<cmgan_model, ModelFree>;
using Lock = std::unique_ptr<cmgan_lock, LockFree>;
using Text = std::unique_ptr<char, StringFree>;

struct Options {
  std::string config;
  std::string run_dir = "run";
  std::string dataset;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string mode = "zsl";
  std::string split = "all";
  bool mfr_exact50 = false;
  std::string cycle_norm;
  // subcommand specific
  std::string only;
  std::string recipe = "all";
  std::size_t output_dim = 0;
  std::vector<std::string> benchmarks;
  std::string vectors_out;
  std::string out;
  std::size_t pairs = 0;
  std::size_t n_classes = 5;
};

fs::path run_path(const Options& o, const std::string& rel) { return fs::path(o.run_dir) / rel; }

std::string dataset_path(const Options& o) {
  return o.dataset.empty() ? run_path(o, "data/manifest.json").string() : o.dataset;
}

std::string model_path(const Options& o) { return o.model.empty() ? run_path(o, "model.json").string() : o.model; }

bool has_overrides(const Options& o) {
  return !o.config.empty() || o.seed || !o.sets.empty() || !o.cycle_norm.empty() || o.mfr_exact50;
}

void apply_overrides(cmgan_config* cfg, const Options& o) {
  for (const auto& s : o.sets) check(cmgan_config_set(cfg, s.c_str()));
  if (o.seed) check(cmgan_config_set(cfg, ("seed=" + std::to_string(*o.seed)).c_str()));
  if (!o.cycle_norm.empty()) check(cmgan_config_set(cfg, ("losses.cycle_norm=\"" + o.cycle_norm + "\"").c_str()));
  if (o.mfr_exact50) check(cmgan_config_set(cfg, "eval.mfr_exact50=true"));
}

Config load_config(const Options& o) {
  cmgan_config* raw = nullptr;
  if (o.config.empty()) {
    check(cmgan_config_new(&raw));
  } else {
    check(cmgan_config_load(o.config.c_str(), &raw));
  }
  Config cfg(raw);
  apply_overrides(cfg.get(), o);
  return cfg;
}

json config_json(const cmgan_config* cfg) {
  char* raw = nullptr;
  check(cmgan_config_to_json(cfg, &raw));
  Text text(raw);
  return json::parse(text.get());
}

DatasetPtr load_dataset(const Options& o) {
  cmgan_dataset* raw = nullptr;
  check(cmgan_dataset_load(dataset_path(o).c_str(), &raw));
  return DatasetPtr(raw);
}

Model load_model(const Options& o) {
  cmgan_model* raw = nullptr;
  check(cmgan_model_load(model_path(o).c_str(), &raw));
  return Model(raw);
}

Lock lock_run_dir(const Options& o) {
  cmgan_lock* raw = nullptr;
  check(cmgan_lock_run_dir(o.run_dir.c_str(), &raw));
  return Lock(raw);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
      std::cerr << "error: cannot write '" << tmp.string() << "'\n";
      throw Failure{2};
    }
  }
  fs::rename(tmp, path);
}

void emit(const fs::path& path, const char* text) {
  write_text(path, text);
  std::cout << text;
}

struct LogSink {
  std::ofstream file;
};

void log_line(const char* line, void* user) {
  auto* sink = static_cast<LogSink*>(user);
  std::cerr << line << "\n";
  if (sink != nullptr && sink->file) sink->file << line << "\n";
}

std::string safe_name(std::string s) {
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  return s;
}

// ---------------------------------------------------------------- subcommands

int cmd_gen_synth(const Options& o) {
  Config cfg = load_config(o);
  Lock lock = lock_run_dir(o);
  const fs::path dir = o.dataset.empty() ? run_path(o, "data") : fs::path(o.dataset).parent_path();
  cmgan_dataset* raw = nullptr;
  check(cmgan_gen_synthetic(cfg.get(), dir.string().c_str(), &raw));
  DatasetPtr ds(raw);
  char* summary = nullptr;
  check(cmgan_dataset_summary(ds.get(), &summary));
  Text text(summary);
  std::cout << "dataset: " << (dir / "manifest.json").string() << "\n" << text.get();
  return 0;
}

int cmd_build_conse(const Options& o) {
  Config cfg = load_config(o);
  DatasetPtr ds = load_dataset(o);
  Lock lock = lock_run_dir(o);
  const std::string path = o.out.empty() ? run_path(o, "conse.tsv").string() : o.out;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  check(cmgan_build_conse(ds.get(), cfg.get(), path.c_str()));
  std::cout << "conse: " << path << "\n";
  return 0;
}

int cmd_train(const Options& o, bool unsupervised) {
  Config cfg = load_config(o);
  DatasetPtr ds = load_dataset(o);
  Lock lock = lock_run_dir(o);
  LogSink sink;
  sink.file.open(run_path(o, unsupervised ? "train_unsup.log" : "train.log"), std::ios::trunc);
  const std::string ck_dir = run_path(o, unsupervised ? "checkpoints_unsup" : "checkpoints").string();
  cmgan_model* raw = nullptr;
  if (unsupervised) {
    check(cmgan_train_unsupervised(ds.get(), cfg.get(), ck_dir.c_str(), log_line, &sink, &raw));
  } else {
    check(cmgan_train(ds.get(), cfg.get(), ck_dir.c_str(), log_line, &sink, &raw));
  }
  Model model(raw);
  const std::string path = model_path(o);
  check(cmgan_model_save(model.get(), path.c_str()));
  std::cout << "model: " << path << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  Model model = load_model(o);
  DatasetPtr ds = load_dataset(o);
  bool exact50 = o.mfr_exact50;
  if (has_overrides(o)) {
    exact50 = config_json(load_config(o).get())["eval"]["mfr_exact50"].get<bool>();
  } else {
    cmgan_config* raw = nullptr;
    check(cmgan_model_config(model.get(), &raw));
    exact50 = config_json(Config(raw).get())["eval"]["mfr_exact50"].get<bool>();
  }
  Lock lock = lock_run_dir(o);
  char* raw = nullptr;
  check(cmgan_evaluate(model.get(), ds.get(), o.mode.c_str(), o.split.c_str(), exact50 ? 1 : 0, &raw));
  Text text(raw);
  emit(run_path(o, "reports/eval_" + o.mode + "_" + safe_name(o.split) + ".json"), text.get());
  return 0;
}

int cmd_ablate(const Options& o) {
  Config cfg = load_config(o);
  DatasetPtr ds = load_dataset(o);
  Lock lock = lock_run_dir(o);
  char* raw = nullptr;
  check(cmgan_ablate(ds.get(), cfg.get(), o.mode.c_str(), o.split.c_str(), o.only.empty() ? nullptr : o.only.c_str(),
                     log_line, nullptr, &raw));
  Text text(raw);
  emit(run_path(o, "reports/ablation_" + o.mode + "_" + safe_name(o.split) + ".json"), text.get());
  return 0;
}

int cmd_ground(const Options& o) {
  if (o.benchmarks.empty()) usage_error("ground needs at least one --benchmark file");
  Model model = load_model(o);
  DatasetPtr ds = load_dataset(o);
  Lock lock = lock_run_dir(o);
  std::vector<const char*> paths;
  for (const auto& b : o.benchmarks) paths.push_back(b.c_str());
  char* raw = nullptr;
  check(cmgan_ground(model.get(), ds.get(), o.recipe.c_str(), o.output_dim, paths.data(), paths.size(),
                     o.vectors_out.empty() ? nullptr : o.vectors_out.c_str(), &raw));
  Text text(raw);
  emit(run_path(o, "reports/grounding_" + safe_name(o.recipe) + ".json"), text.get());
  return 0;
}

int cmd_rho_vis(const Options& o) {
  Config cfg = load_config(o);
  DatasetPtr ds = load_dataset(o);
  const auto seed = config_json(cfg.get())["seed"].get<std::uint64_t>();
  Lock lock = lock_run_dir(o);
  char* raw = nullptr;
  check(cmgan_rho_vis(ds.get(), seed, o.pairs, &raw));
  Text text(raw);
  emit(run_path(o, "reports/rho_vis.json"), text.get());
  return 0;
}

int cmd_grad_check(const Options& o) {
  std::uint64_t seed = 1;
  if (o.seed) {
    seed = *o.seed;
  } else if (!o.config.empty() || !o.sets.empty()) {
    seed = config_json(load_config(o).get())["seed"].get<std::uint64_t>();
  }
  double worst = 0.0;
  char* raw = nullptr;
  check(cmgan_grad_check(seed, o.cycle_norm.empty() ? nullptr : o.cycle_norm.c_str(), &worst, &raw));
  Text text(raw);
  std::cout << text.get();
  char line[64];
  std::snprintf(line, sizeof line, "max_relative_error=%.3e", worst);
  std::cout << line << (worst < 1e-4 ? " ok" : " FAIL") << "\n";
  return worst < 1e-4 ? 0 : 3;
}

int cmd_export_traj(const Options& o) {
  Model model = load_model(o);
  DatasetPtr ds = load_dataset(o);
  Lock lock = lock_run_dir(o);
  char* raw = nullptr;
  check(cmgan_export_trajectory(model.get(), ds.get(), o.n_classes, &raw));
  Text text(raw);
  const fs::path path = o.out.empty() ? run_path(o, "reports/trajectory.tsv") : fs::path(o.out);
  write_text(path, text.get());
  std::cout << "trajectory: " << path.string() << "\n";
  return 0;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--run-dir", o.run_dir, "Run directory (default: run)");
  sub->add_option("--seed", o.seed, "Run seed");
  sub->add_option("--set", o.sets, "Dotted-path override key=value (repeatable)");
  sub->add_option("--dataset", o.dataset, "Dataset manifest (default: <run-dir>/data/manifest.json)");
}

void add_eval_flags(CLI::App* sub, Options& o) {
  sub->add_option("--mode", o.mode, "Candidate set")->check(CLI::IsMember({"zsl", "gzsl"}));
  sub->add_option("--split", o.split, "all, or a class tag of the manifest such as 2hop or 3hop");
  sub->add_flag("--mfr-exact50", o.mfr_exact50, "Report 100*mean(FR-1)/(K-1) instead of 100*mean(FR)/K");
}

void add_cycle_norm(CLI::App* sub, Options& o) {
  sub->add_option("--cycle-norm", o.cycle_norm, "Cycle loss norm")->check(CLI::IsMember({"l2", "l2_squared"}));
}

void add_model(CLI::App* sub, Options& o) {
  sub->add_option("--model", o.model, "Model checkpoint (default: <run-dir>/model.json)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal zero-shot learning with alternating supervised and CycleGAN steps"};
  app.name("cmgan");
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-synth", "Generate the synthetic benchmark into <run-dir>/data");
  add_common(gen, o);

  auto* conse = app.add_subcommand("build-conse", "Write the CONSE vector of every image");
  add_common(conse, o);
  conse->add_option("--out", o.out, "Output table (default: <run-dir>/conse.tsv)");

  auto* train = app.add_subcommand("train", "Alternating supervised/transductive training");
  add_common(train, o);
  add_cycle_norm(train, o);
  add_model(train, o);

  auto* unsup = app.add_subcommand("train-unsup", "One transductive step between images and sentences");
  add_common(unsup, o);
  add_cycle_norm(unsup, o);
  add_model(unsup, o);

  auto* eval = app.add_subcommand("eval", "Retrieval report of a trained model");
  add_common(eval, o);
  add_eval_flags(eval, o);
  add_model(eval, o);

  auto* abl = app.add_subcommand("ablate", "Train and evaluate every ablation scenario");
  add_common(abl, o);
  add_eval_flags(abl, o);
  add_cycle_norm(abl, o);
  abl->add_option("--only", o.only, "Comma-separated subset of init,cycle,gan,cgan,sup,full");

  auto* ground = app.add_subcommand("ground", "Score grounded word vectors on relatedness benchmarks");
  add_common(ground, o);
  add_model(ground, o);
  ground->add_option("--recipe", o.recipe, "x, vsup, x+vsup, vtrans, x+vtrans, vsup+vtrans or all");
  ground->add_option("--output-dim", o.output_dim, "PCA dimension of concatenations (default: word dimension)");
  ground->add_option("--benchmark", o.benchmarks, "TSV word-pair benchmark (repeatable)");
  ground->add_option("--vectors-out", o.vectors_out, "Write the grounded vectors of a single recipe");

  auto* rho = app.add_subcommand("rho-vis", "Text/visual geometric agreement of the dataset");
  add_common(rho, o);
  rho->add_option("--pairs", o.pairs, "Sampled pair count (default: all pairs up to 512 classes)");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every loss");
  add_common(gc, o);
  add_cycle_norm(gc, o);

  auto* traj = app.add_subcommand("export-traj", "Per-step 2-D PCA coordinates of labels and visual centroids");
  add_common(traj, o);
  add_model(traj, o);
  traj->add_option("--n-classes", o.n_classes, "Unseen classes to sample");
  traj->add_option("--out", o.out, "Output TSV (default: <run-dir>/reports/trajectory.tsv)");

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(o);
    if (conse->parsed()) return cmd_build_conse(o);
    if (train->parsed()) return cmd_train(o, false);
    if (unsup->parsed()) return cmd_train(o, true);
    if (eval->parsed()) return cmd_eval(o);
    if (abl->parsed()) return cmd_ablate(o);
    if (ground->parsed()) return cmd_ground(o);
    if (rho->parsed()) return cmd_rho_vis(o);
    if (gc->parsed()) return cmd_grad_check(o);
    if (traj->parsed()) return cmd_export_traj(o);
  } catch (const Failure& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << app.help();
  return 1;
}
