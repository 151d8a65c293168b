#include "cmgan.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "cmgan/data.hpp"
#include "cmgan/error.hpp"
#include "cmgan/eval.hpp"
#include "cmgan/gradcheck.hpp"
#include "cmgan/grounding.hpp"

struct cmgan_config {
  cmgan::json doc;  // kept as a document so overrides compose
};

struct cmgan_dataset {
  cmgan::Dataset ds;
};

struct cmgan_model {
  cmgan::Checkpoint ck;
};

struct cmgan_lock {
  explicit cmgan_lock(const char* dir) : lock(dir) {}
  cmgan::RunDirLock lock;
};

namespace {

namespace fs = std::filesystem;
using namespace cmgan;

// Streams split off the run seed for diagnostics outside training.
constexpr std::uint64_t kTrajectoryStream = 50;

thread_local std::string last_error;
thread_local std::string last_kind;

cmgan_status set_error(cmgan_status st, std::string kind, std::string what) {
  last_kind = std::move(kind);
  last_error = std::move(what);
  return st;
}

cmgan_status from_category(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return CMGAN_ERR_USAGE;
    case ErrorCategory::Data: return CMGAN_ERR_DATA;
    case ErrorCategory::Numeric: return CMGAN_ERR_NUMERIC;
  }
  return CMGAN_ERR_INTERNAL;
}

template <typename F>
cmgan_status guarded(F&& f) {
  last_error.clear();
  last_kind.clear();
  try {
    f();
    return CMGAN_OK;
  } catch (const Error& e) {
    return set_error(from_category(e.category()), std::string(error_kind_name(e.kind())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(CMGAN_ERR_USAGE, "InvalidArgument", e.what());
  } catch (const fs::filesystem_error& e) {
    return set_error(CMGAN_ERR_DATA, "Io", e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CMGAN_ERR_INTERNAL, "Internal", "out of memory");
  } catch (const std::exception& e) {
    return set_error(CMGAN_ERR_INTERNAL, "Internal", e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorKind::InvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::function<void(std::string_view)> logger(cmgan_log_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](std::string_view line) { fn(std::string(line).c_str(), user); };
}

StepHooks checkpoint_hooks(const char* dir, const RunConfig& cfg) {
  StepHooks hooks;
  if (dir == nullptr) return hooks;
  fs::create_directories(dir);
  hooks.step_done = [path = fs::path(dir), cfg](const TrainState& state) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%02zu.json", state.step_index());
    checkpoint_save(path / name, Checkpoint{cfg, state});
  };
  return hooks;
}

std::vector<std::string> split_list(const char* s) {
  std::vector<std::string> out;
  if (s == nullptr) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

json history_json(const TrainState& state) {
  json steps = json::array();
  for (const auto& r : state.history) {
    steps.push_back({{"step", r.step},
                     {"kind", step_kind_name(r.kind)},
                     {"lambda_c", r.lambda_c ? json(*r.lambda_c) : json(nullptr)},
                     {"validation", r.validation},
                     {"grid_validation", r.grid_validation},
                     {"image_stack_len", r.image_stack_len},
                     {"label_stack_len", r.label_stack_len},
                     {"accepted", r.accepted}});
  }
  return {{"initial_validation", state.initial_validation},
          {"image_stack_len", state.image_stack.size()},
          {"label_stack_len", state.label_stack.size()},
          {"steps", std::move(steps)}};
}

}  // namespace

extern "C" {

const char* cmgan_version(void) { return "1.0.0"; }
const char* cmgan_last_error(void) { return last_error.c_str(); }
const char* cmgan_last_error_kind(void) { return last_kind.c_str(); }
void cmgan_string_free(char* s) { std::free(s); }

cmgan_status cmgan_lock_run_dir(const char* dir, cmgan_lock** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    *out = new cmgan_lock(dir);
  });
}

void cmgan_lock_free(cmgan_lock* lock) { delete lock; }

// ---------------------------------------------------------------- configuration

cmgan_status cmgan_config_new(cmgan_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new cmgan_config{to_json(RunConfig{})};
  });
}

cmgan_status cmgan_config_parse(const char* json_text, cmgan_config** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) fail(ErrorKind::ParseError, "configuration is not valid JSON");
    run_config_from_json(doc);  // validates
    *out = new cmgan_config{std::move(doc)};
  });
}

cmgan_status cmgan_config_load(const char* path, cmgan_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    json doc = read_json_file(path);
    run_config_from_json(doc);
    *out = new cmgan_config{std::move(doc)};
  });
}

cmgan_status cmgan_config_set(cmgan_config* cfg, const char* assignment) {
  return guarded([&] {
    require(cfg, "cfg");
    require(assignment, "assignment");
    json doc = cfg->doc;
    apply_override(doc, assignment);
    run_config_from_json(doc);
    cfg->doc = std::move(doc);
  });
}

cmgan_status cmgan_config_to_json(const cmgan_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    put(out, dump(to_json(run_config_from_json(cfg->doc))));
  });
}

void cmgan_config_free(cmgan_config* cfg) { delete cfg; }

// ---------------------------------------------------------------- datasets

cmgan_status cmgan_gen_synthetic(const cmgan_config* cfg, const char* dir, cmgan_dataset** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(dir, "dir");
    const RunConfig rc = run_config_from_json(cfg->doc);
    Dataset ds = gen_synthetic(rc.synth, rc.seed);
    save_dataset(dir, ds);
    if (out != nullptr) *out = new cmgan_dataset{std::move(ds)};
  });
}

cmgan_status cmgan_dataset_load(const char* manifest_path, cmgan_dataset** out) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    *out = new cmgan_dataset{load_dataset(manifest_path)};
  });
}

cmgan_status cmgan_dataset_summary(const cmgan_dataset* ds, char** out) {
  return guarded([&] {
    require(ds, "ds");
    const Dataset& d = ds->ds;
    put(out, dump({{"kind", d.kind},
                   {"words", d.words.size()},
                   {"word_dim", d.words.dim()},
                   {"seen_labels", d.seen_labels.size()},
                   {"unseen_labels", d.unseen_labels.size()},
                   {"seen_images", d.seen_alignment.size()},
                   {"unseen_images", d.unseen_images.size()},
                   {"sentences", d.sentences.size()},
                   {"visual", d.visual.has_value()}}));
  });
}

void cmgan_dataset_free(cmgan_dataset* ds) { delete ds; }

cmgan_status cmgan_build_conse(const cmgan_dataset* ds, const cmgan_config* cfg, const char* path) {
  return guarded([&] {
    require(ds, "ds");
    require(cfg, "cfg");
    require(path, "path");
    const RunConfig rc = run_config_from_json(cfg->doc);
    const BaseVectors base = compute_base(ds->ds, rc.conse);
    EmbeddingTable table(ds->ds.words.dim());
    for (const auto& probe : ds->ds.probes) table.add(probe.image_id, base.images.at(probe.image_id));
    save_embeddings(path, table);
  });
}

// ---------------------------------------------------------------- training

cmgan_status cmgan_train(const cmgan_dataset* ds, const cmgan_config* cfg, const char* checkpoint_dir,
                         cmgan_log_fn log, void* user, cmgan_model** out) {
  return guarded([&] {
    require(ds, "ds");
    require(cfg, "cfg");
    require(out, "out");
    const RunConfig rc = run_config_from_json(cfg->doc);
    if (ds->ds.kind != "zsl") fail(ErrorKind::InvalidArgument, "train needs a zsl dataset; use train-unsup");
    const BaseVectors base = compute_base(ds->ds, rc.conse);
    const TrainingView view = training_view(ds->ds, base);
    TrainState state = train_full(view.seen, view.unseen, rc, checkpoint_hooks(checkpoint_dir, rc), logger(log, user));
    *out = new cmgan_model{Checkpoint{rc, std::move(state)}};
  });
}

cmgan_status cmgan_train_unsupervised(const cmgan_dataset* ds, const cmgan_config* cfg, const char* checkpoint_dir,
                                      cmgan_log_fn log, void* user, cmgan_model** out) {
  return guarded([&] {
    require(ds, "ds");
    require(cfg, "cfg");
    require(out, "out");
    const RunConfig rc = run_config_from_json(cfg->doc);
    if (ds->ds.kind != "sentences") fail(ErrorKind::InvalidArgument, "train-unsup needs a sentences dataset");
    const BaseVectors base = compute_base(ds->ds, rc.conse);
    const TrainingView view = training_view(ds->ds, base);
    TrainState state = train_unsupervised(view.unseen, rc, checkpoint_hooks(checkpoint_dir, rc), logger(log, user));
    *out = new cmgan_model{Checkpoint{rc, std::move(state)}};
  });
}

cmgan_status cmgan_model_save(const cmgan_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    checkpoint_save(path, model->ck);
  });
}

cmgan_status cmgan_model_load(const char* path, cmgan_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cmgan_model{checkpoint_load(path)};
  });
}

cmgan_status cmgan_model_config(const cmgan_model* model, cmgan_config** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new cmgan_config{to_json(model->ck.config)};
  });
}

cmgan_status cmgan_model_history(const cmgan_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    put(out, dump(history_json(model->ck.state)));
  });
}

void cmgan_model_free(cmgan_model* model) { delete model; }

// ---------------------------------------------------------------- evaluation

cmgan_status cmgan_evaluate(const cmgan_model* model, const cmgan_dataset* ds, const char* mode, const char* split,
                            int mfr_exact50, char** out) {
  return guarded([&] {
    require(model, "model");
    require(ds, "ds");
    const EvalMode m = parse_eval_mode(mode == nullptr ? "zsl" : mode);
    EvalConfig ec = model->ck.config.eval;
    ec.mfr_exact50 = mfr_exact50 != 0;
    const BaseVectors base = compute_base(ds->ds, model->ck.config.conse);
    const auto reports = evaluate(model->ck.state, ds->ds, base, m, split == nullptr ? "all" : split, ec);
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(report_to_json(r));
    put(out, dump({{"schema_version", kReportSchemaVersion}, {"reports", std::move(arr)}}));
  });
}

cmgan_status cmgan_ablate(const cmgan_dataset* ds, const cmgan_config* cfg, const char* mode, const char* split,
                          const char* only, cmgan_log_fn log, void* user, char** out) {
  return guarded([&] {
    require(ds, "ds");
    require(cfg, "cfg");
    const RunConfig rc = run_config_from_json(cfg->doc);
    const BaseVectors base = compute_base(ds->ds, rc.conse);
    const auto rows = ablate(rc, ds->ds, base, parse_eval_mode(mode == nullptr ? "zsl" : mode),
                             split == nullptr ? "all" : split, split_list(only), logger(log, user));
    put(out, dump(ablation_to_json(rows)));
  });
}

cmgan_status cmgan_ground(const cmgan_model* model, const cmgan_dataset* ds, const char* recipe, size_t output_dim,
                          const char* const* benchmark_paths, size_t n_benchmarks, const char* vectors_path,
                          char** out) {
  return guarded([&] {
    require(model, "model");
    require(ds, "ds");
    if (n_benchmarks > 0) require(benchmark_paths, "benchmark_paths");
    const std::string name = recipe == nullptr ? "all" : recipe;
    std::vector<GroundingVariant> variants;
    if (name == "all") {
      variants.assign(kGroundingVariants.begin(), kGroundingVariants.end());
    } else {
      variants.push_back(parse_grounding_variant(name));
    }
    if (vectors_path != nullptr && variants.size() != 1)
      fail(ErrorKind::InvalidArgument, "writing vectors needs a single recipe");

    std::vector<RelatednessBenchmark> benches;
    for (std::size_t i = 0; i < n_benchmarks; ++i) {
      require(benchmark_paths[i], "benchmark path");
      benches.push_back(load_benchmark(benchmark_paths[i]));
    }
    const auto vocab = benchmark_vocabulary(benches);
    const MappingStack vsup = supervised_label_stack(model->ck.state);
    const MappingStack& vtrans = model->ck.state.label_stack;

    json results = json::array();
    for (auto v : variants) {
      const GroundingRecipe rec{v, output_dim};
      GroundingResult g = ground_vectors(ds->ds.words, vsup, vtrans, rec, vocab);
      json scores = json::array();
      for (const auto& b : benches) {
        const RelatednessResult r = relatedness_eval(g.vectors, b);
        scores.push_back({{"benchmark", r.benchmark},
                          {"spearman", r.spearman},
                          {"covered", r.covered},
                          {"total", r.total},
                          {"coverage", r.coverage()}});
      }
      results.push_back({{"recipe", grounding_variant_name(v)},
                         {"dim", g.vectors.dim()},
                         {"benchmarks", std::move(scores)},
                         {"skipped_tokens", g.skipped}});
      if (vectors_path != nullptr) save_embeddings(vectors_path, g.vectors);
    }
    put(out, dump({{"schema_version", kReportSchemaVersion}, {"results", std::move(results)}}));
  });
}

cmgan_status cmgan_rho_vis(const cmgan_dataset* ds, uint64_t seed, size_t n_pairs, char** out) {
  return guarded([&] {
    require(ds, "ds");
    const ClassVisualPairs pairs = class_visual_pairs(ds->ds);
    const std::size_t n = n_pairs == 0 ? rho_vis_default_pairs(pairs.ids.size()) : n_pairs;
    Rng rng(seed);
    const double rho = rho_vis(pairs.text, pairs.visual, n, rng);
    put(out, dump({{"schema_version", kReportSchemaVersion},
                   {"rho_vis", rho},
                   {"classes", pairs.ids.size()},
                   {"pairs", n}}));
  });
}

cmgan_status cmgan_grad_check(uint64_t seed, const char* cycle_norm, double* max_error, char** out) {
  return guarded([&] {
    LossGradConfig cfg;
    if (cycle_norm != nullptr) cfg.cycle_norm = parse_cycle_norm(cycle_norm);
    const LossGradReport r = loss_grad_check(seed, cfg);
    if (max_error != nullptr) *max_error = r.max();
    put(out, dump({{"seed", seed},
                   {"points", r.points},
                   {"cycle_norm", cycle_norm_name(cfg.cycle_norm)},
                   {"max_relative_error", r.max()},
                   {"triplet", r.triplet},
                   {"gan_v", r.gan_v},
                   {"gan_t", r.gan_t},
                   {"disc_v", r.disc_v},
                   {"disc_t", r.disc_t},
                   {"cycle", r.cycle},
                   {"combined", r.combined}}));
  });
}

cmgan_status cmgan_export_trajectory(const cmgan_model* model, const cmgan_dataset* ds, size_t n_classes,
                                     char** out) {
  return guarded([&] {
    require(model, "model");
    require(ds, "ds");
    const BaseVectors base = compute_base(ds->ds, model->ck.config.conse);
    const Rng rng = Rng(model->ck.config.seed).split(kTrajectoryStream);
    put(out, format_trajectory(export_trajectory(model->ck.state, ds->ds, base, n_classes, rng)));
  });
}

}  // extern "C"
