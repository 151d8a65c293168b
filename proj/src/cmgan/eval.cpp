#include "cmgan/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cmgan/error.hpp"

namespace cmgan {

std::string_view eval_mode_name(EvalMode m) noexcept { return m == EvalMode::Zsl ? "zsl" : "gzsl"; }

EvalMode parse_eval_mode(std::string_view name) {
  if (name == "zsl") return EvalMode::Zsl;
  if (name == "gzsl") return EvalMode::Gzsl;
  fail(ErrorKind::InvalidArgument, "mode must be zsl or gzsl, got '" + std::string(name) + "'");
}

std::vector<RankingResult> rank_queries(const std::vector<Vec>& queries, const std::vector<std::string>& query_ids,
                                        const std::vector<Vec>& candidates,
                                        const std::vector<std::vector<std::size_t>>& truth) {
  if (queries.size() != query_ids.size() || queries.size() != truth.size()) {
    fail(ErrorKind::DimMismatch, "queries, ids and truth must be aligned");
  }
  if (candidates.empty()) fail(ErrorKind::EmptySplit, "no candidates to rank");
  std::vector<RankingResult> out;
  out.reserve(queries.size());
  std::vector<double> sims(candidates.size());
  std::vector<char> relevant(candidates.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (truth[q].empty()) fail(ErrorKind::UnknownTruth, "query " + query_ids[q] + " has no relevant candidate");
    std::fill(relevant.begin(), relevant.end(), 0);
    for (std::size_t t : truth[q]) {
      if (t >= candidates.size()) fail(ErrorKind::UnknownTruth, "query " + query_ids[q] + " points past the candidates");
      relevant[t] = 1;
    }
    double best = -2.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      sims[c] = cosine(queries[q], candidates[c]);
      if (relevant[c]) best = std::max(best, sims[c]);
    }
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (!relevant[c] && sims[c] >= best) ++ahead;
    }
    out.push_back(RankingResult{query_ids[q], ahead + 1, candidates.size()});
  }
  return out;
}

std::vector<RankingResult> rank_queries(const std::vector<Vec>& queries, const std::vector<std::string>& query_ids,
                                        const std::vector<Vec>& candidates, const std::vector<std::size_t>& truth) {
  std::vector<std::vector<std::size_t>> sets;
  sets.reserve(truth.size());
  for (std::size_t t : truth) sets.push_back({t});
  return rank_queries(queries, query_ids, candidates, sets);
}

double flat_hit(const std::vector<RankingResult>& results, std::size_t k) {
  if (results.empty()) fail(ErrorKind::EmptySplit, "flat hit over no queries");
  if (k == 0) fail(ErrorKind::InvalidArgument, "flat hit needs k >= 1");
  const auto hits = std::count_if(results.begin(), results.end(),
                                  [k](const RankingResult& r) { return r.first_relevant_rank <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

double mfr(const std::vector<RankingResult>& results, bool exact50) {
  if (results.empty()) fail(ErrorKind::EmptySplit, "MFR over no queries");
  const std::size_t K = results.front().candidate_count;
  double sum = 0.0;
  for (const auto& r : results) {
    if (r.candidate_count != K) fail(ErrorKind::InconsistentCandidates, "results mix candidate counts");
    sum += static_cast<double>(r.first_relevant_rank);
  }
  const double n = static_cast<double>(results.size());
  if (!exact50) return 100.0 * sum / (static_cast<double>(K) * n);
  if (K < 2) fail(ErrorKind::InvalidArgument, "the exact50 MFR needs at least two candidates");
  return 100.0 * (sum / n - 1.0) / static_cast<double>(K - 1);
}

EvalReport make_report(const std::vector<RankingResult>& results, EvalMode mode, std::string split,
                       std::string direction, bool exact50) {
  EvalReport r;
  r.mode = mode;
  r.split = std::move(split);
  r.direction = std::move(direction);
  for (int k : kFlatHitKs) r.fh[k] = flat_hit(results, static_cast<std::size_t>(k));
  r.mfr = mfr(results, exact50);
  r.mfr_exact50 = exact50;
  r.query_count = results.size();
  r.candidate_count = results.front().candidate_count;
  return r;
}

json report_to_json(const EvalReport& r) {
  json fh = json::object();
  for (const auto& [k, v] : r.fh) fh[std::to_string(k)] = v;
  return {{"schema_version", kReportSchemaVersion},
          {"mode", eval_mode_name(r.mode)},
          {"split", r.split},
          {"direction", r.direction},
          {"fh", std::move(fh)},
          {"mfr", r.mfr},
          {"mfr_variant", r.mfr_exact50 ? "exact50" : "printed"},
          {"query_count", r.query_count},
          {"candidate_count", r.candidate_count}};
}

namespace {

bool has_tag(const ClassLabel& l, const std::string& tag) {
  return std::find(l.tags.begin(), l.tags.end(), tag) != l.tags.end();
}

// Unseen labels covered by `split`, by id.
std::unordered_set<std::int64_t> split_labels(const Dataset& ds, const std::string& split) {
  std::unordered_set<std::int64_t> ids;
  for (const auto& l : ds.unseen_labels) {
    if (split == "all" || has_tag(l, split)) ids.insert(l.id);
  }
  if (ids.empty()) fail(ErrorKind::EmptySplit, "no unseen class belongs to split '" + split + "'");
  return ids;
}

std::vector<EvalReport> evaluate_zsl(const TrainState& state, const Dataset& ds, const BaseVectors& base,
                                     EvalMode mode, const std::string& split, const EvalConfig& cfg) {
  const auto in_split = split_labels(ds, split);
  std::vector<Vec> candidates;
  std::unordered_map<std::int64_t, std::size_t> cand_index;
  for (std::size_t i = 0; i < ds.unseen_labels.size(); ++i) {
    if (!in_split.count(ds.unseen_labels[i].id)) continue;
    cand_index[ds.unseen_labels[i].id] = candidates.size();
    candidates.push_back(state.label_stack.apply(base.unseen_labels[i]));
  }
  if (mode == EvalMode::Gzsl) {
    for (const auto& v : base.seen_labels) candidates.push_back(state.label_stack.apply(v));
  }
  std::vector<Vec> queries;
  std::vector<std::string> ids;
  std::vector<std::size_t> truth;
  for (const auto& img : ds.unseen_images) {
    auto it = ds.evaluation_only.unseen_alignment.find(img);
    if (it == ds.evaluation_only.unseen_alignment.end() || !in_split.count(it->second)) continue;
    queries.push_back(state.image_stack.apply(base.images.at(img)));
    ids.push_back(img);
    truth.push_back(cand_index.at(it->second));
  }
  if (queries.empty()) fail(ErrorKind::EmptySplit, "no labelled unseen image in split '" + split + "'");
  return {make_report(rank_queries(queries, ids, candidates, truth), mode, split, "image_to_label", cfg.mfr_exact50)};
}

std::vector<EvalReport> evaluate_sentences(const TrainState& state, const Dataset& ds, const BaseVectors& base,
                                           EvalMode mode, const std::string& split, const EvalConfig& cfg) {
  if (mode != EvalMode::Zsl) fail(ErrorKind::InvalidArgument, "sentence datasets only support zsl mode");
  const auto in_split = split_labels(ds, split);
  auto image_in_split = [&](const std::string& img) {
    if (split == "all") return true;
    auto it = ds.evaluation_only.unseen_alignment.find(img);
    return it != ds.evaluation_only.unseen_alignment.end() && in_split.count(it->second) > 0;
  };

  std::vector<Vec> images;
  std::vector<std::string> image_ids;
  std::unordered_map<std::string, std::size_t> image_index;
  for (const auto& img : ds.unseen_images) {
    if (!image_in_split(img)) continue;
    image_index[img] = images.size();
    images.push_back(state.image_stack.apply(base.images.at(img)));
    image_ids.push_back(img);
  }
  std::vector<Vec> sentences;
  std::vector<std::string> sentence_ids;
  std::vector<std::vector<std::size_t>> s2i;
  std::vector<std::vector<std::size_t>> i2s(images.size());
  for (std::size_t s = 0; s < ds.sentences.size(); ++s) {
    auto it = ds.evaluation_only.sentence_image.find(ds.sentences[s].id);
    if (it == ds.evaluation_only.sentence_image.end()) continue;
    auto img = image_index.find(it->second);
    if (img == image_index.end()) continue;
    i2s[img->second].push_back(sentences.size());
    s2i.push_back({img->second});
    sentences.push_back(state.label_stack.apply(base.sentences[s]));
    sentence_ids.push_back(ds.sentences[s].id);
  }
  if (sentences.empty()) fail(ErrorKind::EmptySplit, "no aligned sentence in split '" + split + "'");

  std::vector<Vec> img_queries;
  std::vector<std::string> img_query_ids;
  std::vector<std::vector<std::size_t>> img_truth;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (i2s[i].empty()) continue;
    img_queries.push_back(images[i]);
    img_query_ids.push_back(image_ids[i]);
    img_truth.push_back(i2s[i]);
  }
  return {make_report(rank_queries(sentences, sentence_ids, images, s2i), mode, split, "sentence_to_image",
                      cfg.mfr_exact50),
          make_report(rank_queries(img_queries, img_query_ids, sentences, img_truth), mode, split,
                      "image_to_sentence", cfg.mfr_exact50)};
}

}  // namespace

std::vector<EvalReport> evaluate(const TrainState& state, const Dataset& ds, const BaseVectors& base, EvalMode mode,
                                 const std::string& split, const EvalConfig& cfg) {
  if (ds.kind == "sentences") return evaluate_sentences(state, ds, base, mode, split, cfg);
  return evaluate_zsl(state, ds, base, mode, split, cfg);
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const Dataset& ds, const BaseVectors& base, EvalMode mode,
                                const std::string& split, const std::vector<std::string>& only,
                                std::function<void(std::string_view)> log) {
  if (ds.kind != "zsl") fail(ErrorKind::InvalidArgument, "the ablation ladder needs a zsl dataset");
  for (const auto& name : only) {
    if (std::find(kAblationScenarios.begin(), kAblationScenarios.end(), name) == kAblationScenarios.end()) {
      fail(ErrorKind::InvalidArgument, "unknown ablation scenario '" + name + "'");
    }
  }
  const TrainingView view = training_view(ds, base);
  auto scoped = [&](std::string_view scenario) -> std::function<void(std::string_view)> {
    if (!log) return {};
    return [&log, tag = std::string(scenario)](std::string_view line) { log(tag + ": " + std::string(line)); };
  };

  std::vector<AblationRow> rows;
  for (std::string_view name : kAblationScenarios) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    RunConfig c = cfg;
    TrainState state;
    state.seed = cfg.seed;
    if (name == "cycle") {
      c.trainer.use_gan = false;
      state = train_transductive_once(view.seen, view.unseen, c, {}, scoped(name));
    } else if (name == "gan") {
      c.trainer.use_cycle = false;
      c.trainer.lambda_c_grid = {0.0};
      state = train_transductive_once(view.seen, view.unseen, c, {}, scoped(name));
    } else if (name == "cgan") {
      state = train_transductive_once(view.seen, view.unseen, c, {}, scoped(name));
    } else if (name == "sup") {
      c.trainer.transductive = false;
      state = train_full(view.seen, view.unseen, c, {}, scoped(name));
    } else if (name == "full") {
      state = train_full(view.seen, view.unseen, c, {}, scoped(name));
    }
    EvalReport report = evaluate(state, ds, base, mode, split, cfg.eval).front();
    rows.push_back(AblationRow{std::string(name), std::move(state), std::move(report)});
  }
  return rows;
}

json ablation_to_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = report_to_json(r.report);
    j["scenario"] = r.scenario;
    j["steps"] = r.state.history.size();
    out.push_back(std::move(j));
  }
  return {{"schema_version", kReportSchemaVersion}, {"rows", std::move(out)}};
}

std::vector<TrajectoryPoint> export_trajectory(const TrainState& state, const Dataset& ds, const BaseVectors& base,
                                               std::size_t n_classes, Rng rng) {
  if (ds.kind != "zsl") fail(ErrorKind::InvalidArgument, "trajectory export needs a zsl dataset");
  if (n_classes == 0) fail(ErrorKind::InvalidArgument, "trajectory export needs at least one class");
  struct Snapshot {
    std::size_t step;
    std::string kind;
    std::size_t image_len, label_len;
  };
  std::vector<Snapshot> snaps{{0, "init", 0, 0}};
  for (const auto& r : state.history) {
    if (!r.accepted) continue;
    snaps.push_back({r.step, std::string(step_kind_name(r.kind)), r.image_stack_len, r.label_stack_len});
  }
  if (snaps.size() < 2) fail(ErrorKind::EmptySplit, "trajectory export needs at least one accepted step");

  std::vector<std::size_t> classes(ds.unseen_labels.size());
  for (std::size_t i = 0; i < classes.size(); ++i) classes[i] = i;
  rng.shuffle(classes);
  if (classes.size() > n_classes) classes.resize(n_classes);
  std::sort(classes.begin(), classes.end());

  std::unordered_map<std::int64_t, std::vector<const Vec*>> members;
  for (const auto& img : ds.unseen_images) {
    auto it = ds.evaluation_only.unseen_alignment.find(img);
    if (it != ds.evaluation_only.unseen_alignment.end()) members[it->second].push_back(&base.images.at(img));
  }

  struct Raw {
    std::size_t snap;
    std::int64_t class_id;
    bool is_label;
    Vec v;
  };
  std::vector<Raw> raw;
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    const MappingStack images = state.image_stack.prefix(snaps[s].image_len);
    const MappingStack labels = state.label_stack.prefix(snaps[s].label_len);
    for (std::size_t c : classes) {
      const auto id = ds.unseen_labels[c].id;
      raw.push_back({s, id, true, labels.apply(base.unseen_labels[c])});
      const auto& imgs = members[id];
      if (imgs.empty()) continue;
      Vec centroid = Vec::Zero(imgs.front()->size());
      for (const Vec* v : imgs) centroid += images.apply(*v);
      raw.push_back({s, id, false, centroid / static_cast<double>(imgs.size())});
    }
  }
  std::vector<Vec> rows;
  rows.reserve(raw.size());
  for (const auto& r : raw) rows.push_back(r.v);
  const Pca pca = pca_fit(rows, std::min<std::size_t>(2, std::min(rows.size(), static_cast<std::size_t>(rows[0].size()))));

  std::vector<TrajectoryPoint> out;
  for (const auto& r : raw) {
    const Vec xy = pca.project(r.v);
    out.push_back(TrajectoryPoint{snaps[r.snap].step, snaps[r.snap].kind, r.class_id, r.is_label, xy[0],
                                  xy.size() > 1 ? xy[1] : 0.0});
  }
  return out;
}

std::string format_trajectory(const std::vector<TrajectoryPoint>& points) {
  std::string out = "step\tkind\tclass_id\tpoint\tx\ty\n";
  char buf[64];
  for (const auto& p : points) {
    out += std::to_string(p.step) + "\t" + p.kind + "\t" + std::to_string(p.class_id) + "\t" +
           (p.is_label ? "label" : "centroid");
    std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g\n", p.x, p.y);
    out += buf;
  }
  return out;
}

}  // namespace cmgan
