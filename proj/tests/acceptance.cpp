// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cmgan/data.hpp"
#include "cmgan/error.hpp"
#include "cmgan/eval.hpp"
#include "cmgan/gradcheck.hpp"
#include "cmgan/losses.hpp"
#include "cmgan/trainer.hpp"

using namespace cmgan;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (double x : xs) s += (s.empty() ? "" : " ") + fmt("%.2f", x);
  return s;
}

Mlp2 flat_disc(std::size_t dim) {
  Mlp2 d;
  d.w1 = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  d.b1 = Vec::Zero(static_cast<Eigen::Index>(dim));
  d.w2 = Matrix::Zero(1, static_cast<Eigen::Index>(dim));
  d.b2 = Vec::Zero(1);
  d.hidden_activation = Activation::LeakyRelu;
  d.output_activation = Activation::Sigmoid;
  return d;
}

std::vector<Vec> random_vecs(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(static_cast<Eigen::Index>(d));
    for (auto& x : v) x = rng.normal();
    out.push_back(v);
  }
  return out;
}

// Full sort of the candidates, ties ahead of the truth.
std::size_t oracle_rank(const std::vector<double>& scores, std::size_t truth) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if ((a == truth) != (b == truth)) return b == truth;
    return a < b;
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), truth) - order.begin()) + 1;
}

bool fh_monotone(const EvalReport& r) {
  double prev = -1.0;
  for (const auto& [k, v] : r.fh) {
    if (v < prev || v < 0.0 || v > 100.0) return false;
    prev = v;
  }
  return true;
}

// ------------------------------------------------------------------ shared runs

struct SeedRun {
  Dataset ds;
  BaseVectors base;
  std::map<std::string, AblationRow> rows;
};

std::vector<SeedRun>& benchmark_runs() {
  static std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> out;
    for (std::uint64_t seed : kSeeds) {
      RunConfig cfg;
      cfg.seed = seed;
      SeedRun r;
      r.ds = gen_synthetic(cfg.synth, seed);
      r.base = compute_base(r.ds, cfg.conse);
      for (auto& row : ablate(cfg, r.ds, r.base, EvalMode::Zsl, "all")) r.rows[row.scenario] = std::move(row);
      out.push_back(std::move(r));
    }
    return out;
  }();
  return runs;
}

double row_mfr(const SeedRun& r, const std::string& scenario) { return r.rows.at(scenario).report.mfr; }

// ------------------------------------------------------------------ criteria

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const LossGradReport r = loss_grad_check(42);
  const double secs = seconds_since(t0);
  const bool ok = r.max() < 1e-4 && r.points == 20 && secs < 5.0;
  return {ok, "max rel err " + fmt("%.2e", r.max()) + " (triplet " + fmt("%.1e", r.triplet) + ", gan_v " +
                  fmt("%.1e", r.gan_v) + ", gan_t " + fmt("%.1e", r.gan_t) + ", cycle " + fmt("%.1e", r.cycle) +
                  ", combined " + fmt("%.1e", r.combined) + ") over 20 points in " + fmt("%.2f", secs) + " s"};
}

Outcome closed_form_losses() {
  Rng rng(2);
  const std::size_t d = 8;
  const auto t = random_vecs(rng, 16, d), v = random_vecs(rng, 16, d);
  const Mlp2 d_t = flat_disc(d), d_v = flat_disc(d);
  // identity maps: zero-initialized residual mappers
  Mlp2 map_t = make_mlp2(Mlp2Spec{d, 2 * d, d, Activation::Tanh, Activation::Linear, true, 0.0}, rng);
  Mlp2 map_v = make_mlp2(Mlp2Spec{d, 2 * d, d, Activation::Tanh, Activation::Linear, true, 0.0}, rng);
  std::vector<Vec> tv, vt, t_cycle, v_cycle;
  for (const auto& x : v) tv.push_back(forward(map_t, x));
  for (const auto& x : t) vt.push_back(forward(map_v, x));
  for (const auto& x : vt) t_cycle.push_back(forward(map_t, x));
  for (const auto& x : tv) v_cycle.push_back(forward(map_v, x));
  const double gan_v = gan_value(d_t, t, tv);
  const double gan_t = gan_value(d_v, v, vt);
  const double cyc = cycle_loss(t, t_cycle, v, v_cycle).value;

  auto unit = [](double a) {
    Vec u(2);
    u << std::cos(a), std::sin(a);
    return u;
  };
  const double trip = triplet_loss(unit(0), unit(std::acos(0.9)), unit(-std::acos(0.2)), unit(std::acos(0.3)),
                                   unit(0), unit(-std::acos(0.4)), Margin{0.5})
                          .value;
  const bool ok = std::abs(gan_v + 1.386294) <= 1e-6 && std::abs(gan_v - 2.0 * std::log(0.5)) <= 1e-9 &&
                  std::abs(gan_t - 2.0 * std::log(0.5)) <= 1e-9 && std::abs(cyc) <= 1e-12 &&
                  std::abs(trip - 0.6) <= 1e-12;
  return {ok, "gan_v " + fmt("%.9f", gan_v) + ", gan_t " + fmt("%.9f", gan_t) + ", cycle " + fmt("%.1e", cyc) +
                  ", triplet " + fmt("%.15f", trip)};
}

Outcome ranking_oracle() {
  Rng rng(3);
  std::size_t mismatches = 0, non_monotone = 0, queries = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t k = 2 + rng.below(63);  // 2..64
    const std::size_t nq = 1 + rng.below(20);
    const std::size_t d = 2 + rng.below(8);
    const auto cands = random_vecs(rng, k, d);
    auto qs = random_vecs(rng, nq, d);
    std::vector<std::size_t> truth(nq);
    for (auto& x : truth) x = rng.below(k);
    if (inst % 5 == 0) qs[0] = cands[truth[0]];  // exact top hit
    std::vector<std::string> ids(nq, "q");
    const auto res = rank_queries(qs, ids, cands, truth);
    for (std::size_t q = 0; q < nq; ++q) {
      std::vector<double> scores;
      for (const auto& c : cands) scores.push_back(cosine(qs[q], c));
      if (res[q].first_relevant_rank != oracle_rank(scores, truth[q])) ++mismatches;
      ++queries;
    }
    if (!fh_monotone(make_report(res, EvalMode::Zsl, "all", "image_to_label", false))) ++non_monotone;
  }
  return {mismatches == 0 && non_monotone == 0, std::to_string(queries) + " queries on 200 instances, " +
                                                     std::to_string(mismatches) + " FR mismatches, " +
                                                     std::to_string(non_monotone) + " non-monotone FH reports"};
}

Outcome mfr_calibration() {
  Rng rng(4);
  const std::size_t k = 50;
  const auto cands = random_vecs(rng, k, 16);
  const auto qs = random_vecs(rng, 1000, 16);
  std::vector<std::size_t> truth(qs.size());
  for (auto& x : truth) x = rng.below(k);
  const std::vector<std::string> ids(qs.size(), "q");
  const double random_mfr = mfr(rank_queries(qs, ids, cands, truth));
  std::vector<std::size_t> self(k);
  for (std::size_t i = 0; i < k; ++i) self[i] = i;
  const double perfect = mfr(rank_queries(cands, std::vector<std::string>(k, "c"), cands, self));
  const bool ok = random_mfr >= 49.0 && random_mfr <= 53.0 && perfect == 2.0;
  return {ok, "random " + fmt("%.3f", random_mfr) + " (analytic 51.0), perfect " + fmt("%.6f", perfect)};
}

Outcome transductive_gain() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& runs = benchmark_runs();
  std::vector<double> init, sup, full;
  for (const auto& r : runs) {
    init.push_back(row_mfr(r, "init"));
    sup.push_back(row_mfr(r, "sup"));
    full.push_back(row_mfr(r, "full"));
  }
  const double mi = median(init), ms = median(sup), mf = median(full);
  const double gap_sup = (mi - ms) / mi, gap_full = (ms - mf) / ms;
  const double secs = seconds_since(t0);
  const bool ok = mf <= ms && ms <= mi && gap_sup >= 0.05 && gap_full >= 0.05 && secs < 600.0;
  return {ok, "median MFR init " + fmt("%.2f", mi) + ", sup " + fmt("%.2f", ms) + ", full " + fmt("%.2f", mf) +
                  " (gaps " + fmt("%.1f", 100 * gap_sup) + "% / " + fmt("%.1f", 100 * gap_full) +
                  "%); full per seed: " + join(full) + "; ladder for 5 seeds " + fmt("%.0f", secs) + " s"};
}

Outcome ablation_coherence() {
  std::vector<double> cgan, bound, gan, cycle;
  for (const auto& r : benchmark_runs()) {
    cgan.push_back(row_mfr(r, "cgan"));
    gan.push_back(row_mfr(r, "gan"));
    cycle.push_back(row_mfr(r, "cycle"));
    bound.push_back(std::min(gan.back(), cycle.back()));
  }
  const bool ok = median(cgan) <= median(bound);
  return {ok, "median MFR cgan " + fmt("%.2f", median(cgan)) + " vs median min(gan, cycle) " +
                  fmt("%.2f", median(bound)) + " (gan " + fmt("%.2f", median(gan)) + ", cycle " +
                  fmt("%.2f", median(cycle)) + ")"};
}

Outcome unsupervised_mode() {
  std::vector<double> before, after;
  for (std::uint64_t seed : kSeeds) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.synth.kind = "sentences";
    const Dataset ds = gen_synthetic(cfg.synth, seed);
    const BaseVectors base = compute_base(ds, cfg.conse);
    const TrainingView view = training_view(ds, base);
    const TrainState state = train_unsupervised(view.unseen, cfg);
    auto text_to_image = [&](const TrainState& s) {
      for (const auto& r : evaluate(s, ds, base, EvalMode::Zsl, "all", cfg.eval))
        if (r.direction == "sentence_to_image") return r.mfr;
      fail(ErrorKind::InvalidArgument, "no sentence_to_image report");
    };
    before.push_back(text_to_image(TrainState{}));
    after.push_back(text_to_image(state));
  }
  const bool ok = median(after) < median(before);
  return {ok, "median text->image MFR " + fmt("%.2f", median(after)) + " after the step vs " +
                  fmt("%.2f", median(before)) + " at CONSE init; per seed after: " + join(after)};
}

Outcome rho_vis_sanity() {
  SynthConfig synth;
  synth.transform = Transform::Orthogonal;
  synth.noise_sigma = 0.0;
  auto rho = [](const SynthConfig& c) {
    const ClassVisualPairs p = class_visual_pairs(gen_synthetic(c, 1));
    Rng rng(1);
    return rho_vis(p.text, p.visual, rho_vis_default_pairs(p.text.size()), rng);
  };
  const double clean = rho(synth);
  synth.noise_sigma = 0.5;
  const double noisy = rho(synth);
  const bool ok = std::abs(clean - 100.0) <= 0.5 && noisy < clean;
  return {ok, "noiseless " + fmt("%.4f", clean) + ", sigma 0.5 " + fmt("%.4f", noisy)};
}

bool same_bytes(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size() ||
        std::memcmp(a[i].data(), b[i].data(), sizeof(double) * static_cast<std::size_t>(a[i].size())) != 0)
      return false;
  return true;
}

Outcome retention_invariants() {
  RunConfig cfg;
  cfg.seed = 1;
  cfg.trainer.improve_eps = -1e9;  // run every step so both kinds recur
  const Dataset ds = gen_synthetic(cfg.synth, cfg.seed);
  const BaseVectors base = compute_base(ds, cfg.conse);
  const TrainingView view = training_view(ds, base);

  std::vector<Vec> img0, lab0;
  std::size_t frozen_steps = 0, frozen_bad = 0;
  StepHooks hooks;
  hooks.frozen_begin = [&](const std::vector<Vec>& i, const std::vector<Vec>& l) {
    img0 = i;
    lab0 = l;
  };
  hooks.frozen_end = [&](const std::vector<Vec>& i, const std::vector<Vec>& l) {
    ++frozen_steps;
    if (!same_bytes(img0, i) || !same_bytes(lab0, l)) ++frozen_bad;
  };
  const TrainState s = train_full(view.seen, view.unseen, cfg, hooks);

  std::size_t stack_bad = 0, prev_img = 0, prev_lab = 0;
  for (const auto& r : s.history) {
    if (r.kind == StepKind::Supervised && (r.label_stack_len != prev_lab || r.image_stack_len != prev_img + 1))
      ++stack_bad;
    if (r.kind == StepKind::Transductive && (r.image_stack_len != prev_img || r.label_stack_len != prev_lab + 1))
      ++stack_bad;
    prev_img = r.image_stack_len;
    prev_lab = r.label_stack_len;
  }

  const auto pts = export_trajectory(s, ds, base, 5, Rng(cfg.seed).split(50));
  std::map<std::tuple<std::size_t, std::int64_t, bool>, std::pair<double, double>> at;
  for (const auto& p : pts) at[{p.step, p.class_id, p.is_label}] = {p.x, p.y};
  std::size_t traj_bad = 0;
  double frozen_side = 0.0, moving_min = 1e300;
  for (const auto& r : s.history) {
    const std::size_t prev = r.step - 1;
    double label_delta = 0.0, centroid_delta = 0.0;
    for (const auto& [key, xy] : at) {
      const auto& [step, id, is_label] = key;
      if (step != r.step) continue;
      const auto& before = at.at({prev, id, is_label});
      const double d = std::hypot(xy.first - before.first, xy.second - before.second);
      (is_label ? label_delta : centroid_delta) = std::max(is_label ? label_delta : centroid_delta, d);
    }
    const bool sup = r.kind == StepKind::Supervised;
    const double still = sup ? label_delta : centroid_delta, moved = sup ? centroid_delta : label_delta;
    frozen_side = std::max(frozen_side, still);
    moving_min = std::min(moving_min, moved);
    if (still >= 1e-9 || moved <= 1e-9) ++traj_bad;
  }
  const bool ok = s.history.size() == cfg.trainer.max_steps && stack_bad == 0 && frozen_steps == s.history.size() &&
                  frozen_bad == 0 && traj_bad == 0;
  return {ok, std::to_string(s.history.size()) + " steps, " + std::to_string(stack_bad) + " stack violations, " +
                  std::to_string(frozen_bad) + "/" + std::to_string(frozen_steps) +
                  " unstable frozen snapshots; trajectory max frozen-side delta " + fmt("%.1e", frozen_side) +
                  ", min moving-side delta " + fmt("%.2e", moving_min)};
}

Outcome determinism_persistence() {
  const auto dir = fs::temp_directory_path() / "cmgan_acceptance";
  fs::remove_all(dir);
  RunConfig cfg;
  cfg.seed = 1;
  save_dataset(dir / "a", gen_synthetic(cfg.synth, cfg.seed));
  save_dataset(dir / "b", gen_synthetic(cfg.synth, cfg.seed));
  bool data_same = true;
  for (const auto& e : fs::directory_iterator(dir / "a"))
    data_same = data_same && read_file(e.path()) == read_file(dir / "b" / e.path().filename());

  // train twice from the files written above; the ablation ladder trained a third copy
  const Dataset ds = load_dataset(dir / "a" / "manifest.json");
  const BaseVectors base = compute_base(ds, cfg.conse);
  const TrainingView view = training_view(ds, base);
  const Checkpoint first{cfg, train_full(view.seen, view.unseen, cfg)};
  const Checkpoint second{cfg, train_full(view.seen, view.unseen, cfg)};
  checkpoint_save(dir / "first.json", first);
  checkpoint_save(dir / "second.json", second);
  const bool ck_same = read_file(dir / "first.json") == read_file(dir / "second.json");
  const bool ladder_same = benchmark_runs()[0].rows.at("full").state == first.state;

  EvalConfig ec;
  auto dump_reports = [&](const TrainState& s) {
    std::string out;
    for (EvalMode m : {EvalMode::Zsl, EvalMode::Gzsl})
      for (const auto& r : evaluate(s, ds, base, m, "all", ec)) out += report_to_json(r).dump() + "\n";
    return out;
  };
  const Checkpoint back = checkpoint_load(dir / "first.json");
  const std::string reports = dump_reports(first.state);
  const bool reports_same = reports == dump_reports(second.state);
  const bool round_trip = back.state == first.state && dump_reports(back.state) == reports;
  fs::remove_all(dir);
  const bool ok = data_same && ck_same && ladder_same && reports_same && round_trip;
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  return {ok, std::string("dataset files identical ") + yn(data_same) + ", checkpoints identical " + yn(ck_same) +
                  ", ladder run identical " + yn(ladder_same) + ", reports identical " + yn(reports_same) +
                  ", round trip identical " + yn(round_trip)};
}

Outcome gzsl_protocol() {
  std::size_t count_bad = 0;
  std::vector<double> zsl50, gzsl50, zsl_printed, gzsl_printed;
  for (const auto& r : benchmark_runs()) {
    for (const auto& [name, row] : r.rows) {
      for (bool exact : {false, true}) {
        const EvalConfig ec{exact};
        const auto z = evaluate(row.state, r.ds, r.base, EvalMode::Zsl, "all", ec).front();
        const auto g = evaluate(row.state, r.ds, r.base, EvalMode::Gzsl, "all", ec).front();
        if (g.candidate_count != z.candidate_count + r.ds.seen_labels.size()) ++count_bad;
        if (name != "full") continue;
        (exact ? zsl50 : zsl_printed).push_back(z.mfr);
        (exact ? gzsl50 : gzsl_printed).push_back(g.mfr);
      }
    }
  }
  const bool ok = count_bad == 0 && median(gzsl50) >= median(zsl50);
  return {ok, "candidate-count violations " + std::to_string(count_bad) + "; full model median MFR exact50 GZSL " +
                  fmt("%.2f", median(gzsl50)) + " vs ZSL " + fmt("%.2f", median(zsl50)) + "; printed GZSL " +
                  fmt("%.2f", median(gzsl_printed)) + " vs ZSL " + fmt("%.2f", median(zsl_printed))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"closed-form loss values", closed_form_losses},
      {"ranking oracle equivalence", ranking_oracle},
      {"MFR calibration", mfr_calibration},
      {"synthetic transductive gain", transductive_gain},
      {"ablation coherence", ablation_coherence},
      {"unsupervised mode", unsupervised_mode},
      {"rho_vis sanity", rho_vis_sanity},
      {"retention/composition invariants", retention_invariants},
      {"determinism and persistence", determinism_persistence},
      {"G-ZSL protocol", gzsl_protocol},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s - %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
