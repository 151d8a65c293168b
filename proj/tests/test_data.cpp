#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "fixture.hpp"
#include "util.hpp"

#include "cmgan/data.hpp"
#include "cmgan/eval.hpp"

using namespace cmgan;
using testutil::Fixture;
using testutil::random_vec;
using testutil::vec;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("embedding file examples") {
  const EmbeddingTable t = parse_embeddings("#dim 2\ncat\t1.0 0.0\n");
  CHECK(t.dim() == 2);
  CHECK(t.size() == 1);
  CHECK(t.at("cat") == vec({1, 0}));

  CHECK_ERROR(parse_embeddings("#dim 2\ncat\t1 0\ndog\t1 2 3\n"), ErrorKind::ParseError);
  CHECK(error_message([] { parse_embeddings("#dim 2\ncat\t1 0\ndog\t1 2 3\n", "w.tsv"); }).find("w.tsv:3") !=
        std::string::npos);
  CHECK_ERROR(parse_embeddings("cat\t1 0\n"), ErrorKind::ParseError);
  CHECK_ERROR(parse_embeddings("#dim 2\ncat\t1 x\n"), ErrorKind::ParseError);
  CHECK_ERROR(parse_embeddings("#dim 2\ncat\t1 0\ncat\t0 1\n"), ErrorKind::DuplicateToken);
}

TEST_CASE("embeddings round trip to 17 significant digits") {
  Rng rng(3);
  EmbeddingTable t(5);
  for (int i = 0; i < 50; ++i) {
    Vec v = random_vec(rng, 5, std::pow(10.0, rng.normal() * 5.0));
    v[0] = i == 0 ? std::numeric_limits<double>::denorm_min() : v[0];
    v[1] = i == 1 ? 1.0 / 3.0 : v[1];
    t.add("tok" + std::to_string(i), v);
  }
  const EmbeddingTable back = parse_embeddings(format_embeddings(t));
  REQUIRE(back.size() == t.size());
  for (const auto& tok : t.tokens()) CHECK(back.at(tok) == t.at(tok));

  TempDir dir("cmgan_test_data_emb");
  save_embeddings(dir.path / "e.tsv", t);
  const EmbeddingTable from_disk = load_embeddings(dir.path / "e.tsv");
  CHECK(from_disk.tokens() == t.tokens());
  for (const auto& tok : t.tokens()) CHECK(from_disk.at(tok) == t.at(tok));
  CHECK_ERROR(load_embeddings(dir.path / "missing.tsv"), ErrorKind::Io);
}

TEST_CASE("probe files") {
  const std::vector<std::int64_t> ids{10, 20, 30};
  const auto probes = parse_probes("#dim 3\nimg1\t10:0.25 30:0.75\n", ids);
  REQUIRE(probes.size() == 1);
  CHECK(probes[0].image_id == "img1");
  CHECK(probes[0].probs == vec({0.25, 0, 0.75}));
  CHECK(parse_probes(format_probes(probes, ids), ids)[0].probs == probes[0].probs);
  CHECK_ERROR(parse_probes("#dim 3\nimg1\t10:0.25 30:0.7\n", ids), ErrorKind::ParseError);
  CHECK_ERROR(parse_probes("#dim 3\nimg1\t99:1.0\n", ids), ErrorKind::ParseError);
}

TEST_CASE("synthetic generation is reproducible and lossless") {
  SynthConfig cfg;
  cfg.n_seen = 5;
  cfg.n_unseen = 4;
  cfg.d_text = 6;
  cfg.d_vis = 7;
  cfg.images_per_class = 3;
  TempDir a("cmgan_test_data_a"), b("cmgan_test_data_b");
  save_dataset(a.path, gen_synthetic(cfg, 11));
  save_dataset(b.path, gen_synthetic(cfg, 11));
  for (const auto& entry : fs::directory_iterator(a.path)) {
    const auto name = entry.path().filename();
    CHECK(read_file(entry.path()) == read_file(b.path / name));
  }
  const Dataset loaded = load_dataset(a.path / "manifest.json");
  const Dataset fresh = gen_synthetic(cfg, 11);
  CHECK(loaded.seen_alignment == fresh.seen_alignment);
  CHECK(loaded.unseen_images == fresh.unseen_images);
  CHECK(loaded.evaluation_only.unseen_alignment == fresh.evaluation_only.unseen_alignment);
  REQUIRE(loaded.probes.size() == fresh.probes.size());
  for (std::size_t i = 0; i < fresh.probes.size(); ++i) CHECK(loaded.probes[i].probs == fresh.probes[i].probs);
  for (const auto& tok : fresh.words.tokens()) CHECK(loaded.words.at(tok) == fresh.words.at(tok));
  REQUIRE(loaded.visual);
  CHECK(loaded.visual->dim() == 7);

  TempDir c("cmgan_test_data_c");
  save_dataset(c.path, gen_synthetic(cfg, 12));
  CHECK(read_file(a.path / "probes.tsv") != read_file(c.path / "probes.tsv"));
}

TEST_CASE("noiseless isometric data has perfect visual correlation") {
  SynthConfig cfg;
  cfg.n_seen = 8;
  cfg.n_unseen = 8;
  cfg.d_text = 6;
  cfg.d_vis = 6;
  cfg.images_per_class = 4;
  cfg.transform = Transform::Orthogonal;
  cfg.noise_sigma = 0.0;
  SynthTruth truth;
  const Dataset ds = gen_synthetic(cfg, 2, &truth);
  const ClassVisualPairs pairs = class_visual_pairs(ds);
  CHECK(pairs.ids.size() == 16);
  for (const auto& [img, cls] : ds.seen_alignment) {
    const auto& seen_ids = ds.seen_ids();
    const auto c = static_cast<std::size_t>(std::find(seen_ids.begin(), seen_ids.end(), cls) - seen_ids.begin());
    CHECK(ds.visual->at(img) == truth.seen_prototypes[c]);
  }
  Rng rng(1);
  CHECK(std::abs(rho_vis(pairs.text, pairs.visual, rho_vis_default_pairs(pairs.text.size()), rng) - 100.0) <= 1e-9);
}

TEST_CASE("default synthetic benchmark makes conse informative") {
  RunConfig cfg;
  const Dataset ds = gen_synthetic(cfg.synth, 1);
  const BaseVectors base = compute_base(ds, cfg.conse);
  const auto reports = evaluate(TrainState{}, ds, base, EvalMode::Zsl, "all", cfg.eval);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].fh.at(1) > 100.0 / 30.0);
}

TEST_CASE("trainer views carry no unseen pairing") {
  Fixture f;
  const UnseenPool& pool = f.view.unseen;
  CHECK(pool.images.size() == f.ds.unseen_images.size());
  CHECK(pool.labels.size() == f.ds.unseen_labels.size());
  // the pool is two bare vector lists; nothing indexes one by the other
  static_assert(sizeof(UnseenPool) == 2 * sizeof(std::vector<Vec>));
}

TEST_CASE("dataset validation") {
  Fixture f;
  Dataset ds = f.ds;
  CHECK_NOTHROW(ds.validate());
  ds.unseen_labels.push_back(ds.seen_labels.front());
  CHECK_ERROR(ds.validate(), ErrorKind::ParseError);
  Dataset dangling = f.ds;
  dangling.seen_alignment.push_back({"ghost", f.ds.seen_labels.front().id});
  CHECK_ERROR(dangling.validate(), ErrorKind::ParseError);
}

TEST_CASE("checkpoint round trip") {
  Fixture f;
  f.cfg.trainer.max_steps = 6;
  f.cfg.trainer.improve_eps = -1e9;
  const Checkpoint fresh{f.cfg, TrainState{}};
  CHECK(checkpoint_from_json(checkpoint_to_json(fresh)).state == fresh.state);

  const Checkpoint trained{f.cfg, train_full(f.view.seen, f.view.unseen, f.cfg)};
  CHECK(trained.state.history.size() == 6);
  TempDir dir("cmgan_test_data_ck");
  const fs::path p = dir.path / "model.json";
  checkpoint_save(p, trained);
  const Checkpoint back = checkpoint_load(p);
  CHECK(back.state == trained.state);
  CHECK(to_json(back.config) == to_json(trained.config));
  CHECK(evaluate(back.state, f.ds, f.base, EvalMode::Gzsl, "all", f.cfg.eval) ==
        evaluate(trained.state, f.ds, f.base, EvalMode::Gzsl, "all", f.cfg.eval));

  json doc = read_json_file(p);
  doc["format_version"] = kCheckpointFormatVersion + 1;
  CHECK_ERROR(checkpoint_from_json(doc), ErrorKind::VersionMismatch);

  const std::string text = read_file(p);
  write_file_atomic(dir.path / "cut.json", text.substr(0, text.size() / 2));
  CHECK_ERROR(checkpoint_load(dir.path / "cut.json"), ErrorKind::ParseError);
  write_file_atomic(dir.path / "other.json", "{\"hello\": 1}");
  CHECK_ERROR(checkpoint_load(dir.path / "other.json"), ErrorKind::ParseError);
}

TEST_CASE("run directory lock is exclusive") {
  TempDir dir("cmgan_test_data_lock");
  {
    RunDirLock first(dir.path);
    CHECK_ERROR(RunDirLock(dir.path), ErrorKind::Io);
  }
  CHECK_NOTHROW(RunDirLock(dir.path));
}
