#pragma once

// Dataset files, the synthetic benchmark generator and checkpoints.
//
// A dataset directory holds manifest.json plus the TSV files it names:
//   words.tsv    "#dim N" then "token<TAB>v1 v2 ..."
//   probes.tsv   "#dim n_seen" then "image_id<TAB>class_id:prob ..." (sparse)
//   visual.tsv   optional raw visual features, same layout as words.tsv

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmgan/config.hpp"
#include "cmgan/embeddings.hpp"
#include "cmgan/trainer.hpp"

namespace cmgan {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
/// Text form of a table; save_embeddings writes exactly this.
std::string format_embeddings(const EmbeddingTable& table);
EmbeddingTable parse_embeddings(const std::string& text, const std::string& source = "<memory>");

/// Probes keyed by seen-class id; `seen_ids` gives the probe vector order.
std::vector<ClassProbe> parse_probes(const std::string& text, const std::vector<std::int64_t>& seen_ids,
                                     const std::string& source = "<memory>");
std::string format_probes(const std::vector<ClassProbe>& probes, const std::vector<std::int64_t>& seen_ids);

struct Sentence {
  std::string id;
  std::vector<std::string> words;
};

/// Pairings used only to score retrieval. Nothing handed to the trainer is
/// derived from this.
struct EvaluationOnly {
  std::map<std::string, std::int64_t> unseen_alignment;     // image id -> unseen label id
  std::map<std::string, std::string> sentence_image;        // sentence id -> image id
};

struct Dataset {
  std::string kind = "zsl";  // "zsl" or "sentences"
  EmbeddingTable words;
  std::optional<EmbeddingTable> visual;
  std::vector<ClassLabel> seen_labels;
  std::vector<ClassLabel> unseen_labels;
  std::vector<ClassProbe> probes;
  std::vector<std::pair<std::string, std::int64_t>> seen_alignment;  // image id -> seen label id
  std::vector<std::string> unseen_images;
  std::vector<Sentence> sentences;
  EvaluationOnly evaluation_only;

  std::vector<std::int64_t> seen_ids() const;
  /// Throws on dangling ids, overlapping splits or missing probes.
  void validate() const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);
/// Writes manifest.json, words.tsv, probes.tsv and visual.tsv (if present).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);

/// Base representations: T_0 for labels and sentences, V_0 (CONSE) for images.
struct BaseVectors {
  std::vector<Vec> seen_labels;
  std::vector<Vec> unseen_labels;
  std::unordered_map<std::string, Vec> images;
  std::vector<Vec> sentences;
};

BaseVectors compute_base(const Dataset& ds, const ConseConfig& conse);

/// What the trainer may see. Unseen images and unseen labels (or sentences)
/// come as two unrelated pools.
struct TrainingView {
  SeenData seen;
  UnseenPool unseen;
};

TrainingView training_view(const Dataset& ds, const BaseVectors& base);

/// Label vectors next to the mean raw visual feature of each class's
/// images, for every class with aligned images (seen alignment plus the
/// evaluation-only unseen alignment). Needs visual features.
struct ClassVisualPairs {
  std::vector<std::int64_t> ids;
  std::vector<Vec> text;
  std::vector<Vec> visual;
};

ClassVisualPairs class_visual_pairs(const Dataset& ds);

/// Hidden ground truth of a generated dataset, kept for diagnostics.
struct SynthTruth {
  std::vector<Vec> seen_prototypes;    // in the visual space
  std::vector<Vec> unseen_prototypes;
};

Dataset gen_synthetic(const SynthConfig& cfg, std::uint64_t seed, SynthTruth* truth = nullptr);

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

json checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const json& doc);
void checkpoint_save(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint checkpoint_load(const std::filesystem::path& path);

json mlp_to_json(const Mlp2& net);
Mlp2 mlp_from_json(const json& doc);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

/// Exclusive advisory lock on <dir>/.lock for the lifetime of the object.
class RunDirLock {
 public:
  explicit RunDirLock(const std::filesystem::path& dir);
  ~RunDirLock();
  RunDirLock(const RunDirLock&) = delete;
  RunDirLock& operator=(const RunDirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace cmgan
