#include "cmgan/data.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cmgan/error.hpp"

namespace cmgan {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- io helpers

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::Io, "read failed for '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::Io, "cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) fail(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot rename onto '" + path.string() + "': " + ec.message());
}

json read_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(ErrorKind::ParseError, "'" + path.string() + "' is not valid JSON");
  return doc;
}

RunDirLock::RunDirLock(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::string lock = (dir / ".lock").string();
  fd_ = ::open(lock.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) fail(ErrorKind::Io, "cannot open lock file '" + lock + "'");
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    fail(ErrorKind::Io, "run directory '" + dir.string() + "' is locked by another process");
  }
}

RunDirLock::~RunDirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

namespace {

std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) fail(ErrorKind::InvalidArgument, "cannot format a number");
  return std::string(buf, end);
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size() && std::isfinite(out);
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
  fail(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const std::size_t j = s.find(' ', i);
    const std::size_t end = j == std::string_view::npos ? s.size() : j;
    if (end > i) out.push_back(s.substr(i, end - i));
    i = end;
  }
  return out;
}

// Iterates lines, stripping '\r' and reporting 1-based line numbers.
template <typename Fn>
void for_each_line(const std::string& text, Fn fn) {
  std::size_t start = 0, line = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view l(text.data() + start, end - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    fn(++line, l);
    start = end + 1;
  }
}

std::size_t parse_dim_header(std::string_view l, const std::string& source, std::size_t line) {
  constexpr std::string_view tag = "#dim ";
  std::size_t dim = 0;
  if (l.substr(0, tag.size()) != tag || !parse_int(l.substr(tag.size()), dim) || dim == 0) {
    parse_fail(source, line, "expected a '#dim N' header");
  }
  return dim;
}

}  // namespace

// ---------------------------------------------------------------- embeddings

std::string format_embeddings(const EmbeddingTable& table) {
  std::string out = "#dim " + std::to_string(table.dim()) + "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += table.tokens()[i];
    out += '\t';
    const Vec& v = table.vector(i);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (k) out += ' ';
      out += format_double(v[k]);
    }
    out += '\n';
  }
  return out;
}

EmbeddingTable parse_embeddings(const std::string& text, const std::string& source) {
  std::optional<EmbeddingTable> table;
  for_each_line(text, [&](std::size_t line, std::string_view l) {
    if (!table) {
      table.emplace(parse_dim_header(l, source, line));
      return;
    }
    if (l.empty() || l.front() == '#') return;
    const auto tab = l.find('\t');
    if (tab == std::string_view::npos || tab == 0) parse_fail(source, line, "expected 'token<TAB>values'");
    const std::string token(l.substr(0, tab));
    const auto fields = split_ws(l.substr(tab + 1));
    if (fields.size() != table->dim()) {
      parse_fail(source, line,
                 "expected " + std::to_string(table->dim()) + " values, found " + std::to_string(fields.size()));
    }
    Vec v(static_cast<Eigen::Index>(fields.size()));
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (!parse_double(fields[k], v[static_cast<Eigen::Index>(k)])) {
        parse_fail(source, line, "bad number '" + std::string(fields[k]) + "'");
      }
    }
    if (table->contains(token)) fail(ErrorKind::DuplicateToken, source + ":" + std::to_string(line) + ": " + token);
    try {
      table->add(token, std::move(v));
    } catch (const Error& e) {
      parse_fail(source, line, e.what());
    }
  });
  if (!table) parse_fail(source, 1, "empty file");
  return std::move(*table);
}

EmbeddingTable load_embeddings(const fs::path& path) { return parse_embeddings(read_file(path), path.string()); }

void save_embeddings(const fs::path& path, const EmbeddingTable& table) {
  write_file_atomic(path, format_embeddings(table));
}

// ---------------------------------------------------------------- probes

std::vector<ClassProbe> parse_probes(const std::string& text, const std::vector<std::int64_t>& seen_ids,
                                     const std::string& source) {
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < seen_ids.size(); ++i) index[seen_ids[i]] = i;
  std::vector<ClassProbe> out;
  std::set<std::string> ids;
  bool header = false;
  for_each_line(text, [&](std::size_t line, std::string_view l) {
    if (!header) {
      const std::size_t dim = parse_dim_header(l, source, line);
      if (dim != seen_ids.size()) {
        parse_fail(source, line,
                   "probe dim " + std::to_string(dim) + " differs from " + std::to_string(seen_ids.size()) +
                       " seen classes");
      }
      header = true;
      return;
    }
    if (l.empty() || l.front() == '#') return;
    const auto tab = l.find('\t');
    if (tab == std::string_view::npos || tab == 0) parse_fail(source, line, "expected 'image_id<TAB>pairs'");
    ClassProbe p;
    p.image_id = std::string(l.substr(0, tab));
    if (!ids.insert(p.image_id).second) fail(ErrorKind::DuplicateToken, source + ": image " + p.image_id);
    p.probs = Vec::Zero(static_cast<Eigen::Index>(seen_ids.size()));
    double total = 0.0;
    for (auto field : split_ws(l.substr(tab + 1))) {
      const auto colon = field.find(':');
      std::int64_t cls = 0;
      double prob = 0.0;
      if (colon == std::string_view::npos || !parse_int(field.substr(0, colon), cls) ||
          !parse_double(field.substr(colon + 1), prob) || prob < 0.0) {
        parse_fail(source, line, "bad pair '" + std::string(field) + "'");
      }
      auto it = index.find(cls);
      if (it == index.end()) parse_fail(source, line, "class " + std::to_string(cls) + " is not a seen class");
      p.probs[static_cast<Eigen::Index>(it->second)] += prob;
      total += prob;
    }
    if (std::abs(total - 1.0) > 1e-6) parse_fail(source, line, "probabilities sum to " + format_double(total));
    out.push_back(std::move(p));
  });
  if (!header) parse_fail(source, 1, "empty file");
  return out;
}

std::string format_probes(const std::vector<ClassProbe>& probes, const std::vector<std::int64_t>& seen_ids) {
  std::string out = "#dim " + std::to_string(seen_ids.size()) + "\n";
  for (const auto& p : probes) {
    if (static_cast<std::size_t>(p.probs.size()) != seen_ids.size()) {
      fail(ErrorKind::DimMismatch, "probe for " + p.image_id + " has the wrong length");
    }
    out += p.image_id;
    out += '\t';
    bool first = true;
    for (std::size_t i = 0; i < seen_ids.size(); ++i) {
      const double q = p.probs[static_cast<Eigen::Index>(i)];
      if (q == 0.0) continue;
      if (!first) out += ' ';
      first = false;
      out += std::to_string(seen_ids[i]) + ":" + format_double(q);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- manifest

namespace {

json label_json(const ClassLabel& l) { return {{"id", l.id}, {"tokens", l.tokens}, {"tags", l.tags}}; }

template <typename T>
T field(const json& doc, const char* key, const std::string& where) {
  auto it = doc.find(key);
  if (it == doc.end()) fail(ErrorKind::ParseError, where + ": missing '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::ParseError, where + ": '" + key + "' has the wrong type");
  }
}

std::vector<ClassLabel> labels_from_json(const json& doc, const char* key, Split split) {
  std::vector<ClassLabel> out;
  const auto arr = field<json>(doc, key, "manifest");
  if (!arr.is_array()) fail(ErrorKind::ParseError, std::string("manifest: '") + key + "' must be an array");
  for (const auto& j : arr) {
    ClassLabel l;
    l.id = field<std::int64_t>(j, "id", std::string("manifest ") + key);
    l.tokens = field<std::vector<std::string>>(j, "tokens", std::string("manifest ") + key);
    if (j.contains("tags")) l.tags = field<std::vector<std::string>>(j, "tags", std::string("manifest ") + key);
    l.split = split;
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace

std::vector<std::int64_t> Dataset::seen_ids() const {
  std::vector<std::int64_t> ids;
  ids.reserve(seen_labels.size());
  for (const auto& l : seen_labels) ids.push_back(l.id);
  return ids;
}

void Dataset::validate() const {
  if (kind != "zsl" && kind != "sentences") fail(ErrorKind::ParseError, "unknown dataset kind '" + kind + "'");
  if (seen_labels.empty()) fail(ErrorKind::EmptySplit, "dataset has no seen labels");
  std::set<std::int64_t> seen, unseen;
  for (const auto& l : seen_labels) {
    if (l.tokens.empty()) fail(ErrorKind::ParseError, "label " + std::to_string(l.id) + " has no tokens");
    if (!seen.insert(l.id).second) fail(ErrorKind::ParseError, "duplicate label id " + std::to_string(l.id));
  }
  for (const auto& l : unseen_labels) {
    if (l.tokens.empty()) fail(ErrorKind::ParseError, "label " + std::to_string(l.id) + " has no tokens");
    if (seen.count(l.id) || !unseen.insert(l.id).second) {
      fail(ErrorKind::ParseError, "label id " + std::to_string(l.id) + " is not unique across splits");
    }
  }
  std::set<std::string> probe_ids;
  for (const auto& p : probes) probe_ids.insert(p.image_id);
  std::set<std::string> images;
  for (const auto& [img, cls] : seen_alignment) {
    if (!probe_ids.count(img)) fail(ErrorKind::ParseError, "seen image " + img + " has no probe");
    if (!seen.count(cls)) fail(ErrorKind::ParseError, "seen image " + img + " points at a non-seen class");
    if (!images.insert(img).second) fail(ErrorKind::ParseError, "image " + img + " listed twice");
  }
  for (const auto& img : unseen_images) {
    if (!probe_ids.count(img)) fail(ErrorKind::ParseError, "unseen image " + img + " has no probe");
    if (!images.insert(img).second) fail(ErrorKind::ParseError, "image " + img + " listed twice");
  }
  for (const auto& [img, cls] : evaluation_only.unseen_alignment) {
    if (!unseen.count(cls)) fail(ErrorKind::ParseError, "unseen alignment of " + img + " points at a non-unseen class");
    if (std::find(unseen_images.begin(), unseen_images.end(), img) == unseen_images.end()) {
      fail(ErrorKind::ParseError, "unseen alignment names unknown image " + img);
    }
  }
  std::set<std::string> sentence_ids;
  for (const auto& s : sentences) {
    if (!sentence_ids.insert(s.id).second) fail(ErrorKind::ParseError, "duplicate sentence id " + s.id);
  }
  for (const auto& [sid, img] : evaluation_only.sentence_image) {
    if (!sentence_ids.count(sid)) fail(ErrorKind::ParseError, "sentence alignment names unknown sentence " + sid);
    if (std::find(unseen_images.begin(), unseen_images.end(), img) == unseen_images.end()) {
      fail(ErrorKind::ParseError, "sentence alignment names unknown image " + img);
    }
  }
}

Dataset load_dataset(const fs::path& manifest_path) {
  const json doc = read_json_file(manifest_path);
  if (!doc.is_object()) fail(ErrorKind::ParseError, "manifest must be a JSON object");
  const int version = field<int>(doc, "schema_version", "manifest");
  if (version != kManifestSchemaVersion) {
    fail(ErrorKind::VersionMismatch, "manifest schema " + std::to_string(version) + ", expected " +
                                         std::to_string(kManifestSchemaVersion));
  }
  const fs::path dir = manifest_path.parent_path();
  Dataset ds;
  ds.kind = field<std::string>(doc, "kind", "manifest");
  ds.words = load_embeddings(dir / field<std::string>(doc, "embedding_file", "manifest"));
  if (doc.contains("visual_file")) ds.visual = load_embeddings(dir / field<std::string>(doc, "visual_file", "manifest"));
  ds.seen_labels = labels_from_json(doc, "seen_labels", Split::Seen);
  ds.unseen_labels = labels_from_json(doc, "unseen_labels", Split::Unseen);
  const fs::path probe_path = dir / field<std::string>(doc, "probe_file", "manifest");
  ds.probes = parse_probes(read_file(probe_path), ds.seen_ids(), probe_path.string());
  for (const auto& j : field<json>(doc, "seen_alignment", "manifest")) {
    ds.seen_alignment.emplace_back(field<std::string>(j, "image", "seen_alignment"),
                                   field<std::int64_t>(j, "label", "seen_alignment"));
  }
  ds.unseen_images = field<std::vector<std::string>>(doc, "unseen_images", "manifest");
  if (doc.contains("sentences")) {
    for (const auto& j : field<json>(doc, "sentences", "manifest")) {
      ds.sentences.push_back(
          Sentence{field<std::string>(j, "id", "sentences"), field<std::vector<std::string>>(j, "words", "sentences")});
    }
  }
  if (doc.contains("evaluation_only")) {
    const json& ev = doc["evaluation_only"];
    if (ev.contains("unseen_alignment")) {
      for (const auto& j : ev["unseen_alignment"]) {
        ds.evaluation_only.unseen_alignment[field<std::string>(j, "image", "unseen_alignment")] =
            field<std::int64_t>(j, "label", "unseen_alignment");
      }
    }
    if (ev.contains("sentence_image")) {
      for (const auto& j : ev["sentence_image"]) {
        ds.evaluation_only.sentence_image[field<std::string>(j, "sentence", "sentence_image")] =
            field<std::string>(j, "image", "sentence_image");
      }
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  ds.validate();
  json doc;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["kind"] = ds.kind;
  doc["embedding_file"] = "words.tsv";
  doc["probe_file"] = "probes.tsv";
  if (ds.visual) doc["visual_file"] = "visual.tsv";
  doc["seen_labels"] = json::array();
  for (const auto& l : ds.seen_labels) doc["seen_labels"].push_back(label_json(l));
  doc["unseen_labels"] = json::array();
  for (const auto& l : ds.unseen_labels) doc["unseen_labels"].push_back(label_json(l));
  doc["seen_alignment"] = json::array();
  for (const auto& [img, cls] : ds.seen_alignment) doc["seen_alignment"].push_back({{"image", img}, {"label", cls}});
  doc["unseen_images"] = ds.unseen_images;
  doc["sentences"] = json::array();
  for (const auto& s : ds.sentences) doc["sentences"].push_back({{"id", s.id}, {"words", s.words}});
  json ev = json::object();
  ev["unseen_alignment"] = json::array();
  for (const auto& [img, cls] : ds.evaluation_only.unseen_alignment) {
    ev["unseen_alignment"].push_back({{"image", img}, {"label", cls}});
  }
  ev["sentence_image"] = json::array();
  for (const auto& [sid, img] : ds.evaluation_only.sentence_image) {
    ev["sentence_image"].push_back({{"sentence", sid}, {"image", img}});
  }
  doc["evaluation_only"] = std::move(ev);

  save_embeddings(dir / "words.tsv", ds.words);
  write_file_atomic(dir / "probes.tsv", format_probes(ds.probes, ds.seen_ids()));
  if (ds.visual) save_embeddings(dir / "visual.tsv", *ds.visual);
  write_file_atomic(dir / "manifest.json", doc.dump(2) + "\n");
}

// ---------------------------------------------------------------- views

BaseVectors compute_base(const Dataset& ds, const ConseConfig& conse) {
  BaseVectors b;
  for (const auto& l : ds.seen_labels) b.seen_labels.push_back(embed_label(ds.words, l));
  for (const auto& l : ds.unseen_labels) b.unseen_labels.push_back(embed_label(ds.words, l));
  if (conse.top_k == 0 || conse.top_k > ds.seen_labels.size()) {
    fail(ErrorKind::InvalidArgument, "conse.top_k must lie in [1, " + std::to_string(ds.seen_labels.size()) + "]");
  }
  const auto ids = ds.seen_ids();
  for (const auto& p : ds.probes) b.images.emplace(p.image_id, conse_embed(b.seen_labels, ids, p, conse));
  for (const auto& s : ds.sentences) b.sentences.push_back(embed_sentence(ds.words, s.words));
  return b;
}

TrainingView training_view(const Dataset& ds, const BaseVectors& base) {
  TrainingView v;
  std::unordered_map<std::int64_t, std::size_t> seen_index;
  for (std::size_t i = 0; i < ds.seen_labels.size(); ++i) seen_index[ds.seen_labels[i].id] = i;
  v.seen.labels = base.seen_labels;
  for (const auto& [img, cls] : ds.seen_alignment) {
    v.seen.images.push_back(base.images.at(img));
    v.seen.image_class.push_back(seen_index.at(cls));
  }
  for (const auto& img : ds.unseen_images) v.unseen.images.push_back(base.images.at(img));
  v.unseen.labels = ds.kind == "sentences" ? base.sentences : base.unseen_labels;
  return v;
}

ClassVisualPairs class_visual_pairs(const Dataset& ds) {
  if (!ds.visual) fail(ErrorKind::InvalidArgument, "dataset has no visual features");
  std::map<std::int64_t, std::pair<Vec, std::size_t>> sums;
  auto add = [&](const std::string& img, std::int64_t cls) {
    const Vec& x = ds.visual->at(img);
    auto [it, fresh] = sums.try_emplace(cls, Vec::Zero(x.size()), 0);
    it->second.first += x;
    ++it->second.second;
  };
  for (const auto& [img, cls] : ds.seen_alignment) add(img, cls);
  for (const auto& [img, cls] : ds.evaluation_only.unseen_alignment) add(img, cls);
  ClassVisualPairs out;
  for (const auto* labels : {&ds.seen_labels, &ds.unseen_labels}) {
    for (const auto& label : *labels) {
      const auto it = sums.find(label.id);
      if (it == sums.end()) continue;
      out.ids.push_back(label.id);
      out.text.push_back(embed_label(ds.words, label));
      out.visual.push_back(it->second.first / static_cast<double>(it->second.second));
    }
  }
  if (out.ids.size() < 2) fail(ErrorKind::EmptySplit, "fewer than two classes with visual features");
  return out;
}

// ---------------------------------------------------------------- synthetic data

namespace {

// Scale of the filler words that pad synthetic sentences around their
// concept word.
constexpr double kFillerScale = 0.5;

Vec random_unit(std::size_t d, Rng& rng) {
  Vec v(static_cast<Eigen::Index>(d));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  } while (v.norm() == 0.0);
  return v.normalized();
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  return m;
}

// Hidden map from the textual space to the visual space.
struct HiddenTransform {
  Transform kind = Transform::Mlp;
  Matrix a;  // d_vis x d_text
  Vec bias;
  Matrix w1;  // mlp only
  Vec b1;
  Matrix w2;
  double gain = 1.0;

  Vec operator()(const Vec& x) const {
    Vec y = a * x + bias;
    if (kind == Transform::Mlp) y += gain * (w2 * (w1 * x + b1).array().tanh().matrix());
    return y;
  }
};

HiddenTransform make_transform(const SynthConfig& cfg, Rng rng) {
  HiddenTransform t;
  t.kind = cfg.transform;
  const auto dt = cfg.d_text, dv = cfg.d_vis;
  t.bias = Vec::Zero(static_cast<Eigen::Index>(dv));
  switch (cfg.transform) {
    case Transform::Orthogonal: {
      if (dv < dt) fail(ErrorKind::InvalidArgument, "orthogonal transform needs d_vis >= d_text");
      Eigen::HouseholderQR<Matrix> qr(random_gaussian(dv, dt, 1.0, rng));
      t.a = qr.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(dv), static_cast<Eigen::Index>(dt));
      break;
    }
    case Transform::Affine:
      t.a = random_gaussian(dv, dt, 1.0 / std::sqrt(static_cast<double>(dt)), rng);
      for (Eigen::Index i = 0; i < t.bias.size(); ++i) t.bias[i] = 0.5 * rng.normal();
      break;
    case Transform::Mlp: {
      const std::size_t h = 2 * dt;
      t.a = random_gaussian(dv, dt, 1.0 / std::sqrt(static_cast<double>(dt)), rng);
      t.w1 = random_gaussian(h, dt, 2.0, rng);
      t.b1 = random_gaussian(h, 1, 0.5, rng).col(0);
      t.w2 = random_gaussian(dv, h, 1.0 / std::sqrt(static_cast<double>(h)), rng);
      t.gain = cfg.mlp_gain;
      break;
    }
  }
  return t;
}

Vec softmax_probe(const Vec& x, const std::vector<Vec>& protos, double temperature) {
  Vec logits(static_cast<Eigen::Index>(protos.size()));
  for (std::size_t i = 0; i < protos.size(); ++i) {
    logits[static_cast<Eigen::Index>(i)] = -(x - protos[i]).squaredNorm() / temperature;
  }
  const double m = logits.maxCoeff();
  Vec p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

std::string padded(const char* prefix, std::size_t i, std::size_t n) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(n).size());
  std::string digits = std::to_string(i);
  return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

void check_synth(const SynthConfig& c) {
  if (c.n_seen < 2 || c.n_unseen < 1 || c.d_text < 1 || c.d_vis < 1 || c.images_per_class < 1) {
    fail(ErrorKind::InvalidArgument, "synth needs n_seen >= 2 and positive counts");
  }
  if (!(c.noise_sigma >= 0.0) || !(c.probe_temperature > 0.0)) {
    fail(ErrorKind::InvalidArgument, "synth needs noise_sigma >= 0 and probe_temperature > 0");
  }
  if (c.kind == "sentences" && (c.min_words < 1 || c.max_words < c.min_words || c.n_sentences < 2)) {
    fail(ErrorKind::InvalidArgument, "synth sentences need 1 <= min_words <= max_words and n_sentences >= 2");
  }
}

}  // namespace

Dataset gen_synthetic(const SynthConfig& cfg, std::uint64_t seed, SynthTruth* truth) {
  check_synth(cfg);
  const Rng root(seed);
  Rng text_rng = root.split(1);
  Rng image_rng = root.split(3);
  Rng order_rng = root.split(4);
  Rng sentence_rng = root.split(5);
  const HiddenTransform f = make_transform(cfg, root.split(2));

  Dataset ds;
  ds.kind = cfg.kind;
  ds.words = EmbeddingTable(cfg.d_text);

  std::vector<Vec> seen_text, unseen_text;
  const char* unseen_prefix = cfg.kind == "sentences" ? "concept" : "unseen";
  for (std::size_t i = 0; i < cfg.n_seen; ++i) {
    seen_text.push_back(random_unit(cfg.d_text, text_rng));
    const std::string tok = padded("seen", i, cfg.n_seen);
    ds.words.add(tok, seen_text.back());
    ds.seen_labels.push_back(ClassLabel{static_cast<std::int64_t>(i), {tok}, Split::Seen, {}});
  }
  for (std::size_t i = 0; i < cfg.n_unseen; ++i) {
    unseen_text.push_back(random_unit(cfg.d_text, text_rng));
    const std::string tok = padded(unseen_prefix, i, cfg.n_unseen);
    ds.words.add(tok, unseen_text.back());
    ds.unseen_labels.push_back(ClassLabel{static_cast<std::int64_t>(cfg.n_seen + i), {tok}, Split::Unseen, {}});
  }

  // Unseen classes closest to the seen ones get the "2hop" tag, the closest
  // two thirds get "3hop".
  {
    std::vector<std::pair<double, std::size_t>> closeness;
    for (std::size_t u = 0; u < unseen_text.size(); ++u) {
      double best = -1.0;
      for (const auto& s : seen_text) best = std::max(best, cosine(unseen_text[u], s));
      closeness.emplace_back(-best, u);
    }
    std::sort(closeness.begin(), closeness.end());
    const std::size_t n = closeness.size();
    for (std::size_t r = 0; r < n; ++r) {
      auto& tags = ds.unseen_labels[closeness[r].second].tags;
      if (3 * r < n) tags.push_back("2hop");
      if (3 * r < 2 * n) tags.push_back("3hop");
    }
  }

  std::vector<Vec> seen_proto, unseen_proto;
  for (const auto& t : seen_text) seen_proto.push_back(f(t));
  for (const auto& t : unseen_text) unseen_proto.push_back(f(t));
  double mean_norm = 0.0;
  for (const auto& p : seen_proto) mean_norm += p.norm();
  for (const auto& p : unseen_proto) mean_norm += p.norm();
  mean_norm /= static_cast<double>(seen_proto.size() + unseen_proto.size());
  if (!(mean_norm > 0.0)) fail(ErrorKind::ZeroVector, "synthetic prototypes collapsed to zero");
  for (auto& p : seen_proto) p /= mean_norm;
  for (auto& p : unseen_proto) p /= mean_norm;
  if (truth) *truth = SynthTruth{seen_proto, unseen_proto};

  auto draw_image = [&](const Vec& proto) {
    Vec x = proto;
    if (cfg.noise_sigma > 0.0) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += cfg.noise_sigma * image_rng.normal();
    }
    return x;
  };

  struct RawImage {
    Vec x;
    bool seen;
    std::size_t cls;
  };
  std::vector<RawImage> raw;
  if (cfg.kind == "zsl") {
    for (std::size_t c = 0; c < cfg.n_seen; ++c)
      for (std::size_t k = 0; k < cfg.images_per_class; ++k) raw.push_back({draw_image(seen_proto[c]), true, c});
    for (std::size_t c = 0; c < cfg.n_unseen; ++c)
      for (std::size_t k = 0; k < cfg.images_per_class; ++k) raw.push_back({draw_image(unseen_proto[c]), false, c});
  } else {
    for (std::size_t k = 0; k < cfg.n_sentences; ++k) {
      const std::size_t c = image_rng.below(cfg.n_unseen);
      raw.push_back({draw_image(unseen_proto[c]), false, c});
    }
  }
  // image ids carry no class information
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  order_rng.shuffle(order);

  ds.visual = EmbeddingTable(cfg.d_vis);
  std::vector<std::string> raw_id(raw.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const RawImage& im = raw[order[pos]];
    const std::string id = padded("img", pos, raw.size());
    raw_id[order[pos]] = id;
    ds.probes.push_back(ClassProbe{id, softmax_probe(im.x, seen_proto, cfg.probe_temperature)});
    ds.visual->add(id, im.x);
    if (im.seen) {
      ds.seen_alignment.emplace_back(id, ds.seen_labels[im.cls].id);
    } else {
      ds.unseen_images.push_back(id);
      ds.evaluation_only.unseen_alignment[id] = ds.unseen_labels[im.cls].id;
    }
  }

  if (cfg.kind == "sentences") {
    std::vector<std::string> fillers;
    for (std::size_t w = 0; w < cfg.n_extra_words; ++w) {
      fillers.push_back(padded("word", w, cfg.n_extra_words));
      ds.words.add(fillers.back(), kFillerScale * random_unit(cfg.d_text, text_rng));
    }
    // one sentence per image, listed in an order unrelated to the images
    std::vector<std::size_t> sorder(raw.size());
    std::iota(sorder.begin(), sorder.end(), std::size_t{0});
    sentence_rng.shuffle(sorder);
    for (std::size_t pos = 0; pos < sorder.size(); ++pos) {
      const RawImage& im = raw[sorder[pos]];
      Sentence s{padded("sen", pos, sorder.size()), {ds.unseen_labels[im.cls].tokens.front()}};
      const std::size_t len = cfg.min_words + sentence_rng.below(cfg.max_words - cfg.min_words + 1);
      while (s.words.size() < len && !fillers.empty()) s.words.push_back(fillers[sentence_rng.below(fillers.size())]);
      sentence_rng.shuffle(s.words);
      ds.evaluation_only.sentence_image[s.id] = raw_id[sorder[pos]];
      ds.sentences.push_back(std::move(s));
    }
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------- checkpoints

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const char* what) {
  if (!j.is_array() || j.size() != rows) fail(ErrorKind::ParseError, std::string("checkpoint: bad shape for ") + what);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = j[r].get<std::vector<double>>();
    if (row.size() != cols) fail(ErrorKind::ParseError, std::string("checkpoint: bad shape for ") + what);
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return m;
}

Vec vec_from_json(const json& j, std::size_t n, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != n) fail(ErrorKind::ParseError, std::string("checkpoint: bad length for ") + what);
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json stack_json(const MappingStack& s) {
  json maps = json::array();
  for (const auto& m : s.maps) maps.push_back(mlp_to_json(m));
  return {{"base", s.base}, {"maps", std::move(maps)}};
}

MappingStack stack_from_json(const json& j) {
  MappingStack s;
  s.base = j.at("base").get<std::string>();
  for (const auto& m : j.at("maps")) s.maps.push_back(mlp_from_json(m));
  s.validate();
  return s;
}

std::string_view side_name(RetainSide s) { return s == RetainSide::Image ? "image" : "label"; }

}  // namespace

json mlp_to_json(const Mlp2& n) {
  return {{"input_dim", n.input_dim()},
          {"hidden_dim", n.hidden_dim()},
          {"output_dim", n.output_dim()},
          {"hidden_activation", activation_name(n.hidden_activation)},
          {"output_activation", activation_name(n.output_activation)},
          {"residual", n.residual},
          {"input_scale", n.input_scale},
          {"w1", matrix_json(n.w1)},
          {"b1", vec_json(n.b1)},
          {"w2", matrix_json(n.w2)},
          {"b2", vec_json(n.b2)}};
}

Mlp2 mlp_from_json(const json& j) {
  Mlp2 n;
  const auto in = j.at("input_dim").get<std::size_t>();
  const auto h = j.at("hidden_dim").get<std::size_t>();
  const auto out = j.at("output_dim").get<std::size_t>();
  n.hidden_activation = parse_activation(j.at("hidden_activation").get<std::string>());
  n.output_activation = parse_activation(j.at("output_activation").get<std::string>());
  n.residual = j.at("residual").get<bool>();
  n.input_scale = j.value("input_scale", 1.0);
  n.w1 = matrix_from_json(j.at("w1"), h, in, "w1");
  n.b1 = vec_from_json(j.at("b1"), h, "b1");
  n.w2 = matrix_from_json(j.at("w2"), out, h, "w2");
  n.b2 = vec_from_json(j.at("b2"), out, "b2");
  // an empty companion is stored as an all-zero-shape net
  if (in != 0 || h != 0 || out != 0) n.validate();
  return n;
}

json checkpoint_to_json(const Checkpoint& ck) {
  const TrainState& s = ck.state;
  json history = json::array();
  for (const auto& r : s.history) {
    json epochs = json::array();
    for (const auto& e : r.epochs) {
      epochs.push_back(
          {{"total", e.total}, {"triplet", e.triplet}, {"gan_v", e.gan_v}, {"gan_t", e.gan_t}, {"cycle", e.cycle}});
    }
    history.push_back({{"step", r.step},
                       {"kind", step_kind_name(r.kind)},
                       {"lambda_c", r.lambda_c ? json(*r.lambda_c) : json(nullptr)},
                       {"grid_validation", r.grid_validation},
                       {"validation", r.validation},
                       {"image_stack_len", r.image_stack_len},
                       {"label_stack_len", r.label_stack_len},
                       {"retained", side_name(r.retained)},
                       {"companion", mlp_to_json(r.companion)},
                       {"epochs", std::move(epochs)},
                       {"accepted", r.accepted}});
  }
  return {{"format_version", kCheckpointFormatVersion},
          {"rng_algorithm", Rng::kAlgorithm},
          {"config", to_json(ck.config)},
          {"state",
           {{"seed", s.seed},
            {"initial_validation", s.initial_validation},
            {"image_stack", stack_json(s.image_stack)},
            {"label_stack", stack_json(s.label_stack)},
            {"history", std::move(history)}}}};
}

Checkpoint checkpoint_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("format_version")) fail(ErrorKind::ParseError, "not a checkpoint document");
  const auto version = doc["format_version"];
  if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion) {
    fail(ErrorKind::VersionMismatch, "checkpoint format " + version.dump() + ", expected " +
                                         std::to_string(kCheckpointFormatVersion));
  }
  if (doc.value("rng_algorithm", std::string()) != Rng::kAlgorithm) {
    fail(ErrorKind::VersionMismatch, "checkpoint written with rng '" + doc.value("rng_algorithm", std::string()) + "'");
  }
  try {
    Checkpoint ck;
    ck.config = run_config_from_json(doc.at("config"));
    const json& s = doc.at("state");
    ck.state.seed = s.at("seed").get<std::uint64_t>();
    ck.state.initial_validation = s.at("initial_validation").get<double>();
    ck.state.image_stack = stack_from_json(s.at("image_stack"));
    ck.state.label_stack = stack_from_json(s.at("label_stack"));
    for (const auto& j : s.at("history")) {
      StepRecord r;
      r.step = j.at("step").get<std::size_t>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "sup" && kind != "trans") fail(ErrorKind::ParseError, "checkpoint: bad step kind '" + kind + "'");
      r.kind = kind == "sup" ? StepKind::Supervised : StepKind::Transductive;
      if (!j.at("lambda_c").is_null()) r.lambda_c = j.at("lambda_c").get<double>();
      r.grid_validation = j.at("grid_validation").get<std::vector<double>>();
      r.validation = j.at("validation").get<double>();
      r.image_stack_len = j.at("image_stack_len").get<std::size_t>();
      r.label_stack_len = j.at("label_stack_len").get<std::size_t>();
      const auto side = j.at("retained").get<std::string>();
      if (side != "image" && side != "label") fail(ErrorKind::ParseError, "checkpoint: bad retained side");
      r.retained = side == "image" ? RetainSide::Image : RetainSide::Label;
      r.companion = mlp_from_json(j.at("companion"));
      for (const auto& e : j.at("epochs")) {
        r.epochs.push_back(EpochLoss{e.at("total").get<double>(), e.at("triplet").get<double>(),
                                     e.at("gan_v").get<double>(), e.at("gan_t").get<double>(),
                                     e.at("cycle").get<double>()});
      }
      r.accepted = j.at("accepted").get<bool>();
      ck.state.history.push_back(std::move(r));
    }
    return ck;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::DimMismatch) {
      fail(ErrorKind::ParseError, std::string("checkpoint: ") + e.what());
    }
    throw;
  }
}

void checkpoint_save(const fs::path& path, const Checkpoint& ck) {
  write_file_atomic(path, checkpoint_to_json(ck).dump() + "\n");
}

Checkpoint checkpoint_load(const fs::path& path) { return checkpoint_from_json(read_json_file(path)); }

}  // namespace cmgan
