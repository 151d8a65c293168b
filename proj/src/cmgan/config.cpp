#include "cmgan/config.hpp"

#include <set>

#include "cmgan/error.hpp"

namespace cmgan {

std::string_view transform_name(Transform t) noexcept {
  switch (t) {
    case Transform::Orthogonal: return "orthogonal";
    case Transform::Affine: return "affine";
    case Transform::Mlp: return "mlp";
  }
  return "mlp";
}

Transform parse_transform(std::string_view name) {
  if (name == "orthogonal") return Transform::Orthogonal;
  if (name == "affine") return Transform::Affine;
  if (name == "mlp") return Transform::Mlp;
  fail(ErrorKind::InvalidArgument, "unknown transform '" + std::string(name) + "'");
}

namespace {

std::string_view side_name(RetainSide s) { return s == RetainSide::Image ? "image" : "label"; }

RetainSide parse_side(std::string_view name) {
  if (name == "image") return RetainSide::Image;
  if (name == "label") return RetainSide::Label;
  fail(ErrorKind::InvalidArgument, "retain side must be 'image' or 'label', got '" + std::string(name) + "'");
}

json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

// Reads an object section, remembering which keys were consumed so that
// typos in config files are reported instead of silently ignored.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) fail(ErrorKind::InvalidArgument, "config section '" + path_ + "' must be an object");
  }
  void done() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.count(key)) fail(ErrorKind::InvalidArgument, "unknown config key '" + prefixed(key) + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::InvalidArgument, "config key '" + prefixed(key) + "' has the wrong type");
    }
  }

  template <typename Parse, typename T>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string name;
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    get(key, name);
    out = parse(name);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  std::string prefixed(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_adam(const json* doc, const std::string& path, AdamConfig& a) {
  if (!doc) return;
  Section s(*doc, path);
  s.get("lr", a.lr);
  s.get("beta1", a.beta1);
  s.get("beta2", a.beta2);
  s.get("eps", a.eps);
  s.done();
}

}  // namespace

json to_json(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  const auto& s = c.synth;
  doc["synth"] = {{"kind", s.kind},
                  {"n_seen", s.n_seen},
                  {"n_unseen", s.n_unseen},
                  {"d_text", s.d_text},
                  {"d_vis", s.d_vis},
                  {"images_per_class", s.images_per_class},
                  {"transform", transform_name(s.transform)},
                  {"noise_sigma", s.noise_sigma},
                  {"probe_temperature", s.probe_temperature},
                  {"mlp_gain", s.mlp_gain},
                  {"n_extra_words", s.n_extra_words},
                  {"n_sentences", s.n_sentences},
                  {"min_words", s.min_words},
                  {"max_words", s.max_words}};
  doc["conse"] = {{"top_k", c.conse.top_k}};
  const auto& n = c.nets;
  doc["nets"] = {{"mapper_hidden", n.mapper_hidden},
                 {"disc_hidden", n.disc_hidden},
                 {"mapper_activation", activation_name(n.mapper_activation)},
                 {"disc_activation", activation_name(n.disc_activation)},
                 {"mapper_residual", n.mapper_residual},
                 {"mapper_output_init_scale", n.mapper_output_init_scale},
                 {"mapper_optim", adam_json(n.mapper_optim)},
                 {"disc_optim", adam_json(n.disc_optim)}};
  doc["losses"] = {{"margin", c.losses.margin}, {"cycle_norm", cycle_norm_name(c.losses.cycle_norm)}};
  const auto& t = c.trainer;
  doc["trainer"] = {{"max_steps", t.max_steps},
                    {"sup_epochs", t.sup_epochs},
                    {"trans_epochs", t.trans_epochs},
                    {"batch_size", t.batch_size},
                    {"lambda_c_grid", t.lambda_c_grid},
                    {"val_fraction", t.val_fraction},
                    {"improve_eps", t.improve_eps},
                    {"supervised", t.supervised},
                    {"transductive", t.transductive},
                    {"use_gan", t.use_gan},
                    {"use_cycle", t.use_cycle},
                    {"sup_retain", side_name(t.sup_retain)},
                    {"trans_retain", side_name(t.trans_retain)},
                    {"trans_standardize", t.trans_standardize}};
  doc["eval"] = {{"mfr_exact50", c.eval.mfr_exact50}};
  return doc;
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  if (const json* j = root.child("synth")) {
    Section s(*j, "synth");
    auto& y = c.synth;
    s.get("kind", y.kind);
    if (y.kind != "zsl" && y.kind != "sentences") fail(ErrorKind::InvalidArgument, "synth.kind must be zsl or sentences");
    s.get("n_seen", y.n_seen);
    s.get("n_unseen", y.n_unseen);
    s.get("d_text", y.d_text);
    s.get("d_vis", y.d_vis);
    s.get("images_per_class", y.images_per_class);
    s.get_enum("transform", y.transform, parse_transform);
    s.get("noise_sigma", y.noise_sigma);
    s.get("probe_temperature", y.probe_temperature);
    s.get("mlp_gain", y.mlp_gain);
    s.get("n_extra_words", y.n_extra_words);
    s.get("n_sentences", y.n_sentences);
    s.get("min_words", y.min_words);
    s.get("max_words", y.max_words);
    s.done();
  }
  if (const json* j = root.child("conse")) {
    Section s(*j, "conse");
    s.get("top_k", c.conse.top_k);
    s.done();
  }
  if (const json* j = root.child("nets")) {
    Section s(*j, "nets");
    auto& n = c.nets;
    s.get("mapper_hidden", n.mapper_hidden);
    s.get("disc_hidden", n.disc_hidden);
    s.get_enum("mapper_activation", n.mapper_activation, parse_activation);
    s.get_enum("disc_activation", n.disc_activation, parse_activation);
    s.get("mapper_residual", n.mapper_residual);
    s.get("mapper_output_init_scale", n.mapper_output_init_scale);
    read_adam(s.child("mapper_optim"), "nets.mapper_optim", n.mapper_optim);
    read_adam(s.child("disc_optim"), "nets.disc_optim", n.disc_optim);
    s.done();
  }
  if (const json* j = root.child("losses")) {
    Section s(*j, "losses");
    s.get("margin", c.losses.margin);
    s.get_enum("cycle_norm", c.losses.cycle_norm, parse_cycle_norm);
    s.done();
  }
  if (const json* j = root.child("trainer")) {
    Section s(*j, "trainer");
    auto& t = c.trainer;
    s.get("max_steps", t.max_steps);
    s.get("sup_epochs", t.sup_epochs);
    s.get("trans_epochs", t.trans_epochs);
    s.get("batch_size", t.batch_size);
    s.get("lambda_c_grid", t.lambda_c_grid);
    s.get("val_fraction", t.val_fraction);
    s.get("improve_eps", t.improve_eps);
    s.get("supervised", t.supervised);
    s.get("transductive", t.transductive);
    s.get("use_gan", t.use_gan);
    s.get("use_cycle", t.use_cycle);
    s.get_enum("sup_retain", t.sup_retain, parse_side);
    s.get_enum("trans_retain", t.trans_retain, parse_side);
    s.get("trans_standardize", t.trans_standardize);
    if (t.batch_size == 0) fail(ErrorKind::InvalidArgument, "trainer.batch_size must be positive");
    if (t.lambda_c_grid.empty()) fail(ErrorKind::InvalidArgument, "trainer.lambda_c_grid must not be empty");
    for (double l : t.lambda_c_grid)
      if (!(l >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda_c values must be non-negative");
    s.done();
  }
  if (const json* j = root.child("eval")) {
    Section s(*j, "eval");
    s.get("mfr_exact50", c.eval.mfr_exact50);
    s.done();
  }
  root.done();
  if (c.losses.margin <= 0.0) fail(ErrorKind::InvalidArgument, "losses.margin must be positive");
  return c;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorKind::InvalidArgument, "override must look like key.path=value, got '" + std::string(assignment) + "'");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorKind::InvalidArgument, "empty component in override path '" + path + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace cmgan
