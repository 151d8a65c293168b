#include "cmgan/grounding.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cmgan/data.hpp"
#include "cmgan/error.hpp"
#include "cmgan/numerics.hpp"

namespace cmgan {

std::string_view grounding_variant_name(GroundingVariant v) noexcept {
  switch (v) {
    case GroundingVariant::X: return "x";
    case GroundingVariant::Vsup: return "vsup";
    case GroundingVariant::XVsup: return "x+vsup";
    case GroundingVariant::Vtrans: return "vtrans";
    case GroundingVariant::XVtrans: return "x+vtrans";
    case GroundingVariant::VsupVtrans: return "vsup+vtrans";
  }
  return "?";
}

GroundingVariant parse_grounding_variant(std::string_view name) {
  for (auto v : kGroundingVariants)
    if (grounding_variant_name(v) == name) return v;
  fail(ErrorKind::InvalidArgument, "unknown grounding recipe '" + std::string(name) + "'");
}

bool is_concatenation(GroundingVariant v) noexcept {
  return v == GroundingVariant::XVsup || v == GroundingVariant::XVtrans || v == GroundingVariant::VsupVtrans;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RelatednessBenchmark parse_benchmark(const std::string& text, const std::string& name) {
  RelatednessBenchmark bench{name, {}};
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(stripped);
    while (std::getline(ls, field, '\t')) fields.push_back(trim(field));
    const std::string where = name + ":" + std::to_string(line_no);
    if (fields.size() != 3) fail(ErrorKind::ParseError, where + ": expected 3 tab-separated fields");
    if (fields[0].empty() || fields[1].empty()) fail(ErrorKind::ParseError, where + ": empty token");
    double score = 0.0;
    const auto& s = fields[2];
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), score);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(score))
      fail(ErrorKind::ParseError, where + ": bad score '" + s + "'");
    bench.pairs.push_back({fields[0], fields[1], score});
  }
  return bench;
}

RelatednessBenchmark load_benchmark(const std::filesystem::path& path) {
  return parse_benchmark(read_file(path), path.stem().string());
}

std::vector<std::string> benchmark_vocabulary(const std::vector<RelatednessBenchmark>& benches) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& b : benches)
    for (const auto& p : b.pairs)
      for (const auto* t : {&p.a, &p.b})
        if (seen.insert(*t).second) out.push_back(*t);
  return out;
}

GroundingResult ground_vectors(const EmbeddingTable& table, const MappingStack& sup_map,
                               const MappingStack& trans_map, const GroundingRecipe& recipe,
                               const std::vector<std::string>& fit_vocabulary) {
  if (table.empty()) fail(ErrorKind::EmptySplit, "grounding: empty embedding table");
  const auto& tokens = table.tokens();
  std::vector<Vec> xs;
  xs.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) xs.push_back(table.vector(i));

  GroundingResult out;
  for (const auto& t : fit_vocabulary)
    if (!table.contains(t)) out.skipped.push_back(t);

  auto concat = [](const std::vector<Vec>& a, const std::vector<Vec>& b) {
    std::vector<Vec> r;
    r.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      Vec v(a[i].size() + b[i].size());
      v << a[i], b[i];
      r.push_back(std::move(v));
    }
    return r;
  };

  std::vector<Vec> rows;
  switch (recipe.variant) {
    case GroundingVariant::X: rows = xs; break;
    case GroundingVariant::Vsup: rows = sup_map.apply(xs); break;
    case GroundingVariant::Vtrans: rows = trans_map.apply(xs); break;
    case GroundingVariant::XVsup: rows = concat(xs, sup_map.apply(xs)); break;
    case GroundingVariant::XVtrans: rows = concat(xs, trans_map.apply(xs)); break;
    case GroundingVariant::VsupVtrans: rows = concat(sup_map.apply(xs), trans_map.apply(xs)); break;
  }

  if (is_concatenation(recipe.variant)) {
    const std::size_t dim = recipe.output_dim == 0 ? table.dim() : recipe.output_dim;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < tokens.size(); ++i) index.emplace(tokens[i], i);
    std::vector<Vec> fit_rows;
    std::unordered_set<std::string> used;
    for (const auto& t : fit_vocabulary) {
      const auto it = index.find(t);
      if (it != index.end() && used.insert(t).second) fit_rows.push_back(rows[it->second]);
    }
    if (fit_rows.empty()) fit_rows = rows;
    const auto concat_dim = static_cast<std::size_t>(rows.front().size());
    if (dim > concat_dim || dim > fit_rows.size())
      fail(ErrorKind::InvalidArgument, "grounding: output_dim " + std::to_string(dim) + " needs at least that many "
                                       "fitting tokens (" + std::to_string(fit_rows.size()) +
                                       ") and concatenated dimensions (" + std::to_string(concat_dim) + ")");
    const Pca pca = pca_fit(fit_rows, dim);
    for (auto& r : rows) r = pca.axes * r;
  }

  out.vectors = EmbeddingTable(static_cast<std::size_t>(rows.front().size()));
  for (std::size_t i = 0; i < tokens.size(); ++i) out.vectors.add(tokens[i], std::move(rows[i]));
  return out;
}

RelatednessResult relatedness_eval(const EmbeddingTable& vectors, const RelatednessBenchmark& bench) {
  RelatednessResult r;
  r.benchmark = bench.name;
  r.total = bench.pairs.size();
  std::vector<double> human, model;
  for (const auto& p : bench.pairs) {
    const Vec* a = vectors.find(p.a);
    const Vec* b = vectors.find(p.b);
    if (a == nullptr || b == nullptr) continue;
    human.push_back(p.score);
    model.push_back(cosine(*a, *b));
  }
  r.covered = human.size();
  if (r.covered < 2)
    fail(ErrorKind::OovBenchmark, "benchmark '" + bench.name + "': " + std::to_string(r.covered) + " of " +
                                      std::to_string(r.total) + " pairs covered");
  r.spearman = 100.0 * spearman(human, model);
  return r;
}

}  // namespace cmgan
