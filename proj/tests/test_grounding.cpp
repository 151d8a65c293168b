#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "util.hpp"

#include "cmgan/grounding.hpp"

using namespace cmgan;
using testutil::random_vec;
using testutil::vec;

namespace {

EmbeddingTable random_table(Rng& rng, std::size_t n, std::size_t d) {
  EmbeddingTable t(d);
  for (std::size_t i = 0; i < n; ++i) t.add("w" + std::to_string(i), random_vec(rng, d));
  return t;
}

Mlp2 linear_map(const Matrix& a) {
  Mlp2 n;
  n.w1 = a;
  n.b1 = Vec::Zero(a.rows());
  n.w2 = Matrix::Identity(a.rows(), a.rows());
  n.b2 = Vec::Zero(a.rows());
  n.hidden_activation = Activation::Linear;
  n.output_activation = Activation::Linear;
  return n;
}

// Pairs (anchor, w_i) whose cosine falls with i.
EmbeddingTable fan_table(std::size_t n) {
  EmbeddingTable t(2);
  t.add("anchor", vec({1, 0}));
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 0.2 * static_cast<double>(i + 1);
    t.add("w" + std::to_string(i), vec({std::cos(angle), std::sin(angle)}));
  }
  return t;
}

RelatednessBenchmark fan_bench(std::size_t n, bool reversed) {
  RelatednessBenchmark b{"fan", {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i);
    b.pairs.push_back({"anchor", "w" + std::to_string(i), reversed ? s : 10.0 - s});
  }
  return b;
}

}  // namespace

TEST_CASE("recipe names round trip") {
  for (GroundingVariant v : kGroundingVariants) CHECK(parse_grounding_variant(grounding_variant_name(v)) == v);
  CHECK(grounding_variant_name(GroundingVariant::XVtrans) == "x+vtrans");
  CHECK(is_concatenation(GroundingVariant::VsupVtrans));
  CHECK(!is_concatenation(GroundingVariant::Vsup));
  CHECK_ERROR(parse_grounding_variant("x+x"), ErrorKind::InvalidArgument);
}

TEST_CASE("recipe x leaves the table unchanged") {
  Rng rng(1);
  const EmbeddingTable t = random_table(rng, 12, 4);
  const MappingStack sup{"T0", {linear_map(Matrix::Random(4, 4))}};
  const GroundingResult r = ground_vectors(t, sup, sup, GroundingRecipe{GroundingVariant::X});
  REQUIRE(r.vectors.size() == t.size());
  for (const auto& tok : t.tokens()) CHECK(r.vectors.at(tok) == t.at(tok));

  const MappingStack none{"T0", {}};
  const GroundingResult v = ground_vectors(t, none, none, GroundingRecipe{GroundingVariant::Vtrans});
  for (const auto& tok : t.tokens()) CHECK(v.vectors.at(tok) == t.at(tok));
  const GroundingResult s = ground_vectors(t, sup, none, GroundingRecipe{GroundingVariant::Vsup});
  for (const auto& tok : t.tokens()) CHECK((s.vectors.at(tok) - sup.apply(t.at(tok))).norm() <= 1e-12);
}

TEST_CASE("duplicated blocks reduced to d keep every cosine") {
  Rng rng(5);
  const std::size_t d = 5;
  const EmbeddingTable t = random_table(rng, 40, d);
  const MappingStack id{"T0", {}};
  const GroundingResult r = ground_vectors(t, id, id, GroundingRecipe{GroundingVariant::XVsup, d});
  CHECK(r.vectors.dim() == d);
  const auto& toks = t.tokens();
  for (std::size_t i = 0; i < toks.size(); ++i)
    for (std::size_t j = i + 1; j < toks.size(); ++j)
      CHECK(std::abs(cosine(r.vectors.at(toks[i]), r.vectors.at(toks[j])) - cosine(t.at(toks[i]), t.at(toks[j]))) <=
            1e-6);

  // full-dimension projection of a real concatenation keeps its cosines too
  const MappingStack a{"T0", {linear_map(Matrix::Random(d, d))}};
  const GroundingResult full = ground_vectors(t, a, id, GroundingRecipe{GroundingVariant::XVsup, 2 * d});
  auto concat = [&](const std::string& tok) {
    Vec c(2 * d);
    c << t.at(tok), a.apply(t.at(tok));
    return c;
  };
  for (std::size_t i = 0; i + 1 < toks.size(); ++i)
    CHECK(std::abs(cosine(full.vectors.at(toks[i]), full.vectors.at(toks[i + 1])) -
                   cosine(concat(toks[i]), concat(toks[i + 1]))) <= 1e-6);

  const GroundingResult again = ground_vectors(t, a, id, GroundingRecipe{GroundingVariant::XVsup, 2 * d});
  for (const auto& tok : toks) CHECK(again.vectors.at(tok) == full.vectors.at(tok));
}

TEST_CASE("pca fit set and dimension errors") {
  Rng rng(6);
  const EmbeddingTable t = random_table(rng, 10, 3);
  const MappingStack id{"T0", {}};
  const GroundingResult r =
      ground_vectors(t, id, id, GroundingRecipe{GroundingVariant::XVtrans, 2}, {"w0", "w1", "w2", "zzz", "w1"});
  CHECK(r.skipped == std::vector<std::string>{"zzz"});
  CHECK(r.vectors.size() == t.size());
  CHECK(r.vectors.dim() == 2);
  CHECK_ERROR(ground_vectors(t, id, id, GroundingRecipe{GroundingVariant::XVtrans, 7}), ErrorKind::InvalidArgument);
  CHECK_ERROR(ground_vectors(t, id, id, GroundingRecipe{GroundingVariant::XVtrans, 3}, {"w0", "w1"}),
              ErrorKind::InvalidArgument);
  CHECK_ERROR(ground_vectors(EmbeddingTable(3), id, id, GroundingRecipe{GroundingVariant::X}), ErrorKind::EmptySplit);
}

TEST_CASE("relatedness examples") {
  const EmbeddingTable t = fan_table(8);
  const RelatednessResult up = relatedness_eval(t, fan_bench(8, false));
  CHECK(std::abs(up.spearman - 100.0) <= 1e-9);
  CHECK(up.covered == 8);
  CHECK(up.coverage() == 1.0);
  CHECK(std::abs(relatedness_eval(t, fan_bench(8, true)).spearman + 100.0) <= 1e-9);

  RelatednessBenchmark partial = fan_bench(8, false);
  partial.pairs.push_back({"anchor", "unknown", 1.0});
  const RelatednessResult p = relatedness_eval(t, partial);
  CHECK(p.covered == 8);
  CHECK(p.total == 9);
  CHECK(std::abs(p.spearman - 100.0) <= 1e-9);

  RelatednessBenchmark oov{"oov", {{"x", "y", 1.0}, {"anchor", "w0", 2.0}}};
  CHECK_ERROR(relatedness_eval(t, oov), ErrorKind::OovBenchmark);
}

TEST_CASE("relatedness is invariant to a common rescaling") {
  Rng rng(9);
  const EmbeddingTable t = random_table(rng, 30, 6);
  RelatednessBenchmark b{"rand", {}};
  for (int i = 0; i < 60; ++i)
    b.pairs.push_back({"w" + std::to_string(rng.below(30)), "w" + std::to_string(rng.below(30)), rng.uniform()});
  EmbeddingTable scaled(6);
  for (const auto& tok : t.tokens()) scaled.add(tok, 3.7 * t.at(tok));
  CHECK(std::abs(relatedness_eval(t, b).spearman - relatedness_eval(scaled, b).spearman) <= 1e-9);
}

TEST_CASE("benchmark files") {
  const RelatednessBenchmark b = parse_benchmark("# header\n\ncat\tdog\t7.5\n  car\tbus\t3 \n", "men");
  CHECK(b.name == "men");
  REQUIRE(b.pairs.size() == 2);
  CHECK(b.pairs[1].a == "car");
  CHECK(b.pairs[1].b == "bus");
  CHECK(b.pairs[1].score == 3.0);

  CHECK_ERROR(parse_benchmark("cat\tdog\n", "x"), ErrorKind::ParseError);
  CHECK_ERROR(parse_benchmark("cat\tdog\tnan\n", "x"), ErrorKind::ParseError);
  CHECK_ERROR(parse_benchmark("cat\tdog\tlots\n", "x"), ErrorKind::ParseError);
  try {
    parse_benchmark("a\tb\t1\nbad line\n", "ws");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ws:2") != std::string::npos);
  }

  const auto dir = std::filesystem::temp_directory_path() / "cmgan_test_grounding";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "simlex.tsv") << "a\tb\t1\nb\tc\t2\n";
  const RelatednessBenchmark loaded = load_benchmark(dir / "simlex.tsv");
  CHECK(loaded.name == "simlex");
  CHECK(loaded.pairs.size() == 2);
  CHECK(benchmark_vocabulary({b, loaded}) == std::vector<std::string>{"cat", "dog", "car", "bus", "a", "b", "c"});
  std::filesystem::remove_all(dir);
}
