#include <doctest.h>

#include <random>
#include <set>

#include "pixeltag/errors.hpp"
#include "pixeltag/selection.hpp"
#include "test_util.hpp"

using namespace pixeltag;
using doctest::Approx;

namespace {

TagScores make_scores(const std::vector<std::pair<std::string, double>>& v) {
  TagScores s;
  for (const auto& [t, x] : v) s.entries.push_back({t, x});
  return s;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::vector<std::pair<std::string, double>> random_scores(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::pair<std::string, double>> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back("t" + std::to_string(i), u(rng));
  return v;
}

// Multiples of 1/64, so affine maps by powers of two stay exact.
std::vector<std::pair<std::string, double>> dyadic_scores(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> u(-64, 64);
  std::vector<std::pair<std::string, double>> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back("t" + std::to_string(i), u(rng) / 64.0);
  return v;
}

}  // namespace

TEST_CASE("gap selection keeps the tags above the largest drop") {
  const auto r = select_by_gap(make_scores({{"a", 0.9}, {"b", 0.82}, {"c", 0.31}, {"d", 0.28}}));
  CHECK(r.selected == std::vector<std::string>{"a", "b"});
  CHECK(r.ordering == std::vector<std::string>{"a", "b", "c", "d"});
  REQUIRE(r.gaps.size() == 3);
  CHECK(r.gaps[0] == Approx(0.08));
  CHECK(r.gaps[1] == Approx(0.51));
  CHECK(r.gaps[2] == Approx(0.03));
  CHECK(r.boundary_index == 1u);
}

TEST_CASE("gap selection sorts before measuring drops") {
  const auto r = select_by_gap(make_scores({{"c", 0.31}, {"a", 0.9}, {"d", 0.28}, {"b", 0.82}}));
  CHECK(r.selected == std::vector<std::string>{"a", "b"});
}

TEST_CASE("gap selection edge cases") {
  CHECK(select_by_gap(make_scores({{"only", -0.4}})).selected == std::vector<std::string>{"only"});
  CHECK(select_by_gap(make_scores({{"only", -0.4}})).gaps.empty());
  // All drops are zero; the first one wins.
  CHECK(select_by_gap(make_scores({{"a", 0.5}, {"b", 0.5}, {"c", 0.5}})).selected ==
        std::vector<std::string>{"a"});
  // Equal largest drops: the earlier boundary wins.
  CHECK(select_by_gap(make_scores({{"a", 0.75}, {"b", 0.5}, {"c", 0.25}})).selected ==
        std::vector<std::string>{"a"});
  CHECK_THROWS_AS(select_by_gap(TagScores{}), EmptyInputError);
}

TEST_CASE("threshold selection is strict and may select nothing") {
  const auto s = make_scores({{"a", 0.9}, {"b", 0.5}, {"c", 0.31}});
  CHECK(select_by_threshold(s, 0.5).selected == std::vector<std::string>{"a"});
  CHECK(select_by_threshold(s, 0.3).selected == std::vector<std::string>{"a", "b", "c"});
  CHECK(select_by_threshold(s, 0.95).selected.empty());
  CHECK_FALSE(select_by_threshold(s, 0.5).boundary_index.has_value());
  CHECK(select_by_threshold(TagScores{}, 0.5).selected.empty());
}

TEST_CASE("selection policy parsing") {
  CHECK(SelectionPolicy::parse("gap").mode == SelectionPolicy::Mode::Gap);
  const auto t = SelectionPolicy::parse("threshold:0.25");
  CHECK(t.mode == SelectionPolicy::Mode::Threshold);
  CHECK(t.threshold == 0.25);
  CHECK(t.to_string() == "threshold:0.25");
  CHECK(SelectionPolicy{}.to_string() == "gap");
  CHECK_THROWS_AS(SelectionPolicy::parse("threshold:"), ConfigError);
  CHECK_THROWS_AS(SelectionPolicy::parse("threshold:abc"), ConfigError);
  CHECK_THROWS_AS(SelectionPolicy::parse("threshold:0.5x"), ConfigError);
  CHECK_THROWS_AS(SelectionPolicy::parse("top3"), ConfigError);
}

TEST_CASE("prune keeps samples above mean plus one standard deviation") {
  const std::vector<std::pair<std::string, double>> sims{{"s1", 0.1}, {"s2", 0.2}, {"s3", 0.3}, {"s4", 0.9}};
  CHECK(prune_samples(sims) == std::vector<std::string>{"s4"});
  const std::vector<std::pair<std::string, double>> flat{{"a", 0.3}, {"b", 0.3}, {"c", 0.3}};
  CHECK(prune_samples(flat).empty());
  const std::vector<std::pair<std::string, double>> one{{"a", 0.7}};
  CHECK(prune_samples(one).empty());
  CHECK_THROWS_AS(prune_samples({}), EmptyInputError);
}

TEST_CASE("property: gap and threshold selection agree with enumeration oracles") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const auto v = random_scores(rng, n);
    const auto s = make_scores(v);
    const auto gap = select_by_gap(s);
    CHECK(as_set(gap.selected) == testutil::oracle_gap(v));
    CHECK_FALSE(gap.selected.empty());
    const double t = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    CHECK(as_set(select_by_threshold(s, t).selected) == testutil::oracle_threshold(v, t));
  }
}

TEST_CASE("property: selected tags outrank every unselected tag") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = random_scores(rng, 2 + rng() % 6);
    const auto r = select_by_gap(make_scores(v));
    double lowest_in = 2.0, highest_out = -2.0;
    for (const auto& [t, x] : v) {
      if (r.contains(t)) lowest_in = std::min(lowest_in, x);
      else highest_out = std::max(highest_out, x);
    }
    CHECK(lowest_in >= highest_out);
  }
}

TEST_CASE("property: raising the threshold never adds tags") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = make_scores(random_scores(rng, 1 + rng() % 8));
    const double lo = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    const double hi = lo + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto big = as_set(select_by_threshold(s, lo).selected);
    for (const auto& t : select_by_threshold(s, hi).selected) CHECK(big.count(t) == 1);
  }
}

TEST_CASE("property: gap selection is invariant to positive affine maps") {
  std::mt19937_64 rng(24);
  const double scales[] = {0.25, 0.5, 2.0, 8.0};
  const double shifts[] = {-1.0, -0.125, 0.0, 0.5, 3.0};
  for (int trial = 0; trial < 200; ++trial) {
    auto v = dyadic_scores(rng, 1 + rng() % 8);
    const auto base = select_by_gap(make_scores(v)).selected;
    const double a = scales[rng() % 4];
    const double b = shifts[rng() % 5];
    for (auto& p : v) p.second = a * p.second + b;
    CHECK(select_by_gap(make_scores(v)).selected == base);
  }
}

TEST_CASE("property: prune agrees with a long-double oracle") {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 300; ++trial) {
    const auto v = random_scores(rng, 1 + rng() % 12);
    CHECK(prune_samples(v) == testutil::oracle_prune(v));
  }
}

TEST_CASE("prune treats values on the cutoff as not exceeding it") {
  // With two equally sized levels the upper level sits exactly on mean + sigma.
  const std::vector<std::pair<std::string, double>> pair{{"a", 0.85827367067958849}, {"b", 0.50049862569359593}};
  CHECK(prune_samples(pair).empty());
  const std::vector<std::pair<std::string, double>> levels{{"a", 0.7}, {"b", 0.1}, {"c", 0.7}, {"d", 0.1}};
  CHECK(prune_samples(levels).empty());
}
