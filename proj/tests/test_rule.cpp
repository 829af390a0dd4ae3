// Copyright 2026, The qarma authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "qarma/error.hpp"
#include "qarma/rule.hpp"
#include "qarma/support_index.hpp"
#include "test_util.hpp"

using namespace qarma;
using testutil::d_ex;

namespace {

struct Fixture {
  Dataset d = d_ex();
  ValueIndex vi{d};
  SupportIndex idx{d, vi};
  AttrId p = *d.find_attr("p");
  AttrId pn = *d.find_attr("p⁻");
  ItemId a = *d.find_item("a");
  ItemId b = *d.find_item("b");
  ItemId c = *d.find_item("c");

  // ante: list of (item, attr, value) tuples on antecedent items.
  Rule rule(std::vector<ItemId> ante, ItemId cons, std::vector<Quantification> q, Mode mode = Mode::geq) const {
    Rule r{std::move(ante), cons, std::move(q), mode};
    r.normalize(p);
    return r;
  }
  ScoredRule scored(Rule r) const { return {r, evaluate(idx, r)}; }
};

ScoredRule from_oracle(const Rule& r, const Dataset& d) {
  auto c = oracle::scan(r, d);
  return {r, metrics_from_counts(c.joint, c.antecedent, c.consequent, c.n)};
}

// The five dominance conditions written out directly.
bool brute_dominates(const ScoredRule& rp, const ScoredRule& r, const std::vector<Metric>& ltf) {
  if (rp.rule.consequent != r.rule.consequent) return false;
  for (ItemId i : rp.rule.antecedent)
    if (std::find(r.rule.antecedent.begin(), r.rule.antecedent.end(), i) == r.rule.antecedent.end()) return false;
  auto cv = [](const Rule& x) -> std::optional<double> {
    for (const auto& t : x.q)
      if (t.item == x.consequent) return t.value;
    return std::nullopt;
  };
  auto vp = cv(rp.rule), v = cv(r.rule);
  if (r.rule.mode == Mode::eq) {
    if (vp != v) return false;
  } else if (v && (!vp || *vp < *v)) {
    return false;
  }
  if (r.metrics.support > rp.metrics.support) return false;
  for (auto m : ltf)
    if (metric_value(r.metrics, m) > metric_value(rp.metrics, m)) return false;
  for (const auto& w : rp.rule.q) {
    if (w.item == rp.rule.consequent) continue;
    bool found = false;
    for (const auto& t : r.rule.q)
      if (t.item == w.item && t.attr == w.attr && w.value <= t.value) found = true;
    if (!found) return false;
  }
  return true;
}

// Random well-formed rules over a random dataset with defined metrics.
std::vector<ScoredRule> random_rules(const Dataset& d, std::mt19937_64& rng, std::size_t count, Mode mode) {
  ValueIndex vi(d);
  std::vector<ScoredRule> out;
  const auto n = d.num_items();
  for (std::size_t tries = 0; out.size() < count && tries < count * 50; ++tries) {
    Rule r;
    r.mode = mode;
    r.consequent = static_cast<ItemId>(rng() % n);
    for (ItemId i = 0; i < n; ++i)
      if (i != r.consequent && rng() % 2) r.antecedent.push_back(i);
    if (r.antecedent.empty()) continue;
    auto quantify = [&](ItemId i, bool cons) {
      for (const auto& e : vi.entries(i)) {
        if (cons && e.attr != d.shared_attr()) continue;
        if (e.values.empty() || rng() % 3 == 0) continue;
        r.q.push_back({i, e.attr, e.values[rng() % e.values.size()]});
      }
    };
    quantify(r.consequent, true);
    for (ItemId i : r.antecedent) quantify(i, false);
    r.normalize(d.shared_attr());
    auto c = oracle::scan(r, d);
    if (c.antecedent == 0 || c.consequent == 0) continue;
    out.push_back(from_oracle(r, d));
  }
  return out;
}

std::vector<std::string> sorted_shapes(const std::vector<ScoredRule>& rules, const Dataset& d) {
  std::vector<std::string> s;
  for (const auto& r : rules) s.push_back(testutil::shape(r.rule, d));
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

TEST_CASE("mode and metric names") {
  CHECK(parse_mode("geq") == Mode::geq);
  CHECK(parse_mode("eq") == Mode::eq);
  CHECK_THROWS_AS(parse_mode(">="), ConfigError);
  for (auto m : {Metric::support, Metric::confidence, Metric::conviction, Metric::lift, Metric::leverage})
    CHECK(parse_metric(to_string(m)) == m);
  CHECK_THROWS_AS(parse_metric("jaccard"), ConfigError);
}

TEST_CASE("metrics from counts") {
  // a[p>=1] -> b[p>=1] on D_ex: joint 3, antecedent 4, consequent 3 of 6.
  auto m = metrics_from_counts(3, 4, 3, 6);
  CHECK(m.support == doctest::Approx(0.5));
  CHECK(m.confidence == doctest::Approx(0.75));
  CHECK(m.cons_supp == doctest::Approx(0.5));
  CHECK(m.conviction == doctest::Approx(2.0));
  CHECK(m.lift == doctest::Approx(1.5));
  CHECK(m.leverage == doctest::Approx(0.5 - (4.0 / 6.0) * 0.5));
  CHECK(metric_value(m, Metric::lift) == m.lift);

  auto full = metrics_from_counts(4, 4, 5, 6);
  CHECK(std::isinf(full.conviction));
  CHECK(full.conviction > 0);

  CHECK_THROWS_AS(metrics_from_counts(0, 0, 3, 6), UndefinedMetricError);
  CHECK_THROWS_AS(metrics_from_counts(0, 2, 0, 6), UndefinedMetricError);
  CHECK_THROWS_AS(metrics_from_counts(0, 0, 0, 0), UndefinedMetricError);
}

TEST_CASE("conviction above one iff confidence above consequent support") {
  for (std::size_t n = 1; n <= 12; ++n)
    for (std::size_t ante = 1; ante <= n; ++ante)
      for (std::size_t cons = 1; cons <= n; ++cons)
        for (std::size_t joint = 0; joint <= std::min(ante, cons); ++joint) {
          if (ante + cons - joint > n) continue;
          auto m = metrics_from_counts(joint, ante, cons, n);
          if (joint == ante) continue;
          CHECK((m.conviction > 1.0 + 1e-12) == (m.confidence > m.cons_supp + 1e-12));
        }
}

TEST_CASE("normalize enforces rule invariants") {
  Fixture f;
  CHECK_THROWS_AS(f.rule({f.a, f.b}, f.b, {}), ConfigError);
  CHECK_THROWS_AS(f.rule({f.a, f.a}, f.b, {}), ConfigError);
  CHECK_THROWS_AS(f.rule({f.a}, f.b, {{f.b, f.pn, -1.0}}), ConfigError);
  CHECK_THROWS_AS(f.rule({f.a}, f.b, {{f.c, f.p, 0.1}}), ConfigError);
  CHECK_THROWS_AS(f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.a, f.p, 0.9}}), ConfigError);
  auto r = f.rule({f.c, f.a}, f.b, {{f.b, f.p, 1.0}, {f.a, f.pn, -1.0}, {f.a, f.p, 1.0}});
  CHECK(r.antecedent == std::vector<ItemId>{f.a, f.c});
  CHECK(r.q[0].attr == f.p);
  CHECK(r.q[1].attr == f.pn);
  CHECK(r.consequent_value() == std::optional<double>(1.0));
  CHECK(r.in_antecedent(f.c));
  CHECK_FALSE(r.in_antecedent(f.b));
  CHECK(r.find(f.a, f.pn)->value == -1.0);
  CHECK(r.find(f.c, f.p) == nullptr);
}

TEST_CASE("dominance on D_ex") {
  Fixture f;
  DominanceOptions opts;
  auto plain = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 1.0}}));
  auto with_neg = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.a, f.pn, -1.0}, {f.b, f.p, 1.0}}));
  CHECK(with_neg.metrics.support == doctest::Approx(0.5));
  CHECK(dominates(plain, with_neg, opts));
  CHECK_FALSE(dominates(with_neg, plain, opts));
  CHECK(dominates(plain, plain, opts));
  CHECK(wider(plain.rule, plain.rule));

  SUBCASE("wider but not dominating") {
    auto loose = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 1.0}}));
    CHECK(loose.metrics.confidence == doctest::Approx(0.5));
    CHECK(wider(loose.rule, plain.rule));
    CHECK_FALSE(dominates(loose, plain, opts));
  }
  SUBCASE("higher consequent does not yield to a lower one") {
    auto low = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 0.6}}));
    CHECK_FALSE(wider(low.rule, plain.rule));
    CHECK(wider(plain.rule, low.rule) == true);
    CHECK_FALSE(dominates(plain, low, opts));  // lower support
  }
  SUBCASE("different consequents never compare") {
    auto other = f.scored(f.rule({f.a}, f.c, {{f.a, f.p, 1.0}}));
    CHECK_FALSE(dominates(plain, other, opts));
    CHECK_FALSE(wider(plain.rule, other.rule));
  }
  SUBCASE("mode mismatch") {
    auto eq = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 1.0}}, Mode::eq));
    CHECK_THROWS_AS(dominates(plain, eq, opts), ConfigError);
    CHECK_THROWS_AS(wider(plain.rule, eq.rule), ConfigError);
  }
  SUBCASE("eq mode requires equal consequent values") {
    auto hi = f.scored(f.rule({f.a}, f.b, {{f.b, f.p, 1.0}}, Mode::eq));
    auto lo = f.scored(f.rule({f.a}, f.b, {{f.b, f.p, 0.5}}, Mode::eq));
    CHECK_FALSE(wider(hi.rule, lo.rule));
    CHECK_FALSE(wider(lo.rule, hi.rule));
    auto hi2 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 1.0}}, Mode::eq));
    CHECK(wider(hi.rule, hi2.rule));
  }
  SUBCASE("smaller antecedent set dominates") {
    auto big = f.scored(f.rule({f.a, f.c}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 1.0}}));
    CHECK(wider(plain.rule, big.rule));
    CHECK_FALSE(wider(big.rule, plain.rule));
  }
  SUBCASE("LTF over two metrics") {
    DominanceOptions two{{Metric::confidence, Metric::lift}, nullptr};
    CHECK(dominates(plain, with_neg, two));
  }
}

TEST_CASE("presence-implied quantifications are vacuous") {
  Fixture f;
  auto implied = f.idx.implied_bounds();
  // Every transaction of a has p >= 0.8 and p- >= -1.0.
  CHECK(implied.implied({f.a, f.p, 0.8}));
  CHECK_FALSE(implied.implied({f.a, f.p, 0.9}));
  CHECK(implied.implied({f.a, f.pn, -1.0}));
  CHECK_FALSE(implied.implied({f.a, f.pn, -0.9}));
  CHECK_FALSE(implied.implied({f.b, *f.d.find_attr("p"), 0.6}));

  auto bare = f.scored(f.rule({f.a}, f.b, {{f.b, f.p, 0.5}}));
  auto floor = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 0.5}}));
  DominanceOptions strict;
  DominanceOptions lax{{Metric::confidence}, &implied};
  CHECK(dominates(bare, floor, strict));
  CHECK_FALSE(dominates(floor, bare, strict));
  CHECK(dominates(floor, bare, lax));
  CHECK(canonical_less(bare.rule, floor.rule));

  RuleStore store(lax);
  CHECK(store.insert_if_undominated(floor));
  CHECK(store.insert_if_undominated(bare));
  REQUIRE(store.size() == 1);
  CHECK(store.rules()[0].rule == bare.rule);
  CHECK_FALSE(store.insert_if_undominated(floor));
}

TEST_CASE("dominance properties on random rules") {
  std::size_t checked = 0, dominating_pairs = 0, chains = 0;
  for (unsigned seed = 0; seed < 40; ++seed) {
    auto d = oracle::random_dataset(seed, oracle::RandomSpec{});
    std::mt19937_64 rng(seed);
    for (auto mode : {Mode::geq, Mode::eq}) {
      auto rules = random_rules(d, rng, 40, mode);
      for (const auto& ltf : {std::vector<Metric>{Metric::confidence},
                              std::vector<Metric>{Metric::confidence, Metric::conviction}}) {
        DominanceOptions opts{ltf, nullptr};
        const auto n = rules.size();
        std::vector<std::vector<char>> dom(n, std::vector<char>(n));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            dom[i][j] = dominates(rules[i], rules[j], opts);
            CHECK(bool(dom[i][j]) == brute_dominates(rules[i], rules[j], ltf));
            if (dom[i][j]) CHECK(wider(rules[i].rule, rules[j].rule));
            if (dom[i][j] && i != j) ++dominating_pairs;
            ++checked;
          }
        for (std::size_t i = 0; i < n; ++i) {
          CHECK(dom[i][i]);
          for (std::size_t j = 0; j < n; ++j) {
            if (dom[i][j] && dom[j][i]) CHECK(rules[i].rule == rules[j].rule);
            if (!dom[i][j]) continue;
            for (std::size_t k = 0; k < n; ++k)
              if (dom[j][k]) {
                CHECK(dom[i][k]);
                ++chains;
              }
          }
        }
      }
    }
  }
  CHECK(checked > 10000);
  CHECK(dominating_pairs > 100);
  CHECK(chains > 100);
}

TEST_CASE("rule store keeps exactly the undominated rules") {
  std::size_t total_kept = 0, total_in = 0;
  for (unsigned seed = 0; seed < 40; ++seed) {
    auto d = oracle::random_dataset(seed + 100, oracle::RandomSpec{});
    std::mt19937_64 rng(seed);
    auto rules = random_rules(d, rng, 60, seed % 2 ? Mode::eq : Mode::geq);
    DominanceOptions opts;
    RuleStore store(opts);
    for (const auto& r : rules) {
      bool dominated = false;
      for (const auto& s : store.rules()) dominated = dominated || dominates(s, r, opts);
      CHECK(store.has_dominator(r) == dominated);
      CHECK(store.insert_if_undominated(r) == !dominated);
      auto now = store.rules();
      CHECK(now.size() == store.size());
      for (std::size_t i = 0; i < now.size(); ++i)
        for (std::size_t j = 0; j < now.size(); ++j)
          if (i != j) CHECK_FALSE(dominates(now[i], now[j], opts));
    }
    // Brute force: distinct rules dominated by no other input rule.
    std::vector<ScoredRule> expect;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      bool dominated = false, dup = false;
      for (std::size_t j = 0; j < rules.size(); ++j) {
        if (rules[j].rule == rules[i].rule) {
          dup = dup || j < i;
          continue;
        }
        dominated = dominated || dominates(rules[j], rules[i], opts);
      }
      if (!dominated && !dup) expect.push_back(rules[i]);
    }
    CHECK(sorted_shapes(store.rules(), d) == sorted_shapes(expect, d));
    auto pruned = final_prune(rules, opts);
    CHECK(sorted_shapes(pruned, d) == sorted_shapes(expect, d));
    CHECK(sorted_shapes(final_prune(pruned, opts), d) == sorted_shapes(pruned, d));
    auto shuffled = rules;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(sorted_shapes(final_prune(shuffled, opts), d) == sorted_shapes(expect, d));

    // Bucket order: decreasing consequent value within each antecedent group.
    for (ItemId i = 0; i < d.num_items(); ++i) {
      auto bucket = store.bucket(i);
      for (const auto& r : bucket) CHECK(r.rule.consequent == i);
      for (std::size_t k = 1; k < bucket.size(); ++k)
        if (bucket[k].rule.antecedent == bucket[k - 1].rule.antecedent)
          CHECK(bucket[k].rule.consequent_value().value_or(-1e300) <=
                bucket[k - 1].rule.consequent_value().value_or(-1e300));
    }
    total_in += rules.size();
    total_kept += store.size();
  }
  CHECK(total_kept < total_in);
  CHECK(total_kept > 0);
}

TEST_CASE("store replay of the a -> b result and eviction") {
  Fixture f;
  RuleStore store;
  auto r1 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 1.0}}));
  auto r2 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.9}, {f.b, f.p, 0.6}}));
  auto r3 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 0.6}}));
  auto r4 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 0.5}}));
  for (const auto& r : {r1, r2, r3, r4}) CHECK(store.insert_if_undominated(r));
  auto bucket = store.bucket(f.b);
  REQUIRE(bucket.size() == 4);
  CHECK(bucket.front().rule.consequent_value() == std::optional<double>(1.0));
  CHECK(bucket.back().rule.consequent_value() == std::optional<double>(0.5));
  CHECK(store.bucket(f.a).empty());

  CHECK_FALSE(store.insert_if_undominated(r2));
  CHECK(store.size() == 4);

  // Drop r1's antecedent bound: wider, same support, confidence 3/6 < 0.75, so no eviction.
  auto r5 = f.scored(f.rule({f.a}, f.b, {{f.b, f.p, 1.0}}));
  CHECK(store.insert_if_undominated(r5));
  CHECK(store.size() == 5);

  // A rule that dominates r1 evicts it.
  RuleStore s2;
  auto tight = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.a, f.pn, -1.0}, {f.b, f.p, 1.0}}));
  CHECK(s2.insert_if_undominated(tight));
  CHECK(s2.insert_if_undominated(r1));
  CHECK(s2.size() == 1);
  CHECK(s2.rules()[0].rule == r1.rule);

  // final_prune across two partial results.
  auto merged = final_prune({tight, r1, r1}, DominanceOptions{});
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].rule == r1.rule);
  CHECK(final_prune({}, DominanceOptions{}).empty());
}

TEST_CASE("widest filter") {
  Fixture f;
  auto r1 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 1.0}}));
  auto r2 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.9}, {f.b, f.p, 0.6}}));
  auto r3 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 1.0}, {f.b, f.p, 0.6}}));
  auto r4 = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 0.5}}));
  auto kept = widest_filter({r1, r2, r3, r4});
  CHECK(kept.size() == 3);
  for (const auto& r : kept) CHECK_FALSE(r.rule == r3.rule);
  CHECK(widest_filter({r3}).size() == 1);
  auto other = f.scored(f.rule({f.a}, f.c, {{f.c, f.p, 0.2}}));
  CHECK(widest_filter({r1, other}).size() == 2);
  CHECK(widest_filter({r1, r1}).size() == 1);
}

TEST_CASE("canonical order") {
  Fixture f;
  auto r1 = f.rule({f.a}, f.b, {{f.b, f.p, 1.0}});
  auto r2 = f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 1.0}});
  auto r3 = f.rule({f.a}, f.b, {{f.a, f.p, 0.9}, {f.b, f.p, 1.0}});
  CHECK(canonical_less(r1, r2));
  CHECK_FALSE(canonical_less(r2, r1));
  CHECK(canonical_less(r2, r3));
  CHECK_FALSE(canonical_less(r2, r2));

  std::vector<ScoredRule> rules{f.scored(f.rule({f.a}, f.c, {{f.c, f.p, 0.2}})),
                                f.scored(f.rule({f.a}, f.b, {{f.b, f.p, 0.5}})),
                                f.scored(f.rule({f.a}, f.b, {{f.b, f.p, 1.0}})),
                                f.scored(f.rule({f.c}, f.b, {{f.b, f.p, 1.0}}))};
  sort_canonical(rules, f.d);
  CHECK(to_string(rules[0].rule, f.d) == "a -> b[p>=1]");
  CHECK(to_string(rules[1].rule, f.d) == "c -> b[p>=1]");
  CHECK(to_string(rules[2].rule, f.d) == "a -> b[p>=0.5]");
  CHECK(to_string(rules[3].rule, f.d) == "a -> c[p>=0.2]");
}

TEST_CASE("generalize and text form") {
  Fixture f;
  auto r = f.rule({f.a}, f.b, {{f.a, f.p, 0.9}, {f.b, f.p, 0.6}});
  CHECK(to_string(r, f.d) == "a[p>=0.9] -> b[p>=0.6]");
  CHECK(to_string(generalize(r, f.vi), f.d) == "a[p>0.8] -> b[p>0.5]");
  auto low = f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 0.5}});
  CHECK(to_string(generalize(low, f.vi), f.d) == "a[p>=0.8] -> b[p>=0.5]");
  auto bare = f.rule({f.a, f.c}, f.b, {});
  CHECK(to_string(generalize(bare, f.vi), f.d) == "a AND c -> b");
  auto neg = f.rule({f.a}, f.b, {{f.a, f.pn, -0.9}, {f.b, f.p, 1.0}});
  CHECK(to_string(generalize(neg, f.vi), f.d) == "a[p⁻>-1] -> b[p>0.6]");
  auto eq = f.rule({f.a}, f.b, {{f.a, f.p, 0.9}, {f.b, f.p, 0.6}}, Mode::eq);
  CHECK(to_string(eq, f.d) == "a[p>=0.9] -> b[p=0.6]");
  CHECK(to_string(generalize(eq, f.vi), f.d) == "a[p>0.8] -> b[p=0.6]");
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.6666666666666666, NumberStyle::report) == "0.666667");
  CHECK(std::stod(format_number(0.6666666666666666, NumberStyle::exact)) == 0.6666666666666666);
  CHECK(format_number(std::numeric_limits<double>::infinity(), NumberStyle::report) == "inf");
  CHECK(format_number(-std::numeric_limits<double>::infinity(), NumberStyle::exact) == "-inf");
  CHECK(format_number(1.0, NumberStyle::exact) == "1");
}

TEST_CASE("rule lines round-trip") {
  Fixture f;
  auto r = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.9}, {f.a, f.pn, -1.0}, {f.b, f.p, 0.6}}));
  auto line = to_json_line(r, f.d, NumberStyle::exact);
  auto back = parse_rule_line(line, f.d);
  CHECK(back.rule == r.rule);
  CHECK(back.metrics.support == r.metrics.support);
  CHECK(back.metrics.confidence == r.metrics.confidence);
  CHECK(back.metrics.lift == r.metrics.lift);
  CHECK(back.metrics.leverage == r.metrics.leverage);

  auto full = f.scored(f.rule({f.a}, f.b, {{f.a, f.p, 0.8}, {f.b, f.p, 0.5}}));
  auto fl = to_json_line(full, f.d);
  CHECK(fl.find("\"conviction\":\"inf\"") != std::string::npos);
  CHECK(fl.find("\"mode\":\"geq\"") != std::string::npos);
  CHECK(std::isinf(parse_rule_line(fl, f.d).metrics.conviction));

  std::ostringstream out;
  write_rules(out, {full, r}, f.d, NumberStyle::exact);
  std::istringstream in(out.str() + "\n");
  auto rules = read_rules(in, f.d);
  REQUIRE(rules.size() == 2);
  CHECK(rules[0].rule == r.rule);  // higher consequent value first
  CHECK(rules[1].rule == full.rule);

  CHECK(parse_rule_line(R"({"B":["a"],"I":"b","Q":[]})", f.d).rule.mode == Mode::geq);
  CHECK_THROWS_AS(parse_rule_line("{", f.d), IngestError);
  CHECK_THROWS_AS(parse_rule_line(R"({"B":["z"],"I":"b","Q":[]})", f.d), IngestError);
  CHECK_THROWS_AS(parse_rule_line(R"({"B":["a"],"I":"b","Q":[["a","w",1]]})", f.d), IngestError);
  CHECK_THROWS_AS(parse_rule_line(R"({"B":["a"],"Q":[]})", f.d), IngestError);
  CHECK_THROWS_AS(parse_rule_line(R"({"B":["a"],"I":"a","Q":[]})", f.d), IngestError);
  CHECK_THROWS_AS(parse_rule_line(R"({"B":["a"],"I":"b","Q":[],"support":"lots"})", f.d), IngestError);
  CHECK_THROWS_AS(parse_rule_line(R"({"B":["a"],"I":"b","Q":[],"mode":"gt"})", f.d), ConfigError);
  CHECK_THROWS_AS(read_rules_file("/nonexistent/rules.jsonl", f.d), IngestError);
}
