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
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "qarma/dataset.hpp"
#include "qarma/error.hpp"
#include "test_util.hpp"

using namespace qarma;
using testutil::d_ex;

namespace {

Dataset parse(const std::string& text, const char* shared = "p") {
  std::istringstream in(text);
  return load_dataset(in, shared);
}

std::vector<double> vals(const Dataset& d, const char* item, const char* attr) {
  ValueIndex vi(d);
  return vi.values(*d.find_item(item), *d.find_attr(attr));
}

}  // namespace

TEST_CASE("D_ex loads with six users and three items") {
  auto d = d_ex();
  CHECK(d.num_users() == 6);
  CHECK(d.num_items() == 3);
  CHECK(d.item_name(0) == "a");
  CHECK(d.item_name(2) == "c");
  CHECK(d.shared_attr_name() == "p");
  REQUIRE(d.find_attr("p⁻"));
  for (ItemId i = 0; i < 3; ++i) {
    CHECK(d.items[i].is_quantitative(*d.find_attr("p")));
    CHECK(d.items[i].is_quantitative(*d.find_attr("p⁻")));
  }
  CHECK(d.num_transactions() == 18);
  for (UserIndex u = 0; u < 6; ++u) CHECK(*d.find_user("u" + std::to_string(u + 1)) == u);
}

TEST_CASE("empty stream gives an empty dataset") {
  auto d = parse("");
  CHECK(d.num_users() == 0);
  CHECK(d.num_items() == 0);
  CHECK(d.num_transactions() == 0);
  auto blank = parse("\n  \n");
  CHECK(blank.num_users() == 0);
}

TEST_CASE("repeated records merge into one history") {
  auto d = parse(R"({"u":"x","t":[{"i":"a","a":{"p":1}}]}
{"u":"y","t":[{"i":"b","a":{"p":3}}]}
{"u":"x","t":[{"i":"a","a":{"p":2}}]}
)");
  REQUIRE(d.num_users() == 2);
  CHECK(d.histories[0].user == "x");
  REQUIRE(d.histories[0].transactions.size() == 2);
  CHECK(d.histories[0].transactions[0].item == d.histories[0].transactions[1].item);
  CHECK(*d.histories[0].transactions[1].value(d.shared_attr()) == 2.0);
  CHECK(d.num_transactions() == 3);
}

TEST_CASE("integer user keys and histories without transactions") {
  auto d = parse(R"({"u":7}
{"u":7,"t":[{"i":"a","a":{"p":1}}]}
)");
  CHECK(d.num_users() == 1);
  CHECK(d.histories[0].user == "7");
  CHECK(d.histories[0].transactions.size() == 1);
}

TEST_CASE("ingestion errors") {
  SUBCASE("missing shared attribute names user and item") {
    try {
      parse(R"({"u":"alice","t":[{"i":"bread","a":{"q":1}}]})");
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      std::string m = e.what();
      CHECK(m.find("alice") != std::string::npos);
      CHECK(m.find("bread") != std::string::npos);
    }
  }
  SUBCASE("non-numeric quantitative value") {
    CHECK_THROWS_AS(parse(R"({"u":"a","t":[{"i":"x","a":{"p":1,"w":2}},{"i":"x","a":{"p":1,"w":"big"}}]})"),
                    IngestError);
  }
  SUBCASE("numeric value for a categorical attribute") {
    CHECK_THROWS_AS(parse(R"({"u":"a","t":[{"i":"x","a":{"p":1,"c":"red"}},{"i":"x","a":{"p":1,"c":3}}]})"),
                    IngestError);
  }
  CHECK_THROWS_AS(parse("not json"), IngestError);
  CHECK_THROWS_AS(parse(R"({"t":[]})"), IngestError);
  CHECK_THROWS_AS(parse(R"({"u":"a","t":{}})"), IngestError);
  CHECK_THROWS_AS(parse(R"({"u":"a","t":[{"a":{"p":1}}]})"), IngestError);
  CHECK_THROWS_AS(parse(R"({"u":"a","t":[{"i":"x","a":[1]}]})"), IngestError);
  CHECK_THROWS_AS(parse(R"({"u":"a","t":[{"i":"x","a":{"p":true}}]})"), IngestError);
  CHECK_THROWS_AS(parse(R"({"u":1.5})"), IngestError);
  CHECK_THROWS_AS(load_dataset_file("/nonexistent/file.jsonl", "p"), IngestError);
}

TEST_CASE("categorical attributes are stored but not indexed") {
  auto d = parse(R"({"u":"a","t":[{"i":"x","a":{"p":1,"color":"red"}}]})");
  const auto color = *d.find_attr("color");
  REQUIRE(d.items[0].find(color));
  CHECK(d.items[0].find(color)->kind == AttrKind::categorical);
  CHECK_FALSE(d.items[0].is_quantitative(color));
  ValueIndex vi(d);
  CHECK(vi.entries(0).size() == 1);
}

TEST_CASE("duplicate user keys and bad ranges") {
  Dataset d("p");
  d.add_history(UserHistory{"k", {}});
  CHECK_THROWS_AS(d.add_history(UserHistory{"k", {}}), IngestError);
  auto i = d.intern_item("x");
  CHECK_THROWS_AS(d.declare(i, d.shared_attr(), AttrKind::quantitative, Range{2, 1}), ConfigError);
}

TEST_CASE("augment_negated") {
  auto d = d_ex(false);
  auto neg = augment_negated(d, "p");
  const auto p = *neg.find_attr("p");
  const auto pn = *neg.find_attr("p⁻");
  const auto& t = neg.histories[0].transactions[0];
  CHECK(*t.value(p) == 1.0);
  CHECK(*t.value(pn) == -1.0);
  std::size_t carried = 0;
  for (const auto& h : neg.histories)
    for (const auto& tr : h.transactions)
      if (auto v = tr.value(p)) {
        ++carried;
        CHECK(*tr.value(pn) == -*v);
      }
  CHECK(carried == neg.num_transactions());
  CHECK(neg.num_transactions() == d.num_transactions());

  SUBCASE("zero maps to positive zero") {
    auto z = augment_negated(parse(R"({"u":"a","t":[{"i":"x","a":{"p":0}}]})"), "p");
    double v = *z.histories[0].transactions[0].value(*z.find_attr("p⁻"));
    CHECK(v == 0.0);
    CHECK_FALSE(std::signbit(v));
  }
  SUBCASE("double augmentation is rejected") { CHECK_THROWS_AS(augment_negated(neg, "p"), ConfigError); }
  SUBCASE("unknown attribute") { CHECK_THROWS_AS(augment_negated(d, "weight"), ConfigError); }
  SUBCASE("declared range is mirrored") {
    std::istringstream in("1::10::4::0\n");
    auto ml = augment_negated(load_movielens(in), "rating");
    const auto* decl = ml.items[0].find(*ml.find_attr("rating⁻"));
    REQUIRE(decl);
    REQUIRE(decl->declared_range);
    CHECK(decl->declared_range->lower == -5.0);
    CHECK(decl->declared_range->upper == -1.0);
  }
}

TEST_CASE("value index on D_ex") {
  auto d = d_ex();
  CHECK(vals(d, "a", "p") == std::vector<double>{0.8, 0.9, 1.0});
  CHECK(vals(d, "a", "p⁻") == std::vector<double>{-1.0, -0.9, -0.8});
  CHECK(vals(d, "b", "p") == std::vector<double>{0.5, 0.6, 1.0});
  CHECK(vals(d, "c", "p") == std::vector<double>{0.1, 0.2, 0.3});
  ValueIndex vi(d);
  const auto a = *d.find_item("a");
  const auto p = *d.find_attr("p");
  CHECK(vi.level_of(a, p, 0.9) == std::optional<std::size_t>(1));
  CHECK_FALSE(vi.level_of(a, p, 0.85));

  auto c = parse(R"({"u":"a","t":[{"i":"x","a":{"p":4}}]}
{"u":"b","t":[{"i":"x","a":{"p":4}}]})");
  CHECK(vals(c, "x", "p") == std::vector<double>{4.0});
}

TEST_CASE("value index equals brute-force distinct sets on random data") {
  for (unsigned seed = 0; seed < 30; ++seed) {
    auto d = oracle::random_dataset(seed, oracle::RandomSpec{});
    ValueIndex vi(d);
    std::size_t pairs = 0;
    for (ItemId i = 0; i < d.num_items(); ++i)
      for (const auto& e : vi.entries(i)) {
        std::set<double> brute;
        for (const auto& h : d.histories)
          for (const auto& t : h.transactions)
            if (t.item == i)
              if (auto v = t.value(e.attr)) brute.insert(*v);
        CHECK(std::vector<double>(brute.begin(), brute.end()) == e.values);
        CHECK(std::adjacent_find(e.values.begin(), e.values.end(), std::greater_equal<>()) == e.values.end());
        ++pairs;
      }
    CHECK(pairs > 0);
    if (auto pn = d.find_attr("p⁻"))
      for (ItemId i = 0; i < d.num_items(); ++i) {
        if (!d.items[i].is_quantitative(*pn)) continue;
        auto pos = vi.values(i, d.shared_attr());
        auto neg = vi.values(i, *pn);
        std::reverse(pos.begin(), pos.end());
        for (auto& v : pos) v = -v;
        CHECK(pos == neg);
      }
  }
}

TEST_CASE("discretize") {
  std::string text;
  for (int v = 0; v <= 9; ++v) text += R"({"u":"u)" + std::to_string(v) + R"(","t":[{"i":"x","a":{"p":)" + std::to_string(v) + "}}]}\n";
  auto d = parse(text);
  CHECK(vals(discretize(d, "p", 2), "x", "p") == std::vector<double>{0.0, 4.5});
  CHECK(vals(discretize(d, "p", 1), "x", "p") == std::vector<double>{0.0});
  CHECK(vals(discretize(d, "p", 3), "x", "p") == std::vector<double>{0.0, 3.0, 6.0});
  CHECK(vals(discretize(d, "p", 100), "x", "p").size() <= 10);
  CHECK(discretize(d, "p", 2).num_transactions() == 10);

  auto c = parse(R"({"u":"a","t":[{"i":"x","a":{"p":4}}]})");
  CHECK(vals(discretize(c, "p", 5), "x", "p") == std::vector<double>{4.0});

  CHECK_THROWS_AS(discretize(d, "p", 0), ConfigError);
  CHECK_THROWS_AS(discretize(d, "weight", 2), ConfigError);
}

TEST_CASE("movielens format") {
  std::istringstream in("1::1193::5::978300760\r\n1::661::3::978302109\n2::1193::4::978298413\n\n");
  auto d = load_movielens(in);
  CHECK(d.shared_attr_name() == "rating");
  CHECK(d.num_users() == 2);
  CHECK(d.num_items() == 2);
  const auto m = *d.find_item("1193");
  const auto& t = d.histories[0].transactions[0];
  CHECK(t.item == m);
  CHECK(*t.value(d.shared_attr()) == 5.0);
  CHECK(t.attrs.size() == 1);

  auto bad = [](const char* s) {
    std::istringstream is(s);
    return load_movielens(is);
  };
  CHECK_THROWS_AS(bad(""), IngestError);
  CHECK_THROWS_AS(bad("1::2::6::0\n"), IngestError);
  CHECK_THROWS_AS(bad("1::2::0::0\n"), IngestError);
  CHECK_THROWS_AS(bad("1::2::4.5::0\n"), IngestError);
  CHECK_THROWS_AS(bad("1::2::x::0\n"), IngestError);
  CHECK_THROWS_AS(bad("1::2::4\n"), IngestError);
  CHECK_THROWS_AS(bad("1,2,4,0\n"), IngestError);
  CHECK_THROWS_AS(load_movielens_file("/nonexistent/ratings.dat"), IngestError);
}

TEST_CASE("write then load round-trips") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    auto d = oracle::random_dataset(seed, oracle::RandomSpec{});
    std::ostringstream out;
    write_dataset(out, d);
    auto back = parse(out.str());
    REQUIRE(back.num_users() == d.num_users());
    CHECK(back.num_transactions() == d.num_transactions());
    ValueIndex a(d), b(back);
    for (ItemId i = 0; i < d.num_items(); ++i) {
      auto j = *back.find_item(d.item_name(i));
      for (const auto& e : a.entries(i))
        CHECK(b.values(j, *back.find_attr(d.attr_name(e.attr))) == e.values);
    }
  }
}

TEST_CASE("file digest") {
  const std::string path = "qarma_digest_test.tmp";
  {
    std::ofstream f(path, std::ios::binary);
    f << "a";
  }
  // FNV-1a of "a"
  CHECK(file_digest(path) == 0xaf63dc4c8601ec8cULL);
  {
    std::ofstream f(path, std::ios::binary);
    f << "b";
  }
  CHECK(file_digest(path) != 0xaf63dc4c8601ec8cULL);
  std::remove(path.c_str());
  CHECK_THROWS_AS(file_digest("/nonexistent/x"), IngestError);
}
