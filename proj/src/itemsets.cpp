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

#include "qarma/itemsets.hpp"

#include <algorithm>
#include <numeric>

#include "qarma/error.hpp"

namespace qarma {

std::uint32_t OrdMaps::attr(AttrId a, ItemId i) const {
  const auto& order = attrs_in_order.at(i);
  auto it = std::find(order.begin(), order.end(), a);
  if (it == order.end()) throw ConfigError("attribute not declared quantitative for item");
  return static_cast<std::uint32_t>(it - order.begin());
}

OrdMaps default_ord(const Dataset& d) {
  OrdMaps ord;
  ord.item_ord.resize(d.num_items());
  std::iota(ord.item_ord.begin(), ord.item_ord.end(), 0U);
  const AttrId shared = d.shared_attr();
  const auto neg = d.find_attr(negated_name(d.shared_attr_name()));
  ord.attrs_in_order.resize(d.num_items());
  for (ItemId i = 0; i < d.num_items(); ++i) {
    auto& out = ord.attrs_in_order[i];
    const auto& info = d.items[i];
    if (info.is_quantitative(shared)) out.push_back(shared);
    if (neg && info.is_quantitative(*neg)) out.push_back(*neg);
    for (const auto& decl : info.attrs)
      if (decl.kind == AttrKind::quantitative && decl.attr != shared && (!neg || decl.attr != *neg))
        out.push_back(decl.attr);
  }
  return ord;
}

std::vector<std::vector<Itemset>> mine_frequent(const SupportIndex& idx, double s_min, std::size_t max_len,
                                                const OrdMaps& ord) {
  if (!(s_min > 0.0 && s_min <= 1.0)) throw ConfigError("minimum support must be in (0, 1]");
  if (max_len == 0) throw ConfigError("max_len must be positive");
  std::vector<std::vector<Itemset>> levels(max_len);
  const std::size_t n = idx.universe();
  if (n == 0) return levels;
  const std::size_t min_count = min_support_count(s_min, n);
  auto frequent = [&](std::size_t count) { return count >= min_count; };
  auto by_ord = [&](ItemId a, ItemId b) { return ord.item(a) < ord.item(b); };
  auto lex = [&](const Itemset& a, const Itemset& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), by_ord);
  };

  std::vector<ItemId> singles;
  for (ItemId i = 0; i < idx.num_items(); ++i)
    if (frequent(idx.presence(i).count())) singles.push_back(i);
  std::sort(singles.begin(), singles.end(), by_ord);

  std::vector<UserBitset> prev_bits;
  for (auto i : singles) {
    levels[0].push_back({i});
    prev_bits.push_back(idx.presence(i));
  }

  for (std::size_t k = 2; k <= max_len; ++k) {
    const auto& prev = levels[k - 2];
    std::vector<UserBitset> bits;
    auto has_subset = [&](const Itemset& s) { return std::binary_search(prev.begin(), prev.end(), s, lex); };
    for (std::size_t a = 0; a < prev.size(); ++a) {
      for (std::size_t b = a + 1; b < prev.size(); ++b) {
        // join on a shared (k-2)-prefix; prev is lexicographically sorted
        if (!std::equal(prev[a].begin(), prev[a].end() - 1, prev[b].begin())) break;
        Itemset cand = prev[a];
        cand.push_back(prev[b].back());
        bool all_frequent = true;
        for (std::size_t drop = 0; drop + 2 < cand.size() && all_frequent; ++drop) {
          Itemset sub;
          for (std::size_t m = 0; m < cand.size(); ++m)
            if (m != drop) sub.push_back(cand[m]);
          all_frequent = has_subset(sub);
        }
        if (!all_frequent) continue;
        const auto& last = idx.presence(cand.back());
        if (!frequent(and_count(prev_bits[a], last))) continue;
        bits.push_back(prev_bits[a] & last);
        levels[k - 1].push_back(std::move(cand));
      }
    }
    prev_bits = std::move(bits);
    if (levels[k - 1].empty()) break;
  }
  return levels;
}

}  // namespace qarma
