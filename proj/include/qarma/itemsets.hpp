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

#pragma once

#include <cstdint>
#include <vector>

#include "qarma/dataset.hpp"
#include "qarma/support_index.hpp"

namespace qarma {

// Total orders on items, and on the quantitative attributes of each item.
struct OrdMaps {
  std::vector<std::uint32_t> item_ord;
  // Per item: quantitative attributes in increasing attribute order.
  std::vector<std::vector<AttrId>> attrs_in_order;

  std::uint32_t item(ItemId i) const { return item_ord.at(i); }
  // Position of a in the item's attribute order; throws if undeclared.
  std::uint32_t attr(AttrId a, ItemId i) const;
};

// Items in catalog order; per item the shared attribute, then its negation if
// present, then the rest in declaration order.
OrdMaps default_ord(const Dataset& d);

using Itemset = std::vector<ItemId>;  // sorted by item order

// Frequent itemsets by presence-only support, grouped by size:
// result[k - 1] holds the itemsets of size k, k = 1..max_len.
std::vector<std::vector<Itemset>> mine_frequent(const SupportIndex& idx, double s_min, std::size_t max_len,
                                                const OrdMaps& ord);

}  // namespace qarma
