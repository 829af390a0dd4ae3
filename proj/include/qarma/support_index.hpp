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

#include <span>
#include <vector>

#include "qarma/bitset.hpp"
#include "qarma/dataset.hpp"
#include "qarma/rule.hpp"

namespace qarma {

// Precomputed user bitsets: item presence, and for every (item, attr, level j)
// the users having a transaction of the item with attr >= (or ==) the j-th
// smallest distinct value.
class SupportIndex {
 public:
  struct Levels {
    AttrId attr;
    std::vector<double> values;
    std::vector<UserBitset> at_least;
    std::vector<UserBitset> exactly;
  };

  SupportIndex() = default;
  SupportIndex(const Dataset& d, const ValueIndex& vi);

  std::size_t universe() const { return universe_; }
  std::size_t num_items() const { return presence_.size(); }

  const UserBitset& presence(ItemId i) const { return presence_.at(i); }
  const Levels* levels(ItemId i, AttrId a) const;
  const std::vector<Levels>& levels(ItemId i) const { return per_item_.at(i); }

  // Throws ConfigError when v is not a grid value of (i, a).
  std::size_t level_of(ItemId i, AttrId a, double v) const;
  const UserBitset& at_least(ItemId i, AttrId a, std::size_t level) const;
  const UserBitset& exactly(ItemId i, AttrId a, std::size_t level) const;

  // Users on whose history every item is present and every quantification
  // holds (each independently, on some transaction of its item). In eq mode
  // the quantification on `exact_item` must match exactly.
  UserBitset matching_histories(std::span<const ItemId> items, std::span<const Quantification> q,
                                Mode mode = Mode::geq, std::optional<ItemId> exact_item = std::nullopt) const;

  // Per (item, attr), the largest grid value implied by presence alone.
  ImpliedBounds implied_bounds() const;

 private:
  std::size_t universe_ = 0;
  std::vector<UserBitset> presence_;
  std::vector<std::vector<Levels>> per_item_;
};

SupportIndex build_index(const Dataset& d, const ValueIndex& vi);

// Smallest match count whose fraction of n reaches s; absorbs the rounding
// error of fractions like 1.5 * 10 / 3510.
std::size_t min_support_count(double s, std::size_t n);

// Rule evaluation through the index.
double support(const SupportIndex& idx, const Rule& r);
double confidence(const SupportIndex& idx, const Rule& r);
RuleMetrics evaluate(const SupportIndex& idx, const Rule& r);

}  // namespace qarma
