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

#include "qarma/support_index.hpp"

#include <algorithm>
#include <cmath>

#include "qarma/error.hpp"

namespace qarma {

SupportIndex::SupportIndex(const Dataset& d, const ValueIndex& vi)
    : universe_(d.num_users()), presence_(d.num_items(), UserBitset(d.num_users())), per_item_(d.num_items()) {
  for (ItemId i = 0; i < d.num_items(); ++i)
    for (const auto& e : vi.entries(i)) {
      Levels lv{e.attr, e.values, {}, {}};
      lv.at_least.assign(e.values.size(), UserBitset(universe_));
      lv.exactly.assign(e.values.size(), UserBitset(universe_));
      per_item_[i].push_back(std::move(lv));
    }
  for (UserIndex u = 0; u < d.num_users(); ++u)
    for (const auto& t : d.histories[u].transactions) {
      presence_[t.item].set(u);
      for (const auto& [a, v] : t.attrs)
        for (auto& lv : per_item_[t.item])
          if (lv.attr == a) {
            auto it = std::lower_bound(lv.values.begin(), lv.values.end(), v);
            lv.exactly[static_cast<std::size_t>(it - lv.values.begin())].set(u);
            break;
          }
    }
  // at_least(j) = union of exactly(j..n-1), built from the top down
  for (auto& item_levels : per_item_)
    for (auto& lv : item_levels) {
      const auto n = lv.values.size();
      lv.at_least[n - 1] = lv.exactly[n - 1];
      for (std::size_t j = n - 1; j-- > 0;) lv.at_least[j] = lv.at_least[j + 1] | lv.exactly[j];
    }
}

const SupportIndex::Levels* SupportIndex::levels(ItemId i, AttrId a) const {
  if (i >= per_item_.size()) return nullptr;
  for (const auto& lv : per_item_[i])
    if (lv.attr == a) return &lv;
  return nullptr;
}

std::size_t SupportIndex::level_of(ItemId i, AttrId a, double v) const {
  const auto* lv = levels(i, a);
  if (lv) {
    auto it = std::lower_bound(lv->values.begin(), lv->values.end(), v);
    if (it != lv->values.end() && *it == v) return static_cast<std::size_t>(it - lv->values.begin());
  }
  throw ConfigError("value is not a grid value for the item/attribute");
}

const UserBitset& SupportIndex::at_least(ItemId i, AttrId a, std::size_t level) const {
  const auto* lv = levels(i, a);
  if (!lv) throw ConfigError("no values for item/attribute");
  return lv->at_least.at(level);
}

const UserBitset& SupportIndex::exactly(ItemId i, AttrId a, std::size_t level) const {
  const auto* lv = levels(i, a);
  if (!lv) throw ConfigError("no values for item/attribute");
  return lv->exactly.at(level);
}

UserBitset SupportIndex::matching_histories(std::span<const ItemId> items, std::span<const Quantification> q, Mode mode,
                                            std::optional<ItemId> exact_item) const {
  UserBitset out(universe_);
  for (std::size_t w = 0; w < universe_; ++w) out.set(w);
  for (auto i : items) {
    if (i >= presence_.size()) throw ConfigError("item not in catalog");
    out &= presence_[i];
  }
  for (const auto& t : q) {
    const auto level = level_of(t.item, t.attr, t.value);
    const bool exact = mode == Mode::eq && exact_item && *exact_item == t.item;
    out &= exact ? exactly(t.item, t.attr, level) : at_least(t.item, t.attr, level);
  }
  return out;
}

ImpliedBounds SupportIndex::implied_bounds() const {
  ImpliedBounds out;
  for (ItemId i = 0; i < per_item_.size(); ++i)
    for (const auto& lv : per_item_[i]) {
      std::size_t top = lv.values.size();
      for (std::size_t j = 0; j < lv.values.size() && lv.at_least[j] == presence_[i]; ++j) top = j;
      if (top < lv.values.size()) out.set(i, lv.attr, lv.values[top]);
    }
  return out;
}

std::size_t min_support_count(double s, std::size_t n) {
  const double exact = s * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
}

SupportIndex build_index(const Dataset& d, const ValueIndex& vi) { return SupportIndex(d, vi); }

namespace {

struct Counts {
  std::size_t joint, antecedent, consequent;
};

Counts counts(const SupportIndex& idx, const Rule& r) {
  std::vector<ItemId> all = r.antecedent;
  all.push_back(r.consequent);
  std::vector<Quantification> ante_q, cons_q;
  for (const auto& t : r.q) (t.item == r.consequent ? cons_q : ante_q).push_back(t);
  const auto ante = idx.matching_histories(r.antecedent, ante_q);
  const ItemId cons_item[] = {r.consequent};
  const auto cons = idx.matching_histories(cons_item, cons_q, r.mode, r.consequent);
  return {and_count(ante, cons), ante.count(), cons.count()};
}

}  // namespace

double support(const SupportIndex& idx, const Rule& r) {
  if (idx.universe() == 0) throw UndefinedMetricError("support undefined on an empty dataset");
  return static_cast<double>(counts(idx, r).joint) / static_cast<double>(idx.universe());
}

double confidence(const SupportIndex& idx, const Rule& r) {
  const auto c = counts(idx, r);
  if (c.antecedent == 0) throw UndefinedMetricError("confidence undefined: antecedent matches no history");
  return static_cast<double>(c.joint) / static_cast<double>(c.antecedent);
}

RuleMetrics evaluate(const SupportIndex& idx, const Rule& r) {
  const auto c = counts(idx, r);
  return metrics_from_counts(c.joint, c.antecedent, c.consequent, idx.universe());
}

}  // namespace qarma
