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
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qarma {

using ItemId = std::uint32_t;
using AttrId = std::uint32_t;
using UserIndex = std::uint32_t;

enum class AttrKind { quantitative, categorical };

struct Range {
  double lower;
  double upper;
};

struct AttributeDecl {
  AttrId attr;
  AttrKind kind = AttrKind::quantitative;
  std::optional<Range> declared_range;
};

struct ItemInfo {
  std::string name;
  std::vector<AttributeDecl> attrs;  // declaration order

  const AttributeDecl* find(AttrId a) const;
  bool is_quantitative(AttrId a) const;
};

struct Transaction {
  ItemId item = 0;
  std::vector<std::pair<AttrId, double>> attrs;

  std::optional<double> value(AttrId a) const;
};

struct UserHistory {
  std::string user;
  std::vector<Transaction> transactions;
};

// A database of user histories. Histories are indexed densely by position,
// items and attribute names are interned to small integer ids.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::string shared_attr);

  std::vector<UserHistory> histories;
  std::vector<ItemInfo> items;

  std::size_t num_users() const { return histories.size(); }
  std::size_t num_items() const { return items.size(); }
  std::size_t num_transactions() const;

  AttrId shared_attr() const { return shared_attr_; }
  const std::string& shared_attr_name() const { return attr_names_[shared_attr_]; }

  const std::string& item_name(ItemId i) const { return items[i].name; }
  const std::string& attr_name(AttrId a) const { return attr_names_[a]; }
  std::size_t num_attr_names() const { return attr_names_.size(); }

  std::optional<ItemId> find_item(std::string_view name) const;
  std::optional<AttrId> find_attr(std::string_view name) const;
  std::optional<UserIndex> find_user(std::string_view key) const;

  ItemId intern_item(std::string_view name);
  AttrId intern_attr(std::string_view name);

  // Appends a history; throws IngestError on a duplicate user key.
  UserIndex add_history(UserHistory h);
  // Returns the index for key, creating an empty history if needed.
  UserIndex history_for(std::string_view key);

  // Declares attribute a on item i if not yet declared.
  void declare(ItemId i, AttrId a, AttrKind kind, std::optional<Range> range = std::nullopt);

 private:
  std::vector<std::string> attr_names_;
  std::unordered_map<std::string, ItemId> item_ids_;
  std::unordered_map<std::string, AttrId> attr_ids_;
  std::unordered_map<std::string, UserIndex> user_ids_;
  AttrId shared_attr_ = 0;
};

// Suffix appended to an attribute name for its negated companion.
inline constexpr std::string_view kNegatedSuffix = "⁻";

std::string negated_name(std::string_view attr);

// Reads the line-oriented history format:
//   {"u": "<user>", "t": [{"i": "<item>", "a": {"<attr>": <number>, ...}}, ...]}
// Records for the same user key are merged in order of appearance.
Dataset load_dataset(std::istream& in, std::string_view shared_attr);
Dataset load_dataset_file(const std::string& path, std::string_view shared_attr);

// Writes the same format, one history per line, in user index order.
void write_dataset(std::ostream& out, const Dataset& d);

// Adds attr⁻ = -attr to every transaction carrying attr.
Dataset augment_negated(Dataset d, std::string_view attr);

// Replaces values of attr by the lower edge of their equal-width bin over
// the observed [min, max] of each (item, attr).
Dataset discretize(Dataset d, std::string_view attr, std::size_t bins);

// MovieLens "user::movie::rating::timestamp" records. Items are movies, the
// shared attribute is "rating".
Dataset load_movielens(std::istream& in);
Dataset load_movielens_file(const std::string& path);

// Strictly ascending distinct values per (item, attribute).
class ValueIndex {
 public:
  struct Entry {
    AttrId attr;
    std::vector<double> values;
  };

  ValueIndex() = default;
  explicit ValueIndex(const Dataset& d);

  const std::vector<double>& values(ItemId i, AttrId a) const;
  // Index of v in values(i, a), if v is one of them.
  std::optional<std::size_t> level_of(ItemId i, AttrId a, double v) const;
  const std::vector<Entry>& entries(ItemId i) const { return per_item_[i]; }
  std::size_t num_items() const { return per_item_.size(); }

 private:
  std::vector<std::vector<Entry>> per_item_;
};

ValueIndex build_value_index(const Dataset& d);

// FNV-1a over the bytes of a file; used to verify that remote workers see
// the same data.
std::uint64_t file_digest(const std::string& path);

}  // namespace qarma
