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

#include "qarma/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "qarma/error.hpp"

namespace qarma {

using nlohmann::json;

const AttributeDecl* ItemInfo::find(AttrId a) const {
  for (const auto& d : attrs)
    if (d.attr == a) return &d;
  return nullptr;
}

bool ItemInfo::is_quantitative(AttrId a) const {
  const auto* d = find(a);
  return d && d->kind == AttrKind::quantitative;
}

std::optional<double> Transaction::value(AttrId a) const {
  for (const auto& [id, v] : attrs)
    if (id == a) return v;
  return std::nullopt;
}

Dataset::Dataset(std::string shared_attr) { shared_attr_ = intern_attr(shared_attr); }

std::size_t Dataset::num_transactions() const {
  std::size_t n = 0;
  for (const auto& h : histories) n += h.transactions.size();
  return n;
}

std::optional<ItemId> Dataset::find_item(std::string_view name) const {
  auto it = item_ids_.find(std::string(name));
  if (it == item_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<AttrId> Dataset::find_attr(std::string_view name) const {
  auto it = attr_ids_.find(std::string(name));
  if (it == attr_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<UserIndex> Dataset::find_user(std::string_view key) const {
  auto it = user_ids_.find(std::string(key));
  if (it == user_ids_.end()) return std::nullopt;
  return it->second;
}

ItemId Dataset::intern_item(std::string_view name) {
  auto [it, fresh] = item_ids_.try_emplace(std::string(name), static_cast<ItemId>(items.size()));
  if (fresh) items.push_back(ItemInfo{std::string(name), {}});
  return it->second;
}

AttrId Dataset::intern_attr(std::string_view name) {
  auto [it, fresh] = attr_ids_.try_emplace(std::string(name), static_cast<AttrId>(attr_names_.size()));
  if (fresh) attr_names_.emplace_back(name);
  return it->second;
}

UserIndex Dataset::add_history(UserHistory h) {
  auto idx = static_cast<UserIndex>(histories.size());
  if (!user_ids_.try_emplace(h.user, idx).second) throw IngestError("duplicate user key '" + h.user + "'");
  histories.push_back(std::move(h));
  return idx;
}

UserIndex Dataset::history_for(std::string_view key) {
  auto [it, fresh] = user_ids_.try_emplace(std::string(key), static_cast<UserIndex>(histories.size()));
  if (fresh) histories.push_back(UserHistory{std::string(key), {}});
  return it->second;
}

void Dataset::declare(ItemId i, AttrId a, AttrKind kind, std::optional<Range> range) {
  auto& info = items.at(i);
  if (info.find(a)) return;
  if (range && range->lower > range->upper) throw ConfigError("declared range with lower > upper");
  info.attrs.push_back(AttributeDecl{a, kind, range});
}

std::string negated_name(std::string_view attr) { return std::string(attr) + std::string(kNegatedSuffix); }

namespace {

std::string user_key(const json& u) {
  if (u.is_string()) return u.get<std::string>();
  if (u.is_number_integer()) return std::to_string(u.get<long long>());
  throw IngestError("user key must be a string");
}

void ingest_transaction(Dataset& d, const std::string& user, const json& t, Transaction& out) {
  if (!t.is_object() || !t.contains("i") || !t["i"].is_string())
    throw IngestError("user '" + user + "': transaction without string field \"i\"");
  const auto item_name = t["i"].get<std::string>();
  const ItemId item = d.intern_item(item_name);
  out.item = item;
  if (t.contains("a")) {
    const auto& attrs = t["a"];
    if (!attrs.is_object()) throw IngestError("user '" + user + "', item '" + item_name + "': \"a\" must be an object");
    for (const auto& [name, value] : attrs.items()) {
      const AttrId a = d.intern_attr(name);
      const auto* decl = d.items[item].find(a);
      if (value.is_number()) {
        if (decl && decl->kind == AttrKind::categorical)
          throw IngestError("user '" + user + "', item '" + item_name + "': numeric value for categorical attribute '" + name + "'");
        d.declare(item, a, AttrKind::quantitative);
        out.attrs.emplace_back(a, value.get<double>());
      } else if (value.is_string()) {
        if (decl && decl->kind == AttrKind::quantitative)
          throw IngestError("user '" + user + "', item '" + item_name + "': non-numeric value for quantitative attribute '" + name + "'");
        d.declare(item, a, AttrKind::categorical);
      } else {
        throw IngestError("user '" + user + "', item '" + item_name + "': unsupported value for attribute '" + name + "'");
      }
    }
  }
  if (!out.value(d.shared_attr()))
    throw IngestError("user '" + user + "', item '" + item_name + "': missing shared attribute '" + d.shared_attr_name() + "'");
}

}  // namespace

Dataset load_dataset(std::istream& in, std::string_view shared_attr) {
  Dataset d{std::string(shared_attr)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("u")) throw IngestError("line " + std::to_string(lineno) + ": record without \"u\"");
    const auto user = user_key(rec["u"]);
    const auto idx = d.history_for(user);
    if (!rec.contains("t")) continue;
    if (!rec["t"].is_array()) throw IngestError("line " + std::to_string(lineno) + ": \"t\" must be an array");
    for (const auto& t : rec["t"]) {
      Transaction tr;
      ingest_transaction(d, user, t, tr);
      d.histories[idx].transactions.push_back(std::move(tr));
    }
  }
  return d;
}

Dataset load_dataset_file(const std::string& path, std::string_view shared_attr) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  return load_dataset(in, shared_attr);
}

void write_dataset(std::ostream& out, const Dataset& d) {
  for (const auto& h : d.histories) {
    json rec;
    rec["u"] = h.user;
    rec["t"] = json::array();
    for (const auto& t : h.transactions) {
      json a = json::object();
      for (const auto& [attr, v] : t.attrs) a[d.attr_name(attr)] = v;
      rec["t"].push_back(json{{"i", d.item_name(t.item)}, {"a", std::move(a)}});
    }
    out << rec.dump() << '\n';
  }
}

Dataset augment_negated(Dataset d, std::string_view attr) {
  const auto src = d.find_attr(attr);
  bool declared = false;
  if (src)
    for (const auto& item : d.items) declared = declared || item.is_quantitative(*src);
  if (!declared) throw ConfigError("attribute '" + std::string(attr) + "' is not declared quantitative on any item");
  const auto neg_name = negated_name(attr);
  if (auto existing = d.find_attr(neg_name)) {
    for (const auto& item : d.items)
      if (item.find(*existing)) throw ConfigError("attribute '" + neg_name + "' already present");
  }
  const AttrId neg = d.intern_attr(neg_name);
  for (ItemId i = 0; i < d.items.size(); ++i) {
    const auto* decl = d.items[i].find(*src);
    if (!decl || decl->kind != AttrKind::quantitative) continue;
    std::optional<Range> r;
    if (decl->declared_range) r = Range{-decl->declared_range->upper, -decl->declared_range->lower};
    d.declare(i, neg, AttrKind::quantitative, r);
  }
  for (auto& h : d.histories)
    for (auto& t : h.transactions)
      if (auto v = t.value(*src)) t.attrs.emplace_back(neg, *v == 0.0 ? 0.0 : -*v);
  return d;
}

Dataset discretize(Dataset d, std::string_view attr, std::size_t bins) {
  if (bins == 0) throw ConfigError("bins must be positive");
  const auto a = d.find_attr(attr);
  bool declared = false;
  if (a)
    for (const auto& item : d.items) declared = declared || item.is_quantitative(*a);
  if (!declared) throw ConfigError("attribute '" + std::string(attr) + "' is not present");

  std::vector<double> lo(d.items.size(), HUGE_VAL), hi(d.items.size(), -HUGE_VAL);
  for (const auto& h : d.histories)
    for (const auto& t : h.transactions)
      if (auto v = t.value(*a)) {
        lo[t.item] = std::min(lo[t.item], *v);
        hi[t.item] = std::max(hi[t.item], *v);
      }
  for (auto& h : d.histories)
    for (auto& t : h.transactions)
      for (auto& [id, v] : t.attrs) {
        if (id != *a) continue;
        const double width = (hi[t.item] - lo[t.item]) / static_cast<double>(bins);
        if (width <= 0.0) continue;
        auto bin = static_cast<std::size_t>(std::floor((v - lo[t.item]) / width));
        bin = std::min(bin, bins - 1);
        v = lo[t.item] + static_cast<double>(bin) * width;
      }
  return d;
}

Dataset load_movielens(std::istream& in) {
  Dataset d{"rating"};
  const AttrId rating = d.shared_attr();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      auto next = line.find("::", pos);
      fields.push_back(line.substr(pos, next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    if (fields.size() != 4) throw IngestError("line " + std::to_string(lineno) + ": expected user::movie::rating::timestamp");
    int r = 0;
    try {
      std::size_t used = 0;
      r = std::stoi(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IngestError("line " + std::to_string(lineno) + ": rating '" + fields[2] + "' is not an integer");
    }
    if (r < 1 || r > 5) throw IngestError("line " + std::to_string(lineno) + ": rating " + std::to_string(r) + " outside 1..5");
    const ItemId item = d.intern_item(fields[1]);
    d.declare(item, rating, AttrKind::quantitative, Range{1.0, 5.0});
    const auto u = d.history_for(fields[0]);
    d.histories[u].transactions.push_back(Transaction{item, {{rating, static_cast<double>(r)}}});
  }
  if (d.histories.empty()) throw IngestError("no ratings found");
  return d;
}

Dataset load_movielens_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  return load_movielens(in);
}

ValueIndex::ValueIndex(const Dataset& d) : per_item_(d.items.size()) {
  // (item, attr) -> values, collected in declaration order
  for (ItemId i = 0; i < d.items.size(); ++i)
    for (const auto& decl : d.items[i].attrs)
      if (decl.kind == AttrKind::quantitative) per_item_[i].push_back(Entry{decl.attr, {}});
  for (const auto& h : d.histories)
    for (const auto& t : h.transactions)
      for (const auto& [a, v] : t.attrs)
        for (auto& e : per_item_[t.item])
          if (e.attr == a) {
            e.values.push_back(v);
            break;
          }
  for (auto& entries : per_item_) {
    for (auto& e : entries) {
      std::sort(e.values.begin(), e.values.end());
      e.values.erase(std::unique(e.values.begin(), e.values.end()), e.values.end());
    }
    std::erase_if(entries, [](const Entry& e) { return e.values.empty(); });
  }
}

const std::vector<double>& ValueIndex::values(ItemId i, AttrId a) const {
  static const std::vector<double> kEmpty;
  if (i >= per_item_.size()) return kEmpty;
  for (const auto& e : per_item_[i])
    if (e.attr == a) return e.values;
  return kEmpty;
}

std::optional<std::size_t> ValueIndex::level_of(ItemId i, AttrId a, double v) const {
  const auto& vals = values(i, a);
  auto it = std::lower_bound(vals.begin(), vals.end(), v);
  if (it == vals.end() || *it != v) return std::nullopt;
  return static_cast<std::size_t>(it - vals.begin());
}

ValueIndex build_value_index(const Dataset& d) { return ValueIndex(d); }

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace qarma
