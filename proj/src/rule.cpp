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

#include "qarma/rule.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "qarma/error.hpp"

namespace qarma {

using nlohmann::json;

std::string_view to_string(Mode m) { return m == Mode::geq ? "geq" : "eq"; }

Mode parse_mode(std::string_view s) {
  if (s == "geq") return Mode::geq;
  if (s == "eq") return Mode::eq;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::support: return "support";
    case Metric::confidence: return "confidence";
    case Metric::conviction: return "conviction";
    case Metric::lift: return "lift";
    case Metric::leverage: return "leverage";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (auto m : {Metric::support, Metric::confidence, Metric::conviction, Metric::lift, Metric::leverage})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

std::optional<double> Rule::consequent_value() const {
  for (const auto& t : q)
    if (t.item == consequent) return t.value;
  return std::nullopt;
}

bool Rule::in_antecedent(ItemId i) const { return std::binary_search(antecedent.begin(), antecedent.end(), i); }

const Quantification* Rule::find(ItemId i, AttrId a) const {
  for (const auto& t : q)
    if (t.item == i && t.attr == a) return &t;
  return nullptr;
}

void Rule::normalize(AttrId shared_attr) {
  std::sort(antecedent.begin(), antecedent.end());
  if (std::adjacent_find(antecedent.begin(), antecedent.end()) != antecedent.end())
    throw ConfigError("duplicate antecedent item");
  if (in_antecedent(consequent)) throw ConfigError("consequent item also in antecedent");
  std::sort(q.begin(), q.end(), [](const auto& a, const auto& b) { return std::tie(a.item, a.attr) < std::tie(b.item, b.attr); });
  for (std::size_t k = 1; k < q.size(); ++k)
    if (q[k].item == q[k - 1].item && q[k].attr == q[k - 1].attr) throw ConfigError("quantification key repeated");
  for (const auto& t : q) {
    if (t.item == consequent) {
      if (t.attr != shared_attr) throw ConfigError("consequent may only constrain the shared attribute");
    } else if (!in_antecedent(t.item)) {
      throw ConfigError("quantification on an item outside the rule");
    }
  }
}

RuleMetrics metrics_from_counts(std::size_t joint, std::size_t antecedent, std::size_t consequent, std::size_t n) {
  if (n == 0) throw UndefinedMetricError("empty dataset");
  if (antecedent == 0) throw UndefinedMetricError("confidence undefined: antecedent matches no history");
  if (consequent == 0) throw UndefinedMetricError("lift undefined: consequent matches no history");
  RuleMetrics m;
  const auto dn = static_cast<double>(n);
  m.joint_count = joint;
  m.antecedent_count = antecedent;
  m.consequent_count = consequent;
  m.universe = n;
  m.support = static_cast<double>(joint) / dn;
  m.confidence = static_cast<double>(joint) / static_cast<double>(antecedent);
  m.cons_supp = static_cast<double>(consequent) / dn;
  m.conviction = joint == antecedent ? std::numeric_limits<double>::infinity() : (1.0 - m.cons_supp) / (1.0 - m.confidence);
  m.lift = m.confidence / m.cons_supp;
  m.leverage = m.support - (static_cast<double>(antecedent) / dn) * m.cons_supp;
  return m;
}

double metric_value(const RuleMetrics& m, Metric which) {
  switch (which) {
    case Metric::support: return m.support;
    case Metric::confidence: return m.confidence;
    case Metric::conviction: return m.conviction;
    case Metric::lift: return m.lift;
    case Metric::leverage: return m.leverage;
  }
  return 0.0;
}

void ImpliedBounds::set(ItemId i, AttrId a, double v) {
  if (per_item_.size() <= i) per_item_.resize(i + 1);
  for (auto& [attr, bound] : per_item_[i])
    if (attr == a) {
      bound = v;
      return;
    }
  per_item_[i].emplace_back(a, v);
}

bool ImpliedBounds::implied(const Quantification& t) const {
  if (t.item >= per_item_.size()) return false;
  for (const auto& [attr, bound] : per_item_[t.item])
    if (attr == t.attr) return t.value <= bound;
  return false;
}

namespace {

bool consequent_ok(const Rule& rp, const Rule& r) {
  const auto vp = rp.consequent_value();
  const auto v = r.consequent_value();
  if (r.mode == Mode::eq) return vp == v;
  if (!v) return true;
  return vp && *vp >= *v;
}

// Every antecedent quantification of rp has a counterpart in r at least as tight.
bool covering_ok(const Rule& rp, const Rule& r, const ImpliedBounds* implied) {
  for (const auto& w : rp.q) {
    if (w.item == rp.consequent) continue;
    if (implied && implied->implied(w)) continue;
    const auto* v = r.find(w.item, w.attr);
    if (!v || !(w.value <= v->value)) return false;
  }
  return true;
}

bool structurally_wider(const Rule& rp, const Rule& r, const ImpliedBounds* implied) {
  if (rp.mode != r.mode) throw ConfigError("dominance between rules of different modes");
  if (rp.consequent != r.consequent) return false;
  if (!consequent_ok(rp, r)) return false;
  if (!std::includes(r.antecedent.begin(), r.antecedent.end(), rp.antecedent.begin(), rp.antecedent.end())) return false;
  return covering_ok(rp, r, implied);
}

}  // namespace

bool dominates(const ScoredRule& rp, const ScoredRule& r, const DominanceOptions& opts) {
  if (rp.rule.mode != r.rule.mode) throw ConfigError("dominance between rules of different modes");
  if (rp.rule.consequent != r.rule.consequent) return false;
  if (!(r.metrics.support <= rp.metrics.support)) return false;
  for (auto m : opts.ltf)
    if (!(metric_value(r.metrics, m) <= metric_value(rp.metrics, m))) return false;
  return structurally_wider(rp.rule, r.rule, opts.implied);
}

bool wider(const Rule& rp, const Rule& r, const ImpliedBounds* implied) { return structurally_wider(rp, r, implied); }

bool canonical_less(const Rule& a, const Rule& b) {
  auto key = [](const Rule& r) { return std::tie(r.consequent, r.antecedent); };
  if (key(a) != key(b)) return key(a) < key(b);
  if (a.q.size() != b.q.size()) return a.q.size() < b.q.size();
  for (std::size_t k = 0; k < a.q.size(); ++k) {
    const auto& x = a.q[k];
    const auto& y = b.q[k];
    if (std::tie(x.item, x.attr, x.value) != std::tie(y.item, y.attr, y.value))
      return std::tie(x.item, x.attr, x.value) < std::tie(y.item, y.attr, y.value);
  }
  return a.mode < b.mode;
}

namespace {

double sort_value(const Rule& r) {
  auto v = r.consequent_value();
  return v ? *v : -std::numeric_limits<double>::infinity();
}

}  // namespace

bool RuleStore::group_dominates(const Group& g, const ScoredRule& r) const {
  const double v = sort_value(r.rule);
  for (const auto& s : g) {
    const double sv = sort_value(s.rule);
    if (sv < v) break;  // descending: nothing further can dominate
    if (r.rule.mode == Mode::eq && sv != v) continue;
    if (dominates(s, r, opts_) && !(dominates(r, s, opts_) && canonical_less(r.rule, s.rule))) return true;
  }
  return false;
}

bool RuleStore::has_dominator(const ScoredRule& r) const {
  auto it = buckets_.find(r.rule.consequent);
  if (it == buckets_.end()) return false;
  const auto& groups = it->second.groups;
  const auto& ante = r.rule.antecedent;
  if (ante.size() > 16) {
    for (const auto& [key, g] : groups)
      if (std::includes(ante.begin(), ante.end(), key.begin(), key.end()) && group_dominates(g, r)) return true;
    return false;
  }
  // A dominator's antecedent is a subset of r's.
  std::vector<ItemId> key;
  for (std::uint32_t mask = 0; mask < (1u << ante.size()); ++mask) {
    key.clear();
    for (std::size_t k = 0; k < ante.size(); ++k)
      if (mask & (1u << k)) key.push_back(ante[k]);
    auto g = groups.find(key);
    if (g != groups.end() && group_dominates(g->second, r)) return true;
  }
  return false;
}

bool RuleStore::insert_if_undominated(ScoredRule r) {
  if (has_dominator(r)) return false;
  auto& b = buckets_[r.rule.consequent];
  const double v = sort_value(r.rule);
  const auto& ante = r.rule.antecedent;

  // Groups whose antecedent contains r's.
  std::vector<std::vector<ItemId>> supersets;
  if (ante.empty()) {
    for (const auto& [key, _] : b.groups) supersets.push_back(key);
  } else {
    const std::set<std::vector<ItemId>>* smallest = nullptr;
    for (ItemId i : ante) {
      auto it = b.by_item.find(i);
      if (it == b.by_item.end()) {
        smallest = nullptr;
        break;
      }
      if (!smallest || it->second.size() < smallest->size()) smallest = &it->second;
    }
    if (smallest)
      for (const auto& key : *smallest)
        if (std::includes(key.begin(), key.end(), ante.begin(), ante.end())) supersets.push_back(key);
  }
  for (const auto& key : supersets) {
    auto g = b.groups.find(key);
    size_ -= std::erase_if(g->second, [&](const ScoredRule& s) {
      const double sv = sort_value(s.rule);
      if (sv > v || (r.rule.mode == Mode::eq && sv != v)) return false;
      return dominates(r, s, opts_);
    });
    if (g->second.empty() && key != ante) {
      for (ItemId i : key) b.by_item[i].erase(key);
      b.groups.erase(g);
    }
  }

  auto [g, fresh] = b.groups.try_emplace(ante);
  if (fresh)
    for (ItemId i : ante) b.by_item[i].insert(ante);
  auto pos = std::find_if(g->second.begin(), g->second.end(), [&](const ScoredRule& s) { return sort_value(s.rule) < v; });
  g->second.insert(pos, std::move(r));
  ++size_;
  return true;
}

std::vector<ScoredRule> RuleStore::bucket(ItemId consequent) const {
  std::vector<ScoredRule> out;
  auto it = buckets_.find(consequent);
  if (it == buckets_.end()) return out;
  for (const auto& [_, g] : it->second.groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

std::vector<ScoredRule> RuleStore::rules() const {
  std::vector<ScoredRule> out;
  out.reserve(size_);
  for (const auto& [_, b] : buckets_)
    for (const auto& [_, g] : b.groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

std::vector<ScoredRule> final_prune(std::vector<ScoredRule> rules, const DominanceOptions& opts) {
  RuleStore store(opts);
  for (auto& r : rules) store.insert_if_undominated(std::move(r));
  return store.rules();
}

std::vector<ScoredRule> widest_filter(std::vector<ScoredRule> rules, const ImpliedBounds* implied) {
  std::map<ItemId, std::vector<std::size_t>> by_consequent;
  for (std::size_t k = 0; k < rules.size(); ++k) by_consequent[rules[k].rule.consequent].push_back(k);
  std::vector<bool> drop(rules.size(), false);
  for (const auto& [_, idx] : by_consequent)
    for (auto k : idx)
      for (auto j : idx) {
        if (j == k) continue;
        const auto& rp = rules[j].rule;
        const auto& r = rules[k].rule;
        if (rp == r) {
          if (j < k) {
            drop[k] = true;
            break;
          }
          continue;
        }
        if (wider(rp, r, implied) && !(wider(r, rp, implied) && canonical_less(r, rp))) {
          drop[k] = true;
          break;
        }
      }
  std::vector<ScoredRule> out;
  for (std::size_t k = 0; k < rules.size(); ++k)
    if (!drop[k]) out.push_back(std::move(rules[k]));
  return out;
}

DisplayRule generalize(const Rule& r, const ValueIndex& vi) {
  DisplayRule out{r.antecedent, r.consequent, {}, r.mode};
  for (const auto& t : r.q) {
    DisplayBound b{t.item, t.attr, t.value, false};
    const bool exact = r.mode == Mode::eq && t.item == r.consequent;
    if (!exact) {
      const auto& vals = vi.values(t.item, t.attr);
      auto it = std::lower_bound(vals.begin(), vals.end(), t.value);
      if (it != vals.begin()) {
        b.bound = *std::prev(it);
        b.strict = true;
      }
    }
    out.bounds.push_back(b);
  }
  return out;
}

std::string format_number(double v, NumberStyle style) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  if (style == NumberStyle::report) {
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
  }
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string condition(const Dataset& d, ItemId item, const std::vector<std::pair<std::string, double>>& conds,
                      const std::vector<std::string>& ops) {
  std::string s = d.item_name(item);
  for (std::size_t k = 0; k < conds.size(); ++k)
    s += "[" + conds[k].first + ops[k] + format_number(conds[k].second, NumberStyle::exact) + "]";
  return s;
}

template <typename Bound, typename OpFn>
std::string render(const std::vector<ItemId>& antecedent, ItemId consequent, const std::vector<Bound>& bounds,
                   const Dataset& d, OpFn op) {
  auto item_text = [&](ItemId i) {
    std::vector<std::pair<std::string, double>> conds;
    std::vector<std::string> ops;
    for (const auto& b : bounds)
      if (b.item == i) {
        conds.emplace_back(d.attr_name(b.attr), b.value_or_bound());
        ops.push_back(op(b));
      }
    return condition(d, i, conds, ops);
  };
  std::string s;
  for (std::size_t k = 0; k < antecedent.size(); ++k) {
    if (k) s += " AND ";
    s += item_text(antecedent[k]);
  }
  return s + " -> " + item_text(consequent);
}

struct QView {
  const Quantification& t;
  ItemId item;
  AttrId attr;
  double value_or_bound() const { return t.value; }
};

struct BView {
  const DisplayBound& b;
  ItemId item;
  AttrId attr;
  double value_or_bound() const { return b.bound; }
};

}  // namespace

std::string to_string(const Rule& r, const Dataset& d) {
  std::vector<QView> views;
  for (const auto& t : r.q) views.push_back(QView{t, t.item, t.attr});
  return render(r.antecedent, r.consequent, views, d, [&](const QView& v) {
    return (r.mode == Mode::eq && v.item == r.consequent) ? std::string("=") : std::string(">=");
  });
}

std::string to_string(const DisplayRule& r, const Dataset& d) {
  std::vector<BView> views;
  for (const auto& b : r.bounds) views.push_back(BView{b, b.item, b.attr});
  return render(r.antecedent, r.consequent, views, d, [&](const BView& v) {
    if (r.mode == Mode::eq && v.item == r.consequent) return std::string("=");
    return v.b.strict ? std::string(">") : std::string(">=");
  });
}

std::string to_json_line(const ScoredRule& sr, const Dataset& d, NumberStyle style) {
  const auto& r = sr.rule;
  const auto& m = sr.metrics;
  auto str = [](const std::string& s) { return json(s).dump(); };
  std::string out = "{\"B\":[";
  for (std::size_t k = 0; k < r.antecedent.size(); ++k) {
    if (k) out += ',';
    out += str(d.item_name(r.antecedent[k]));
  }
  out += "],\"I\":" + str(d.item_name(r.consequent)) + ",\"Q\":[";
  for (std::size_t k = 0; k < r.q.size(); ++k) {
    if (k) out += ',';
    out += "[" + str(d.item_name(r.q[k].item)) + "," + str(d.attr_name(r.q[k].attr)) + "," +
           format_number(r.q[k].value, NumberStyle::exact) + "]";
  }
  out += "],\"mode\":\"" + std::string(to_string(r.mode)) + "\"";
  auto num = [&](const char* key, double v) {
    out += ",\"";
    out += key;
    out += "\":";
    out += std::isinf(v) ? "\"inf\"" : format_number(v, style);
  };
  num("support", m.support);
  num("confidence", m.confidence);
  num("cons_supp", m.cons_supp);
  num("conviction", m.conviction);
  num("lift", m.lift);
  num("leverage", m.leverage);
  out += '}';
  return out;
}

ScoredRule parse_rule_line(std::string_view line, const Dataset& d) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw IngestError(std::string("bad rule line: ") + e.what());
  }
  auto item = [&](const json& v) {
    const auto name = v.get<std::string>();
    auto id = d.find_item(name);
    if (!id) throw IngestError("rule mentions unknown item '" + name + "'");
    return *id;
  };
  ScoredRule sr;
  try {
    for (const auto& b : j.at("B")) sr.rule.antecedent.push_back(item(b));
    sr.rule.consequent = item(j.at("I"));
    for (const auto& t : j.at("Q")) {
      const auto attr_name = t.at(1).get<std::string>();
      auto attr = d.find_attr(attr_name);
      if (!attr) throw IngestError("rule mentions unknown attribute '" + attr_name + "'");
      sr.rule.q.push_back(Quantification{item(t.at(0)), *attr, t.at(2).get<double>()});
    }
    sr.rule.mode = j.contains("mode") ? parse_mode(j["mode"].get<std::string>()) : Mode::geq;
    auto num = [&](const char* key) {
      if (!j.contains(key)) return 0.0;
      const auto& v = j[key];
      if (v.is_string()) {
        if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw IngestError(std::string("bad value for ") + key);
      }
      return v.get<double>();
    };
    auto& m = sr.metrics;
    m.support = num("support");
    m.confidence = num("confidence");
    m.cons_supp = num("cons_supp");
    m.conviction = num("conviction");
    m.lift = num("lift");
    m.leverage = num("leverage");
  } catch (const json::exception& e) {
    throw IngestError(std::string("bad rule line: ") + e.what());
  }
  try {
    sr.rule.normalize(d.shared_attr());
  } catch (const ConfigError& e) {
    throw IngestError(std::string("bad rule line: ") + e.what());
  }
  return sr;
}

void sort_canonical(std::vector<ScoredRule>& rules, const Dataset& d) {
  auto names = [&](const Rule& r) {
    std::vector<std::string> n;
    for (auto i : r.antecedent) n.push_back(d.item_name(i));
    std::sort(n.begin(), n.end());
    return n;
  };
  auto qkey = [&](const Rule& r) {
    std::vector<std::tuple<std::string, std::string, double>> k;
    for (const auto& t : r.q) k.emplace_back(d.item_name(t.item), d.attr_name(t.attr), t.value);
    std::sort(k.begin(), k.end());
    return k;
  };
  std::stable_sort(rules.begin(), rules.end(), [&](const ScoredRule& a, const ScoredRule& b) {
    const auto& ra = a.rule;
    const auto& rb = b.rule;
    if (ra.consequent != rb.consequent) return d.item_name(ra.consequent) < d.item_name(rb.consequent);
    const double va = sort_value(ra), vb = sort_value(rb);
    if (va != vb) return va > vb;
    auto na = names(ra), nb = names(rb);
    if (na != nb) return na < nb;
    auto qa = qkey(ra), qb = qkey(rb);
    if (qa != qb) return qa < qb;
    return ra.mode < rb.mode;
  });
}

void write_rules(std::ostream& out, std::vector<ScoredRule> rules, const Dataset& d, NumberStyle style) {
  sort_canonical(rules, d);
  for (const auto& r : rules) out << to_json_line(r, d, style) << '\n';
}

std::vector<ScoredRule> read_rules(std::istream& in, const Dataset& d) {
  std::vector<ScoredRule> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_rule_line(line, d));
  }
  return out;
}

std::vector<ScoredRule> read_rules_file(const std::string& path, const Dataset& d) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  return read_rules(in, d);
}

}  // namespace qarma
