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

#include "qarma/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>

#include "qarma/error.hpp"

namespace qarma {

HistoryView::HistoryView(const UserHistory& h) {
  for (const auto& t : h.transactions) {
    auto& attrs = items_[t.item];
    for (const auto& [a, v] : t.attrs) {
      auto it = std::find_if(attrs.begin(), attrs.end(), [&](const auto& e) { return e.first == a; });
      if (it == attrs.end()) {
        attrs.emplace_back(a, std::vector<double>{});
        it = attrs.end() - 1;
      }
      it->second.push_back(v);
    }
  }
  for (auto& [_, attrs] : items_)
    for (auto& [_, vals] : attrs) std::sort(vals.begin(), vals.end());
}

const std::vector<double>* HistoryView::find(ItemId i, AttrId a) const {
  auto it = items_.find(i);
  if (it == items_.end()) return nullptr;
  for (const auto& [attr, vals] : it->second)
    if (attr == a) return &vals;
  return nullptr;
}

std::optional<double> HistoryView::max(ItemId i, AttrId a) const {
  const auto* v = find(i, a);
  if (!v || v->empty()) return std::nullopt;
  return v->back();
}

bool HistoryView::has_exact(ItemId i, AttrId a, double v) const {
  const auto* vals = find(i, a);
  return vals && std::binary_search(vals->begin(), vals->end(), v);
}

std::vector<HistoryView> history_views(const Dataset& d) {
  std::vector<HistoryView> out;
  out.reserve(d.num_users());
  for (const auto& h : d.histories) out.emplace_back(h);
  return out;
}

bool antecedent_fires(const Rule& r, const HistoryView& h) {
  for (ItemId i : r.antecedent)
    if (!h.has(i)) return false;
  for (const auto& t : r.q) {
    if (t.item == r.consequent) continue;
    const auto m = h.max(t.item, t.attr);
    if (!m || *m < t.value) return false;
  }
  return true;
}

bool covers(const Rule& r, const HistoryView& h) {
  if (!h.has(r.consequent) || !antecedent_fires(r, h)) return false;
  for (const auto& t : r.q) {
    if (t.item != r.consequent) continue;
    if (r.mode == Mode::eq) {
      if (!h.has_exact(t.item, t.attr, t.value)) return false;
    } else {
      const auto m = h.max(t.item, t.attr);
      if (!m || *m < t.value) return false;
    }
  }
  return true;
}

std::vector<ScoredRule> translate_rules(const std::vector<ScoredRule>& rules, const Dataset& from, const Dataset& to) {
  auto item = [&](ItemId i) {
    auto id = to.find_item(from.item_name(i));
    if (!id) throw ConfigError("item '" + from.item_name(i) + "' is not in the target dataset");
    return *id;
  };
  auto attr = [&](AttrId a) {
    auto id = to.find_attr(from.attr_name(a));
    if (!id) throw ConfigError("attribute '" + from.attr_name(a) + "' is not in the target dataset");
    return *id;
  };
  std::vector<ScoredRule> out;
  out.reserve(rules.size());
  for (const auto& r : rules) {
    ScoredRule t = r;
    for (auto& i : t.rule.antecedent) i = item(i);
    t.rule.consequent = item(t.rule.consequent);
    for (auto& q : t.rule.q) {
      q.item = item(q.item);
      q.attr = attr(q.attr);
    }
    t.rule.normalize(to.shared_attr());
    out.push_back(std::move(t));
  }
  return out;
}

double coverage(const std::vector<ScoredRule>& rules, const Dataset& d) {
  if (d.num_users() == 0) throw ConfigError("coverage of an empty dataset");
  std::size_t covered = 0;
  for (const auto& h : d.histories) {
    const HistoryView v(h);
    if (std::any_of(rules.begin(), rules.end(), [&](const auto& r) { return covers(r.rule, v); })) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(d.num_users());
}

std::vector<ScoredRule> predicting_rules(const std::vector<ScoredRule>& rules, ItemId target, double threshold) {
  std::vector<ScoredRule> out;
  for (const auto& r : rules) {
    if (r.rule.consequent != target) continue;
    const auto v = r.rule.consequent_value();
    if (v && *v >= threshold) out.push_back(r);
  }
  return out;
}

namespace {

Detection score(const std::vector<char>& flagged, const std::vector<bool>& labels) {
  Detection det;
  for (std::size_t u = 0; u < labels.size(); ++u) {
    if (labels[u]) {
      flagged[u] ? ++det.tp : ++det.fn;
    } else {
      flagged[u] ? ++det.fp : ++det.tn;
    }
  }
  const auto pos = det.tp + det.fn;
  const auto neg = det.fp + det.tn;
  det.detection = pos ? static_cast<double>(det.tp) / static_cast<double>(pos) : 0.0;
  det.false_alarm = neg ? static_cast<double>(det.fp) / static_cast<double>(neg) : 0.0;
  det.accuracy = labels.empty() ? 0.0 : static_cast<double>(det.tp + det.tn) / static_cast<double>(labels.size());
  return det;
}

void check_labels(const Dataset& d, const std::vector<bool>& labels) {
  if (labels.empty()) throw ConfigError("detection needs ground-truth labels");
  if (labels.size() != d.num_users()) throw ConfigError("label count does not match the dataset");
}

}  // namespace

Detection detect(const std::vector<ScoredRule>& rules, const Dataset& d, const std::vector<bool>& labels, ItemId target,
                 double threshold) {
  check_labels(d, labels);
  const auto pred = predicting_rules(rules, target, threshold);
  std::vector<char> flagged(d.num_users(), 0);
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    const HistoryView v(d.histories[u]);
    flagged[u] = std::any_of(pred.begin(), pred.end(), [&](const auto& r) { return antecedent_fires(r.rule, v); });
  }
  return score(flagged, labels);
}

std::vector<RocPoint> roc(const std::vector<ScoredRule>& rules, const Dataset& d, const std::vector<bool>& labels,
                          ItemId target, double threshold, std::optional<std::vector<double>> cuts) {
  check_labels(d, labels);
  const auto pred = predicting_rules(rules, target, threshold);
  if (!cuts) {
    std::set<double> distinct;
    for (const auto& r : pred) distinct.insert(r.metrics.confidence);
    cuts = distinct.empty() ? std::vector<double>{0.0} : std::vector<double>(distinct.begin(), distinct.end());
  }
  // Per user, the highest confidence among predicting rules that fire.
  std::vector<double> best(d.num_users(), -1.0);
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    const HistoryView v(d.histories[u]);
    for (const auto& r : pred)
      if (r.metrics.confidence > best[u] && antecedent_fires(r.rule, v)) best[u] = r.metrics.confidence;
  }
  std::vector<RocPoint> out;
  for (double cut : *cuts) {
    std::vector<char> flagged(d.num_users(), 0);
    for (std::size_t u = 0; u < best.size(); ++u) flagged[u] = best[u] >= 0.0 && best[u] >= cut;
    out.push_back({cut, score(flagged, labels)});
  }
  return out;
}

void write_roc(std::ostream& out, const std::vector<RocPoint>& points) {
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%.6g\n", p.conf_cut, p.result.detection, p.result.false_alarm,
                  p.result.accuracy);
    out << buf;
  }
}

std::optional<double> estimate_reservation_price(const std::vector<ScoredRule>& rules, const HistoryView& h, ItemId item,
                                                 double min_conf) {
  std::optional<double> best;
  for (const auto& r : rules) {
    if (r.rule.consequent != item || r.metrics.confidence < min_conf) continue;
    const auto v = r.rule.consequent_value();
    if (!v || (best && *v <= *best)) continue;
    if (antecedent_fires(r.rule, h)) best = v;
  }
  return best;
}

ReservationEstimator::ReservationEstimator(const std::vector<ScoredRule>& rules, const Dataset& d, double min_conf)
    : per_user_(d.num_users()) {
  std::vector<const ScoredRule*> usable;
  for (const auto& r : rules)
    if (r.metrics.confidence >= min_conf && r.rule.consequent_value()) usable.push_back(&r);
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    const HistoryView v(d.histories[u]);
    auto& m = per_user_[u];
    for (const auto* r : usable) {
      const double val = *r->rule.consequent_value();
      auto it = m.find(r->rule.consequent);
      if (it != m.end() && it->second >= val) continue;
      if (antecedent_fires(r->rule, v)) m[r->rule.consequent] = val;
    }
  }
}

std::optional<double> ReservationEstimator::operator()(UserIndex u, ItemId i) const {
  if (u >= per_user_.size()) return std::nullopt;
  const auto& m = per_user_[u];
  auto it = m.find(i);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

std::vector<DiscountRow> report_discounting(const MarketState& market, const std::vector<ScoredRule>& rules,
                                            const std::vector<double>& levels, std::size_t cycles, double min_conf) {
  const ReservationEstimator est(rules, market.history, min_conf);
  const double base = run_discounting(market, DiscountPolicy::none(), cycles);
  auto pct = [&](double v) { return base > 0.0 ? 100.0 * (v - base) / base : 0.0; };
  std::vector<DiscountRow> out;
  for (double level : levels) {
    DiscountRow row;
    row.level = level;
    row.baseline = base;
    row.horizontal = run_discounting(market, DiscountPolicy::horizontal(level), cycles);
    row.personalized = run_discounting(
        market, DiscountPolicy::personalized(level, [&](UserIndex u, ItemId i) { return est(u, i); }), cycles);
    row.horizontal_change = pct(row.horizontal);
    row.personalized_change = pct(row.personalized);
    out.push_back(row);
  }
  return out;
}

void write_discount_report(std::ostream& out, const std::vector<DiscountRow>& rows) {
  out << "discount_pct,baseline,horizontal,horizontal_change_pct,personalized,personalized_change_pct\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g,%.2f,%.2f,%.2f,%.2f,%.2f\n", r.level * 100.0, r.baseline, r.horizontal,
                  r.horizontal_change, r.personalized, r.personalized_change);
    out << buf;
  }
}

}  // namespace qarma
