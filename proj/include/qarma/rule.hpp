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

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "qarma/dataset.hpp"

namespace qarma {

// Comparison applied to the consequent's shared attribute.
enum class Mode { geq, eq };

enum class Metric { support, confidence, conviction, lift, leverage };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

// (item, attribute, value): the item must appear with attr >= value (or ==
// value for an eq-mode consequent). (item, attr) is a key within a rule.
struct Quantification {
  ItemId item = 0;
  AttrId attr = 0;
  double value = 0.0;

  bool operator==(const Quantification&) const = default;
};

// B -> I | Q. Antecedent is kept sorted, Q is kept sorted by (item, attr).
struct Rule {
  std::vector<ItemId> antecedent;
  ItemId consequent = 0;
  std::vector<Quantification> q;
  Mode mode = Mode::geq;

  std::optional<double> consequent_value() const;
  bool in_antecedent(ItemId i) const;
  const Quantification* find(ItemId i, AttrId a) const;

  // Sorts antecedent and Q; throws ConfigError on a violated invariant.
  void normalize(AttrId shared_attr);

  bool operator==(const Rule&) const = default;
};

struct RuleMetrics {
  double support = 0.0;
  double confidence = 0.0;
  double cons_supp = 0.0;
  double conviction = 0.0;  // +inf when confidence == 1
  double lift = 0.0;
  double leverage = 0.0;
  std::size_t joint_count = 0;
  std::size_t antecedent_count = 0;
  std::size_t consequent_count = 0;
  std::size_t universe = 0;
};

// Metrics from the three match counts over a universe of n histories.
// Throws UndefinedMetricError when antecedent or consequent count is zero.
RuleMetrics metrics_from_counts(std::size_t joint, std::size_t antecedent, std::size_t consequent, std::size_t n);

double metric_value(const RuleMetrics& m, Metric which);

struct ScoredRule {
  Rule rule;
  RuleMetrics metrics;
};

// For each (item, attr), the largest value v such that item[attr >= v] holds
// in every history that contains the item. Such a quantification adds no
// restriction beyond the item's presence.
class ImpliedBounds {
 public:
  void set(ItemId i, AttrId a, double v);
  bool implied(const Quantification& t) const;

 private:
  std::vector<std::vector<std::pair<AttrId, double>>> per_item_;
};

struct DominanceOptions {
  std::vector<Metric> ltf{Metric::confidence};
  // When set, antecedent quantifications implied by presence are treated as
  // absent in the covering condition.
  const ImpliedBounds* implied = nullptr;
};

// r_prime dominates r. Throws ConfigError when modes differ.
bool dominates(const ScoredRule& r_prime, const ScoredRule& r, const DominanceOptions& opts);

// Structural part of dominance: everything except support and LTF.
bool wider(const Rule& r_prime, const Rule& r, const ImpliedBounds* implied = nullptr);

// Total order used to pick one representative among mutually dominating rules:
// fewer quantifications first, then lexicographic on ids and values.
bool canonical_less(const Rule& a, const Rule& b);

// Rules grouped by consequent item and antecedent set, each group ordered by
// decreasing consequent value. Holds no pair where one rule dominates another.
class RuleStore {
 public:
  RuleStore() = default;
  explicit RuleStore(DominanceOptions opts) : opts_(std::move(opts)) {}

  // True iff some stored rule dominates r (and r would not replace it).
  bool has_dominator(const ScoredRule& r) const;

  // Inserts r unless dominated; evicts stored rules r dominates.
  bool insert_if_undominated(ScoredRule r);

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  // Stored rules with the given consequent.
  std::vector<ScoredRule> bucket(ItemId consequent) const;
  std::vector<ScoredRule> rules() const;
  const DominanceOptions& options() const { return opts_; }

 private:
  using Group = std::vector<ScoredRule>;
  struct Bucket {
    std::map<std::vector<ItemId>, Group> groups;
    // Antecedent item -> keys of the groups containing it.
    std::map<ItemId, std::set<std::vector<ItemId>>> by_item;
  };

  bool group_dominates(const Group& g, const ScoredRule& r) const;

  DominanceOptions opts_;
  std::map<ItemId, Bucket> buckets_;
  std::size_t size_ = 0;
};

// The rules of the input not dominated by any other input rule.
std::vector<ScoredRule> final_prune(std::vector<ScoredRule> rules, const DominanceOptions& opts);

// Drops every rule for which another input rule is wider.
std::vector<ScoredRule> widest_filter(std::vector<ScoredRule> rules, const ImpliedBounds* implied = nullptr);

// A quantification rewritten to the loosest bound the data supports.
struct DisplayBound {
  ItemId item;
  AttrId attr;
  double bound;
  bool strict;  // ">" rather than ">=" (or "=" for an eq-mode consequent)
};

struct DisplayRule {
  std::vector<ItemId> antecedent;
  ItemId consequent;
  std::vector<DisplayBound> bounds;
  Mode mode;
};

DisplayRule generalize(const Rule& r, const ValueIndex& vi);

std::string to_string(const Rule& r, const Dataset& d);
std::string to_string(const DisplayRule& r, const Dataset& d);

// Output lines. In report style metrics carry 6 significant digits; exact
// style round-trips every number. Quantification values always round-trip.
enum class NumberStyle { report, exact };

std::string format_number(double v, NumberStyle style);
std::string to_json_line(const ScoredRule& r, const Dataset& d, NumberStyle style = NumberStyle::report);
ScoredRule parse_rule_line(std::string_view line, const Dataset& d);

// Consequent name, descending consequent value, antecedent names, Q.
void sort_canonical(std::vector<ScoredRule>& rules, const Dataset& d);

void write_rules(std::ostream& out, std::vector<ScoredRule> rules, const Dataset& d,
                 NumberStyle style = NumberStyle::report);
std::vector<ScoredRule> read_rules(std::istream& in, const Dataset& d);
std::vector<ScoredRule> read_rules_file(const std::string& path, const Dataset& d);

}  // namespace qarma
