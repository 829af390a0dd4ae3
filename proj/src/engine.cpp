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

#include "qarma/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "qarma/error.hpp"

namespace qarma {

namespace {

Dataset prepare(Dataset d, const EngineConfig& cfg) {
  if (!cfg.shared_attr.empty() && cfg.shared_attr != d.shared_attr_name())
    throw ConfigError("shared attribute '" + cfg.shared_attr + "' does not match dataset's '" +
                      d.shared_attr_name() + "'");
  for (const auto& a : cfg.negate_attrs) d = augment_negated(std::move(d), a);
  if (d.num_users() == 0) throw ConfigError("dataset has no histories");
  return d;
}

bool meets_thresholds(const RuleMetrics& m, const EngineConfig& cfg) {
  for (const auto& [metric, min] : cfg.thresholds)
    if (metric_value(m, metric) < min) return false;
  return true;
}

}  // namespace

void EngineConfig::validate() const {
  if (!(min_support > 0.0 && min_support <= 1.0)) throw ConfigError("min_support must be in (0, 1]");
  if (thresholds.empty()) throw ConfigError("at least one interestingness threshold is required");
  for (const auto& [m, v] : thresholds)
    if (!(v == v)) throw ConfigError("threshold for " + std::string(to_string(m)) + " is NaN");
  if (ltf.empty()) throw ConfigError("LTF needs at least one metric");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  if (workers == 0) throw ConfigError("workers must be at least 1");
  if (batch == 0) throw ConfigError("batch must be at least 1");
}

MiningContext::MiningContext(Dataset d, EngineConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      data_(prepare(std::move(d), cfg_)),
      values_(data_),
      index_(data_, values_),
      ord_(default_ord(data_)),
      implied_(index_.implied_bounds()) {
  dominance_.ltf = cfg_.ltf;
  dominance_.implied = cfg_.presence_implied_dominance ? &implied_ : nullptr;
}

std::vector<BaseRule> base_rules(const Itemset& itemset) {
  if (itemset.size() < 2) throw ConfigError("base rules need an itemset of at least 2 items");
  std::vector<BaseRule> out;
  out.reserve(itemset.size());
  for (std::size_t c = 0; c < itemset.size(); ++c) {
    BaseRule b;
    b.consequent = itemset[c];
    for (std::size_t j = 0; j < itemset.size(); ++j)
      if (j != c) b.antecedent.push_back(itemset[j]);
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

// Position in item order of the last antecedent item quantified in q, if any.
std::optional<std::uint32_t> last_quantified(std::span<const Quantification> q, std::span<const ItemId> antecedent,
                                             const OrdMaps& ord) {
  std::optional<std::uint32_t> best;
  for (const auto& t : q) {
    if (std::find(antecedent.begin(), antecedent.end(), t.item) == antecedent.end()) continue;
    const auto o = ord.item(t.item);
    if (!best || o > *best) best = o;
  }
  return best;
}

}  // namespace

bool eligible_item(ItemId j, std::span<const Quantification> q, std::span<const ItemId> antecedent,
                   const OrdMaps& ord) {
  const auto last = last_quantified(q, antecedent, ord);
  return !last || ord.item(j) >= *last;
}

bool eligible_attr(ItemId j, AttrId a, std::span<const Quantification> q, std::span<const ItemId> antecedent,
                   const OrdMaps& ord) {
  if (!eligible_item(j, q, antecedent, ord)) return false;
  if (std::any_of(q.begin(), q.end(), [&](const auto& t) { return t.item == j && t.attr == a; })) return false;
  const auto pa = ord.attr(a, j);
  for (const auto& t : q)
    if (t.item == j && ord.attr(t.attr, j) > pa) return false;
  return true;
}

namespace {

// Queue entry: one antecedent quantification plus a link to the entry it
// extends. The full Q of an entry is the chain up to the root.
struct Node {
  std::int32_t parent;
  std::uint16_t item_pos;
  std::uint16_t attr_pos;
  std::uint32_t level;
};

struct Expander {
  const MiningContext& ctx;
  const BaseRule& base;
  const RuleStore& snapshot;
  RuleStore& local;
  ExpandStats& stats;
  std::vector<TraceEvent>* trace;

  Expander(const MiningContext& c, const BaseRule& b, const RuleStore& snap, RuleStore& loc, ExpandStats& st,
           std::vector<TraceEvent>* tr)
      : ctx(c), base(b), snapshot(snap), local(loc), stats(st), trace(tr) {}

  const SupportIndex& idx = ctx.index();
  const EngineConfig& cfg = ctx.config();
  std::size_t n = idx.universe();
  // Candidate attributes of each antecedent item, in attribute order.
  std::vector<std::vector<const SupportIndex::Levels*>> attrs;
  const SupportIndex::Levels* cons_levels = nullptr;
  std::vector<Node> nodes;

  std::size_t min_count = min_support_count(cfg.min_support, n);

  bool frequent(std::size_t count) const { return count >= min_count; }

  void collect_attrs() {
    const auto& ord = ctx.ord();
    attrs.resize(base.antecedent.size());
    for (std::size_t j = 0; j < base.antecedent.size(); ++j) {
      const ItemId item = base.antecedent[j];
      for (AttrId a : ord.attrs_in_order[item])
        if (const auto* lv = idx.levels(item, a); lv && !lv->values.empty()) attrs[j].push_back(lv);
    }
    cons_levels = idx.levels(base.consequent, ctx.dataset().shared_attr());
    if (!cons_levels) throw ConfigError("consequent item lacks the shared attribute");
  }

  Rule make_rule(std::int32_t at, std::size_t cons_level) const {
    Rule r;
    r.antecedent = base.antecedent;
    r.consequent = base.consequent;
    r.mode = cfg.mode;
    r.q.push_back({base.consequent, cons_levels->attr, cons_levels->values[cons_level]});
    for (std::int32_t k = at; k >= 0; k = nodes[k].parent) {
      const auto& nd = nodes[k];
      const auto* lv = attrs[nd.item_pos][nd.attr_pos];
      r.q.push_back({base.antecedent[nd.item_pos], lv->attr, lv->values[nd.level]});
    }
    std::sort(r.antecedent.begin(), r.antecedent.end());
    std::sort(r.q.begin(), r.q.end(),
              [](const auto& x, const auto& y) { return std::tie(x.item, x.attr) < std::tie(y.item, y.attr); });
    return r;
  }

  void emit(TraceEvent::Kind kind, std::int32_t at, std::size_t cons_level, std::size_t joint = 0,
            std::size_t ante = 0) {
    if (!trace) return;
    trace->push_back({kind, make_rule(at, cons_level), joint, ante});
  }

  // Antecedent matches of an entry, presence included.
  UserBitset antecedent_of(std::int32_t at, const UserBitset& presence) const {
    UserBitset out = presence;
    for (std::int32_t k = at; k >= 0; k = nodes[k].parent) {
      const auto& nd = nodes[k];
      out &= attrs[nd.item_pos][nd.attr_pos]->at_least[nd.level];
    }
    return out;
  }

  void run() {
    collect_attrs();
    UserBitset presence = idx.presence(base.antecedent.front());
    for (std::size_t j = 1; j < base.antecedent.size(); ++j) presence &= idx.presence(base.antecedent[j]);
    const auto& cons_presence = idx.presence(base.consequent);

    std::optional<std::size_t> prev_joint;
    for (std::size_t ci = cons_levels->values.size(); ci-- > 0;) {
      UserBitset cons_bits = cons_presence;
      cons_bits &= cfg.mode == Mode::geq ? cons_levels->at_least[ci] : cons_levels->exactly[ci];
      const std::size_t joint0 = and_count(presence, cons_bits);
      const bool same_as_prev = prev_joint && *prev_joint == joint0;
      prev_joint = joint0;
      if (!frequent(joint0)) {
        emit(TraceEvent::Kind::consequent_skipped, -1, ci, joint0);
        continue;
      }
      // In geq mode the covers are nested, so equal counts mean equal covers.
      if (cfg.prune_equivalent && cfg.mode == Mode::geq && same_as_prev) {
        emit(TraceEvent::Kind::consequent_equivalent, -1, ci, joint0);
        continue;
      }
      emit(TraceEvent::Kind::consequent_started, -1, ci, joint0);
      expand_consequent(ci, presence, cons_bits);
    }
  }

  void expand_consequent(std::size_t ci, const UserBitset& presence, const UserBitset& cons_bits) {
    const std::size_t cons_count = cons_bits.count();
    nodes.clear();
    // Entry -1 is the root; queue holds entry indices in FIFO order.
    std::vector<std::int32_t> queue{-1};
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::int32_t at = queue[head];
      const UserBitset ante = antecedent_of(at, presence);
      const UserBitset joint_bits = ante & cons_bits;
      std::size_t start_item = 0;
      std::size_t start_attr = 0;
      if (at >= 0) {
        start_item = nodes[at].item_pos;
        start_attr = nodes[at].attr_pos + 1u;
      }
      for (std::size_t jp = start_item; jp < attrs.size(); ++jp) {
        const std::size_t first_attr = jp == start_item ? start_attr : 0;
        for (std::size_t ap = first_attr; ap < attrs[jp].size(); ++ap) {
          const auto* lv = attrs[jp][ap];
          std::optional<std::pair<std::size_t, std::size_t>> prev;
          for (std::size_t level = 0; level < lv->values.size(); ++level) {
            const auto& thr = lv->at_least[level];
            const std::size_t joint = and_count(joint_bits, thr);
            const Node nd{at, static_cast<std::uint16_t>(jp), static_cast<std::uint16_t>(ap),
                          static_cast<std::uint32_t>(level)};
            if (!frequent(joint)) {
              if (trace) {
                nodes.push_back(nd);
                emit(TraceEvent::Kind::broke, static_cast<std::int32_t>(nodes.size() - 1), ci, joint);
                nodes.pop_back();
              }
              if (cfg.audit_breaks) audit(joint_bits, *lv, level);
              break;
            }
            const std::size_t ante_count = and_count(ante, thr);
            const auto counts = std::pair{joint, ante_count};
            const bool same = prev && *prev == counts;
            prev = counts;
            nodes.push_back(nd);
            const auto self = static_cast<std::int32_t>(nodes.size() - 1);
            // Same counts as the previous (looser) value means the same covers.
            if (cfg.prune_equivalent && same) {
              emit(TraceEvent::Kind::equivalent_skipped, self, ci, joint, ante_count);
              continue;
            }
            queue.push_back(self);
            emit(TraceEvent::Kind::pushed, self, ci, joint, ante_count);
            ++stats.candidates;
            const auto m = metrics_from_counts(joint, ante_count, cons_count, n);
            if (!meets_thresholds(m, cfg)) continue;
            ScoredRule sr{make_rule(self, ci), m};
            const bool added = !snapshot.has_dominator(sr) && local.insert_if_undominated(sr);
            if (trace) trace->push_back({added ? TraceEvent::Kind::added : TraceEvent::Kind::dominated, sr.rule,
                                         joint, ante_count});
          }
        }
      }
    }
  }

  void audit(const UserBitset& joint_bits, const SupportIndex::Levels& lv, std::size_t failed) {
    ++stats.breaks_audited;
    for (std::size_t l = failed + 1; l < lv.values.size(); ++l)
      if (frequent(and_count(joint_bits, lv.at_least[l]))) {
        ++stats.audit_violations;
        return;
      }
  }
};

}  // namespace

void expand_rule(const MiningContext& ctx, const BaseRule& base, const RuleStore& snapshot, RuleStore& local,
                 ExpandStats& stats, std::vector<TraceEvent>* trace) {
  if (base.antecedent.empty()) throw ConfigError("base rule has an empty antecedent");
  Expander e(ctx, base, snapshot, local, stats, trace);
  e.run();
}

std::vector<ScoredRule> process_batch(const MiningContext& ctx, std::span<const Itemset> itemsets,
                                      const RuleStore& snapshot, ExpandStats& stats) {
  RuleStore local(ctx.dominance());
  for (const auto& is : itemsets)
    for (const auto& b : base_rules(is)) expand_rule(ctx, b, snapshot, local, stats);
  return local.rules();
}

std::vector<std::span<const Itemset>> make_batches(std::span<const Itemset> itemsets, std::size_t batch) {
  if (batch == 0) throw ConfigError("batch must be at least 1");
  std::vector<std::span<const Itemset>> out;
  for (std::size_t i = 0; i < itemsets.size(); i += batch)
    out.push_back(itemsets.subspan(i, std::min(batch, itemsets.size() - i)));
  return out;
}

LevelOutcome ThreadPoolExecutor::run_level(const MiningContext& ctx, std::size_t /*k*/,
                                           std::span<const Itemset> itemsets, const RuleStore& snapshot) {
  const auto batches = make_batches(itemsets, batch_ ? batch_ : ctx.config().batch);
  LevelOutcome out;
  out.additions.resize(batches.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto work = [&] {
    ExpandStats local;
    try {
      for (std::size_t b; (b = next.fetch_add(1)) < batches.size();)
        out.additions[b] = process_batch(ctx, batches[b], snapshot, local);
    } catch (...) {
      std::lock_guard lk(mu);
      if (!failure) failure = std::current_exception();
      next.store(batches.size());
    }
    std::lock_guard lk(mu);
    out.stats += local;
  };
  const std::size_t threads = std::min(workers_, batches.size());
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::size_t merge_level(RuleStore& global, const LevelOutcome& outcome, const DominanceOptions& opts) {
  std::vector<ScoredRule> all;
  for (const auto& b : outcome.additions) all.insert(all.end(), b.begin(), b.end());
  std::size_t kept = 0;
  for (auto& r : final_prune(std::move(all), opts))
    if (global.insert_if_undominated(std::move(r))) ++kept;
  return kept;
}

std::string RunReport::to_json() const {
  nlohmann::ordered_json j;
  j["total_secs"] = total_secs;
  j["itemset_secs"] = itemset_secs;
  j["levels"] = nlohmann::ordered_json::array();
  for (const auto& l : levels) j["levels"].push_back({{"k", l.k}, {"itemsets", l.itemsets}, {"rules_added", l.rules_added}});
  j["workers"] = workers;
  j["batch"] = batch;
  j["rules"] = rules;
  j["frequent_itemsets_by_size"] = frequent_by_size;
  j["candidates"] = stats.candidates;
  j["breaks_audited"] = stats.breaks_audited;
  j["audit_violations"] = stats.audit_violations;
  j["remote_batches"] = remote_batches;
  j["widest"] = widest;
  j["notes"] = {"lift is confidence divided by the consequent's support fraction",
                "rules whose antecedent carries no quantification are not reported"};
  return j.dump();
}

MineResult mine(const MiningContext& ctx, LevelExecutor& executor) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto& cfg = ctx.config();
  MineResult res;
  res.report.workers = cfg.workers;
  res.report.batch = cfg.batch;
  res.report.widest = cfg.widest;

  const auto levels = mine_frequent(ctx.index(), cfg.min_support, cfg.max_len, ctx.ord());
  res.report.itemset_secs = std::chrono::duration<double>(clock::now() - t0).count();
  for (const auto& l : levels) res.report.frequent_by_size.push_back(l.size());

  RuleStore global(ctx.dominance());
  for (std::size_t k = 2; k <= levels.size(); ++k) {
    const auto& sets = levels[k - 1];
    if (sets.empty()) break;
    auto outcome = executor.run_level(ctx, k, sets, global);
    res.report.stats += outcome.stats;
    res.report.remote_batches += outcome.remote_batches;
    const std::size_t added = merge_level(global, outcome, ctx.dominance());
    res.report.levels.push_back({k, sets.size(), added});
  }
  res.rules = global.rules();
  if (cfg.widest) res.rules = widest_filter(std::move(res.rules), ctx.dominance().implied);
  sort_canonical(res.rules, ctx.dataset());
  res.report.rules = res.rules.size();
  res.report.total_secs = std::chrono::duration<double>(clock::now() - t0).count();
  return res;
}

MineResult mine(const MiningContext& ctx) {
  ThreadPoolExecutor ex(ctx.config().workers);
  return mine(ctx, ex);
}

MineResult mine(Dataset d, const EngineConfig& cfg) {
  const MiningContext ctx(std::move(d), cfg);
  return mine(ctx);
}

}  // namespace qarma
