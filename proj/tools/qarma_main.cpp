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

// qarma command-line front end: mine, gen, eval, worker.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qarma/distributed.hpp"
#include "qarma/engine.hpp"
#include "qarma/error.hpp"
#include "qarma/evaluation.hpp"
#include "qarma/generators.hpp"

namespace {

using namespace qarma;

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("QARMA_LOG");
    if (!v) return LogLevel::error;
    const std::string s(v);
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "info", "debug"};
  if (level <= log_level()) std::cerr << "qarma [" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

// Output stream for a path, "-" or empty meaning stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw IngestError("cannot write '" + path + "'");
    }
  }
  std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool looks_like_movielens(const std::string& path) { return std::filesystem::path(path).extension() == ".dat"; }

Dataset load_any(const std::string& path, const std::string& format, const std::string& shared_attr) {
  if (format == "movielens" || (format == "auto" && looks_like_movielens(path))) return load_movielens_file(path);
  return load_dataset_file(path, shared_attr);
}

// Adds the negated attributes a rules file refers to but the dataset lacks.
Dataset augment_for_rules(Dataset d, const std::string& rules_text) {
  std::istringstream in(rules_text);
  std::string line;
  std::set<std::string> wanted;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      for (const auto& t : j.at("Q")) wanted.insert(t.at(1).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(std::string("bad rule line: ") + e.what());
    }
  }
  const std::string suffix(kNegatedSuffix);
  for (const auto& name : wanted) {
    if (d.find_attr(name) || name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
    d = augment_negated(std::move(d), name.substr(0, name.size() - suffix.size()));
  }
  return d;
}

std::vector<ScoredRule> load_rules(const std::string& text, const Dataset& d) {
  std::istringstream in(text);
  return read_rules(in, d);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw CLI::ValidationError("list", "'" + part + "' is not a number");
    }
  }
  return out;
}

std::string fraction_text(double v) {
  auto s = format_number(v, NumberStyle::report);
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

struct MineArgs {
  std::string input;
  std::string format = "auto";
  double min_support = 0.1;
  double min_confidence = 0.8;
  std::optional<double> min_conviction;
  std::optional<double> min_lift;
  std::optional<double> min_leverage;
  std::string ltf = "confidence";
  std::string attr = "p";
  std::vector<std::string> negate;
  std::size_t max_len = 3;
  std::size_t workers = 1;
  std::size_t batch = 128;
  std::string mode = "geq";
  bool widest = false;
  bool no_equivalence = false;
  bool audit = false;
  std::string remote;
  double task_timeout = 60.0;
  std::string out;
  std::string report;
};

int run_mine(const MineArgs& a) {
  EngineConfig cfg;
  cfg.min_support = a.min_support;
  cfg.thresholds = {{Metric::confidence, a.min_confidence}};
  if (a.min_conviction) cfg.thresholds.emplace_back(Metric::conviction, *a.min_conviction);
  if (a.min_lift) cfg.thresholds.emplace_back(Metric::lift, *a.min_lift);
  if (a.min_leverage) cfg.thresholds.emplace_back(Metric::leverage, *a.min_leverage);
  cfg.ltf.clear();
  std::stringstream ss(a.ltf);
  for (std::string m; std::getline(ss, m, ',');)
    if (!m.empty()) cfg.ltf.push_back(parse_metric(m));
  cfg.max_len = a.max_len;
  cfg.workers = a.workers;
  cfg.batch = a.batch;
  cfg.mode = parse_mode(a.mode);
  cfg.widest = a.widest;
  cfg.negate_attrs = a.negate;
  cfg.prune_equivalent = !a.no_equivalence;
  cfg.audit_breaks = a.audit;

  Dataset d = load_any(a.input, a.format, a.attr);
  log(LogLevel::info, "loaded " + std::to_string(d.num_users()) + " histories, " + std::to_string(d.num_items()) +
                          " items, " + std::to_string(d.num_transactions()) + " transactions");
  const MiningContext ctx(std::move(d), cfg);

  MineResult res;
  if (!a.remote.empty()) {
    CoordinatorOptions co;
    co.workers = parse_endpoints(a.remote);
    co.digest = file_digest(a.input);
    co.task_timeout = std::chrono::milliseconds(static_cast<long long>(a.task_timeout * 1000));
    Coordinator coord(co);
    res = mine(ctx, coord);
    const auto& st = coord.stats();
    log(LogLevel::info, "remote: " + std::to_string(st.results_accepted) + " results accepted, " +
                            std::to_string(st.redispatched) + " re-dispatched, " + std::to_string(st.local_batches) +
                            " batches run locally");
  } else {
    res = mine(ctx);
  }
  for (const auto& l : res.report.levels)
    log(LogLevel::debug, "level " + std::to_string(l.k) + ": " + std::to_string(l.itemsets) + " itemsets, " +
                             std::to_string(l.rules_added) + " rules added");
  log(LogLevel::info, std::to_string(res.rules.size()) + " rules in " + std::to_string(res.report.total_secs) + " s");

  Output out(a.out);
  write_rules(out.get(), res.rules, ctx.dataset());
  if (!a.report.empty()) {
    Output rep(a.report);
    rep.get() << res.report.to_json() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantitative association rule mining"};
  app.require_subcommand(1);

  // mine
  MineArgs ma;
  auto* mine_cmd = app.add_subcommand("mine", "Mine non-dominated quantitative rules");
  mine_cmd->add_option("--input", ma.input, "Dataset file")->required()->check(CLI::ExistingFile);
  mine_cmd->add_option("--format", ma.format, "jsonl, movielens or auto")->check(CLI::IsMember({"auto", "jsonl", "movielens"}));
  mine_cmd->add_option("--min-support", ma.min_support, "Minimum support in (0,1]")
      ->check(CLI::Validator(
          [](std::string& s) {
            double v = 0.0;
            try {
              v = std::stod(s);
            } catch (const std::exception&) {
              return std::string("not a number");
            }
            return v > 0.0 && v <= 1.0 ? std::string{} : std::string("must be in (0, 1]");
          },
          "(0,1]"));
  mine_cmd->add_option("--min-confidence", ma.min_confidence, "Minimum confidence in [0,1]")->check(CLI::Range(0.0, 1.0));
  mine_cmd->add_option("--min-conviction", ma.min_conviction, "Minimum conviction");
  mine_cmd->add_option("--min-lift", ma.min_lift, "Minimum lift");
  mine_cmd->add_option("--min-leverage", ma.min_leverage, "Minimum leverage");
  mine_cmd->add_option("--ltf", ma.ltf, "Metrics compared by dominance, comma separated")
      ->check(CLI::Validator(
          [](std::string& v) {
            std::stringstream ss(v);
            for (std::string m; std::getline(ss, m, ',');) {
              if (m.empty()) continue;
              try {
                parse_metric(m);
              } catch (const ConfigError& e) {
                return std::string(e.what());
              }
            }
            return std::string();
          },
          "METRICS"));
  mine_cmd->add_option("--consequent-attr", ma.attr, "Shared attribute quantified in consequents");
  mine_cmd->add_option("--negate-attr", ma.negate, "Add the negation of an attribute (repeatable)");
  mine_cmd->add_option("--max-len", ma.max_len, "Largest itemset size")->check(CLI::PositiveNumber);
  mine_cmd->add_option("--workers", ma.workers, "Local worker threads")->check(CLI::PositiveNumber);
  mine_cmd->add_option("--batch", ma.batch, "Itemsets per task")->check(CLI::PositiveNumber);
  mine_cmd->add_option("--mode", ma.mode, "Consequent comparison")->check(CLI::IsMember({"geq", "eq"}));
  mine_cmd->add_flag("--widest", ma.widest, "Keep only the widest rules");
  mine_cmd->add_flag("--no-equivalence-pruning", ma.no_equivalence, "Evaluate every grid value");
  mine_cmd->add_flag("--audit-breaks", ma.audit, "Verify every support break");
  mine_cmd->add_option("--workers-remote", ma.remote, "host:port list of workers");
  mine_cmd->add_option("--task-timeout", ma.task_timeout, "Seconds before a task is re-dispatched")->check(CLI::PositiveNumber);
  mine_cmd->add_option("--out", ma.out, "Rules file (default stdout)");
  mine_cmd->add_option("--report", ma.report, "Run report file");

  // gen
  auto* gen_cmd = app.add_subcommand("gen", "Generate synthetic datasets");
  gen_cmd->require_subcommand(1);
  MarketConfig mc;
  std::string ecom_out, ecom_state;
  auto* ecom = gen_cmd->add_subcommand("ecom", "E-commerce market simulation");
  ecom->add_option("--items", mc.n_items)->check(CLI::PositiveNumber);
  ecom->add_option("--users", mc.n_users)->check(CLI::PositiveNumber);
  ecom->add_option("--elastic", mc.elastic_frac, "Fraction of elastic-demand items")->check(CLI::Range(0.0, 1.0));
  ecom->add_option("--cycles", mc.cycles)->check(CLI::PositiveNumber);
  ecom->add_option("--purchases", mc.purchases_per_cycle)->check(CLI::PositiveNumber);
  ecom->add_option("--pareto", mc.pareto_shape)->check(CLI::PositiveNumber);
  ecom->add_option("--price-min", mc.price_min)->check(CLI::PositiveNumber);
  ecom->add_option("--price-max", mc.price_max)->check(CLI::PositiveNumber);
  ecom->add_option("--seed", mc.seed);
  ecom->add_option("--out", ecom_out, "Dataset file")->required();
  ecom->add_option("--state", ecom_state, "Market state file (for eval discount)");

  RareEventConfig rc;
  std::string rare_dir = ".";
  auto* rare = gen_cmd->add_subcommand("rare", "Rare-event predictive maintenance data");
  rare->add_option("--dims", rc.dims)->check(CLI::PositiveNumber);
  rare->add_option("--train", rc.n_train, "Normal points per set")->check(CLI::PositiveNumber);
  rare->add_option("--anoms", rc.n_anomalies, "Anomalous points per set");
  rare->add_option("--sparsity", rc.sparsity)->check(CLI::Range(0.0, 0.999999));
  rare->add_option("--anomaly-dims", rc.anomaly_dims);
  rare->add_option("--band", rc.extremal_band, "Extremal band fraction")->check(CLI::Range(0.0, 1.0));
  rare->add_option("--seed", rc.seed);
  rare->add_option("--out-dir", rare_dir, "Directory for train/test data and labels");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate rules");
  eval_cmd->require_subcommand(1);
  std::string ev_rules, ev_data, ev_attr = "p", ev_format = "auto", ev_out;
  auto common = [&](CLI::App* c, bool need_data) {
    c->add_option("--rules", ev_rules, "Rules file")->required()->check(CLI::ExistingFile);
    auto* data = c->add_option("--data", ev_data, "Dataset file")->check(CLI::ExistingFile);
    if (need_data) data->required();
    c->add_option("--consequent-attr", ev_attr, "Shared attribute");
    c->add_option("--format", ev_format)->check(CLI::IsMember({"auto", "jsonl", "movielens"}));
    c->add_option("--out", ev_out, "Output file (default stdout)");
  };
  auto* cov_cmd = eval_cmd->add_subcommand("coverage", "Fraction of histories covered");
  common(cov_cmd, true);
  std::string roc_labels, roc_target = "class", roc_cuts;
  double roc_threshold = 25.0;
  auto* roc_cmd = eval_cmd->add_subcommand("roc", "Detection/false-alarm sweep over confidence cuts");
  common(roc_cmd, true);
  roc_cmd->add_option("--labels", roc_labels, "Ground-truth labels")->required()->check(CLI::ExistingFile);
  roc_cmd->add_option("--target", roc_target, "Predicted item");
  roc_cmd->add_option("--threshold", roc_threshold, "Consequent value counted as a prediction");
  roc_cmd->add_option("--cuts", roc_cuts, "Comma separated confidence cuts");
  std::string res_user, res_item;
  double res_conf = 0.7;
  auto* res_cmd = eval_cmd->add_subcommand("reserve", "Estimated reservation prices");
  common(res_cmd, true);
  res_cmd->add_option("--item", res_item, "Item")->required();
  res_cmd->add_option("--user", res_user, "User key (default: every user)");
  res_cmd->add_option("--min-conf", res_conf)->check(CLI::Range(0.0, 1.0));
  std::string disc_state, disc_levels = "5,10,15,20,25,30,35,40";
  std::size_t disc_cycles = 0;
  auto* disc_cmd = eval_cmd->add_subcommand("discount", "Discounting revenue comparison");
  common(disc_cmd, false);
  disc_cmd->add_option("--state", disc_state, "Market state file from gen ecom")->required()->check(CLI::ExistingFile);
  disc_cmd->add_option("--levels", disc_levels, "Discount percentages");
  disc_cmd->add_option("--cycles", disc_cycles, "Cycles to simulate (default: as generated)");
  disc_cmd->add_option("--min-conf", res_conf)->check(CLI::Range(0.0, 1.0));

  // worker
  std::string w_listen = "127.0.0.1:7070", w_data;
  std::size_t w_threads = 1;
  std::optional<std::size_t> w_fail;
  auto* worker_cmd = app.add_subcommand("worker", "Serve mining tasks");
  worker_cmd->add_option("--listen", w_listen, "host:port");
  worker_cmd->add_option("--data", w_data, "Dataset file")->required()->check(CLI::ExistingFile);
  worker_cmd->add_option("--threads", w_threads)->check(CLI::PositiveNumber);
  worker_cmd->add_option("--fail-after-tasks", w_fail, "Fault injection: exit on the task after N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*mine_cmd) return run_mine(ma);

    if (*ecom) {
      const auto st = gen_market(mc);
      Output out(ecom_out);
      write_dataset(out.get(), st.history);
      if (!ecom_state.empty()) {
        Output s(ecom_state);
        s.get() << mc.to_json() << '\n';
      }
      log(LogLevel::info, std::to_string(st.history.num_transactions()) + " purchases, revenue " +
                              std::to_string(st.revenue));
      return 0;
    }
    if (*rare) {
      const auto data = gen_rare_event(rc);
      const std::filesystem::path dir(rare_dir);
      std::filesystem::create_directories(dir);
      auto write = [&](const char* name, auto&& fn) {
        Output o((dir / name).string());
        fn(o.get());
      };
      write("train.jsonl", [&](std::ostream& o) { write_dataset(o, data.train); });
      write("test.jsonl", [&](std::ostream& o) { write_dataset(o, data.test); });
      write("train_labels.jsonl", [&](std::ostream& o) { write_labels(o, data.train, data.train_labels); });
      write("test_labels.jsonl", [&](std::ostream& o) { write_labels(o, data.test, data.test_labels); });
      return 0;
    }

    if (*eval_cmd) {
      const std::string rules_text = read_file(ev_rules);
      Output out(ev_out);
      if (*disc_cmd) {
        const auto market = gen_market(MarketConfig::from_json(read_file(disc_state)));
        const auto rules = load_rules(rules_text, market.history);
        std::vector<double> levels;
        for (double l : parse_list(disc_levels)) levels.push_back(l / 100.0);
        const auto rows =
            report_discounting(market, rules, levels, disc_cycles ? disc_cycles : market.config.cycles, res_conf);
        write_discount_report(out.get(), rows);
        return 0;
      }
      const Dataset d = augment_for_rules(load_any(ev_data, ev_format, ev_attr), rules_text);
      const auto rules = load_rules(rules_text, d);
      if (*cov_cmd) {
        out.get() << fraction_text(coverage(rules, d)) << '\n';
      } else if (*roc_cmd) {
        const auto labels = read_labels_file(roc_labels, d);
        const auto target = d.find_item(roc_target);
        if (!target) throw ConfigError("target item '" + roc_target + "' is not in the dataset");
        std::optional<std::vector<double>> cuts;
        if (!roc_cuts.empty()) cuts = parse_list(roc_cuts);
        write_roc(out.get(), roc(rules, d, labels, *target, roc_threshold, cuts));
      } else if (*res_cmd) {
        const auto item = d.find_item(res_item);
        if (!item) throw ConfigError("item '" + res_item + "' is not in the dataset");
        auto show = [&](const UserHistory& h) {
          const auto e = estimate_reservation_price(rules, HistoryView(h), *item, res_conf);
          return e ? format_number(*e, NumberStyle::exact) : std::string("none");
        };
        if (!res_user.empty()) {
          const auto u = d.find_user(res_user);
          if (!u) throw ConfigError("user '" + res_user + "' is not in the dataset");
          out.get() << show(d.histories[*u]) << '\n';
        } else {
          for (const auto& h : d.histories) out.get() << h.user << ',' << show(h) << '\n';
        }
      }
      return 0;
    }

    if (*worker_cmd) {
      WorkerOptions wo;
      wo.listen = parse_endpoint(w_listen);
      wo.data_path = w_data;
      wo.threads = w_threads;
      wo.fail_after_tasks = w_fail;
      wo.exit_on_fail = true;
      wo.on_listening = [&](std::uint16_t port) {
        std::cout << "listening " << wo.listen.host << ':' << port << std::endl;
      };
      serve_worker(wo);
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "qarma: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qarma: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
