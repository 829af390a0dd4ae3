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

#include "qarma/distributed.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <deque>
#include <map>

#include "json.hpp"
#include "qarma/error.hpp"

namespace qarma {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw ProtocolError("frame payload too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(payload);
  return out;
}

std::optional<std::pair<std::string, std::size_t>> decode_frame(std::string_view buf) {
  if (buf.size() < 4) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(buf[i]);
  if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit");
  if (buf.size() - 4 < n) return std::nullopt;
  return std::pair{std::string(buf.substr(4, n)), std::size_t{4} + n};
}

Endpoint parse_endpoint(std::string_view s) {
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw ConfigError("endpoint '" + std::string(s) + "' is not host:port");
  const auto port_s = s.substr(colon + 1);
  unsigned port = 0;
  auto [p, ec] = std::from_chars(port_s.data(), port_s.data() + port_s.size(), port);
  if (ec != std::errc{} || p != port_s.data() + port_s.size() || port > 65535)
    throw ConfigError("endpoint '" + std::string(s) + "' has a bad port");
  return Endpoint{std::string(s.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

std::vector<Endpoint> parse_endpoints(std::string_view s) {
  std::vector<Endpoint> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string_view::npos) comma = s.size();
    const auto part = s.substr(pos, comma - pos);
    if (!part.empty()) out.push_back(parse_endpoint(part));
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("empty endpoint list");
  return out;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

std::string config_to_json(const EngineConfig& cfg) {
  json j;
  j["min_support"] = cfg.min_support;
  j["thresholds"] = json::array();
  for (const auto& [m, v] : cfg.thresholds) j["thresholds"].push_back({std::string(to_string(m)), v});
  j["ltf"] = json::array();
  for (auto m : cfg.ltf) j["ltf"].push_back(std::string(to_string(m)));
  j["shared_attr"] = cfg.shared_attr;
  j["max_len"] = cfg.max_len;
  j["workers"] = cfg.workers;
  j["batch"] = cfg.batch;
  j["mode"] = std::string(to_string(cfg.mode));
  j["widest"] = cfg.widest;
  j["negate_attrs"] = cfg.negate_attrs;
  j["prune_equivalent"] = cfg.prune_equivalent;
  j["presence_implied_dominance"] = cfg.presence_implied_dominance;
  j["audit_breaks"] = cfg.audit_breaks;
  return j.dump();
}

EngineConfig config_from_json(std::string_view text) {
  EngineConfig cfg;
  try {
    const auto j = json::parse(text);
    cfg.min_support = j.at("min_support").get<double>();
    cfg.thresholds.clear();
    for (const auto& t : j.at("thresholds"))
      cfg.thresholds.emplace_back(parse_metric(t.at(0).get<std::string>()), t.at(1).get<double>());
    cfg.ltf.clear();
    for (const auto& m : j.at("ltf")) cfg.ltf.push_back(parse_metric(m.get<std::string>()));
    cfg.shared_attr = j.at("shared_attr").get<std::string>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
    cfg.workers = j.at("workers").get<std::size_t>();
    cfg.batch = j.at("batch").get<std::size_t>();
    cfg.mode = parse_mode(j.at("mode").get<std::string>());
    cfg.widest = j.at("widest").get<bool>();
    cfg.negate_attrs = j.at("negate_attrs").get<std::vector<std::string>>();
    cfg.prune_equivalent = j.at("prune_equivalent").get<bool>();
    cfg.presence_implied_dominance = j.at("presence_implied_dominance").get<bool>();
    cfg.audit_breaks = j.at("audit_breaks").get<bool>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad engine config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(sys_error("send"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void send_frame(int fd, const json& payload) { send_all(fd, encode_frame(payload.dump())); }

// False on a clean EOF before any byte.
bool read_exact(int fd, char* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const auto r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw ProtocolError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(sys_error("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::optional<std::string> read_frame(int fd) {
  char hdr[4];
  if (!read_exact(fd, hdr, 4)) return std::nullopt;
  std::uint32_t n = 0;
  for (char c : hdr) n = (n << 8) | static_cast<unsigned char>(c);
  if (n > kMaxFrameBytes) throw ProtocolError("frame length exceeds limit");
  std::string payload(n, '\0');
  if (n > 0 && !read_exact(fd, payload.data(), n)) throw ProtocolError("connection closed mid-frame");
  return payload;
}

json error_frame(const std::string& message) { return json{{"type", "ERR"}, {"message", message}}; }

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto port = std::to_string(ep.port);
  const int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw ProtocolError("cannot resolve '" + ep.to_string() + "': " + ::gai_strerror(rc));
  return res;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

// Invalid Fd when the endpoint cannot be reached in time.
Fd connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
  addrinfo* res = nullptr;
  try {
    res = resolve(ep, false);
  } catch (const ProtocolError&) {
    return Fd{};
  }
  Fd fd(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!fd.valid()) {
    ::freeaddrinfo(res);
    return Fd{};
  }
  const int flags = ::fcntl(fd.get(), F_GETFL, 0);
  ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd.get(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0 && errno != EINPROGRESS) return Fd{};
  if (rc < 0) {
    pollfd p{fd.get(), POLLOUT, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return Fd{};
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) return Fd{};
  }
  ::fcntl(fd.get(), F_SETFL, flags);
  set_nodelay(fd.get());
  return fd;
}

std::vector<std::string> rule_lines(const std::vector<ScoredRule>& rules, const Dataset& d) {
  std::vector<std::string> out;
  out.reserve(rules.size());
  for (const auto& r : rules) out.push_back(to_json_line(r, d, NumberStyle::exact));
  return out;
}

// Parses rule lines and recomputes their metrics from the index.
std::vector<ScoredRule> parse_rules(const json& lines, const MiningContext& ctx) {
  std::vector<ScoredRule> out;
  for (const auto& l : lines) {
    auto sr = parse_rule_line(l.get<std::string>(), ctx.dataset());
    sr.metrics = evaluate(ctx.index(), sr.rule);
    out.push_back(std::move(sr));
  }
  return out;
}

// Per-connection worker state that survives reconnects.
struct WorkerState {
  const WorkerOptions& opts;
  std::string digest;
  std::map<std::string, Dataset> loaded;  // by shared attribute
  std::unique_ptr<MiningContext> ctx;
  std::string ctx_config;
  std::optional<RuleStore> snapshot;
  std::optional<std::size_t> level;
  std::size_t tasks = 0;

  const Dataset& dataset_for(const std::string& shared) {
    auto it = loaded.find(shared);
    if (it == loaded.end()) it = loaded.emplace(shared, load_dataset_file(opts.data_path, shared)).first;
    return it->second;
  }

  json on_hello(const json& j) {
    if (j.value("digest", std::string{}) != digest) throw ProtocolError("dataset digest mismatch");
    const auto cfg_text = j.at("config").dump();
    if (!ctx || cfg_text != ctx_config) {
      auto cfg = config_from_json(cfg_text);
      ctx.reset();
      ctx = std::make_unique<MiningContext>(dataset_for(cfg.shared_attr), cfg);
      ctx_config = cfg_text;
    }
    snapshot.reset();
    level.reset();
    return json{{"type", "HELLO_ACK"}, {"digest", digest}, {"threads", opts.threads}};
  }

  void on_level_begin(const json& j) {
    if (!ctx) throw ConfigError("LEVEL_BEGIN before HELLO");
    RuleStore store(ctx->dominance());
    for (auto& r : parse_rules(j.at("rules"), *ctx)) store.insert_if_undominated(std::move(r));
    snapshot = std::move(store);
    level = j.at("k").get<std::size_t>();
  }

  json on_task(const json& j) {
    const auto id = j.at("id").get<std::size_t>();
    const auto k = j.at("k").get<std::size_t>();
    if (!ctx || !snapshot || level != k) throw ConfigError("TASK for level " + std::to_string(k) + " without LEVEL_BEGIN");
    std::vector<Itemset> itemsets;
    for (const auto& is : j.at("itemsets")) {
      Itemset s;
      for (const auto& name : is) {
        auto id_ = ctx->dataset().find_item(name.get<std::string>());
        if (!id_) throw ConfigError("unknown item '" + name.get<std::string>() + "'");
        s.push_back(*id_);
      }
      itemsets.push_back(std::move(s));
    }
    const std::size_t chunk = std::max<std::size_t>(1, itemsets.size() / (opts.threads * 4));
    ThreadPoolExecutor pool(opts.threads, chunk);
    auto outcome = pool.run_level(*ctx, k, itemsets, *snapshot);
    std::vector<ScoredRule> all;
    for (auto& b : outcome.additions) all.insert(all.end(), b.begin(), b.end());
    all = final_prune(std::move(all), ctx->dominance());
    return json{{"type", "RESULT"},
                {"id", id},
                {"k", k},
                {"rules", rule_lines(all, ctx->dataset())},
                {"candidates", outcome.stats.candidates},
                {"breaks_audited", outcome.stats.breaks_audited},
                {"audit_violations", outcome.stats.audit_violations}};
  }
};

enum class SessionEnd { disconnected, bye, failed };

SessionEnd serve_connection(int fd, WorkerState& st) {
  while (true) {
    std::optional<std::string> frame;
    try {
      frame = read_frame(fd);
    } catch (const ProtocolError&) {
      return SessionEnd::disconnected;
    }
    if (!frame) return SessionEnd::disconnected;
    json j;
    try {
      j = json::parse(*frame);
    } catch (const json::exception&) {
      send_frame(fd, error_frame("malformed frame"));
      continue;
    }
    const auto type = j.is_object() ? j.value("type", std::string{}) : std::string{};
    try {
      if (type == "HELLO") {
        json reply;
        try {
          reply = st.on_hello(j);
        } catch (const std::exception& e) {
          send_frame(fd, error_frame(e.what()));
          return SessionEnd::disconnected;
        }
        send_frame(fd, reply);
      } else if (type == "LEVEL_BEGIN") {
        st.on_level_begin(j);
      } else if (type == "TASK") {
        ++st.tasks;
        if (st.opts.fail_after_tasks && st.tasks > *st.opts.fail_after_tasks) {
          if (st.opts.exit_on_fail) std::_Exit(3);
          return SessionEnd::failed;
        }
        send_frame(fd, st.on_task(j));
      } else if (type == "LEVEL_END") {
        st.snapshot.reset();
        st.level.reset();
      } else if (type == "BYE") {
        return SessionEnd::bye;
      } else {
        send_frame(fd, error_frame("unknown frame type '" + type + "'"));
      }
    } catch (const ProtocolError&) {
      return SessionEnd::disconnected;
    } catch (const std::exception& e) {
      try {
        json err = error_frame(e.what());
        if (j.contains("id")) err["id"] = j["id"];
        send_frame(fd, err);
      } catch (const ProtocolError&) {
        return SessionEnd::disconnected;
      }
    }
  }
}

}  // namespace

void serve_worker(const WorkerOptions& opts) {
  if (opts.threads == 0) throw ConfigError("worker threads must be at least 1");
  WorkerState st{opts, digest_hex(file_digest(opts.data_path)), {}, {}, {}, {}, {}, 0};

  addrinfo* res = resolve(opts.listen, true);
  Fd listener(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!listener.valid()) {
    ::freeaddrinfo(res);
    throw ProtocolError(sys_error("socket"));
  }
  int one = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  const int rc = ::bind(listener.get(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0) throw ProtocolError(sys_error("bind"));
  if (::listen(listener.get(), 4) < 0) throw ProtocolError(sys_error("listen"));
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&bound), &len);
  if (opts.on_listening) opts.on_listening(ntohs(bound.sin_port));

  while (true) {
    Fd conn(::accept(listener.get(), nullptr, nullptr));
    if (!conn.valid()) {
      if (errno == EINTR) continue;
      throw ProtocolError(sys_error("accept"));
    }
    set_nodelay(conn.get());
    const auto end = serve_connection(conn.get(), st);
    if (end == SessionEnd::bye || end == SessionEnd::failed) return;
  }
}

struct Coordinator::Session {
  Endpoint ep;
  Fd fd;
  std::string inbuf;
  std::optional<std::size_t> task;
  Clock::time_point sent;

  bool alive() const { return fd.valid(); }
};

Coordinator::Coordinator(CoordinatorOptions opts) : opts_(std::move(opts)) {
  for (const auto& ep : opts_.workers) {
    auto s = std::make_unique<Session>();
    s->ep = ep;
    sessions_.push_back(std::move(s));
  }
}

Coordinator::~Coordinator() {
  if (opts_.shutdown_workers) shutdown();
}

void Coordinator::shutdown() {
  for (auto& s : sessions_) {
    if (!s->alive()) continue;
    try {
      send_frame(s->fd.get(), json{{"type", "BYE"}});
    } catch (const ProtocolError&) {
    }
    s->fd.reset();
  }
}

std::size_t Coordinator::live_workers() const {
  return static_cast<std::size_t>(std::count_if(sessions_.begin(), sessions_.end(), [](const auto& s) { return s->alive(); }));
}

void Coordinator::drop(Session& s) {
  if (s.alive()) ++stats_.disconnects;
  s.fd.reset();
  s.inbuf.clear();
}

void Coordinator::connect_missing(const MiningContext& ctx) {
  EngineConfig cfg = ctx.config();
  cfg.shared_attr = ctx.dataset().shared_attr_name();
  const json hello{{"type", "HELLO"}, {"digest", digest_hex(opts_.digest)}, {"config", json::parse(config_to_json(cfg))}};
  for (auto& s : sessions_) {
    if (s->alive()) continue;
    Fd fd = connect_to(s->ep, opts_.connect_timeout);
    if (!fd.valid()) continue;
    try {
      send_frame(fd.get(), hello);
      // HELLO may make the worker build its indices, so allow the task timeout.
      pollfd p{fd.get(), POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(opts_.task_timeout.count())) <= 0) continue;
      const auto reply = read_frame(fd.get());
      if (!reply) continue;
      const auto j = json::parse(*reply);
      if (j.value("type", std::string{}) != "HELLO_ACK" || j.value("digest", std::string{}) != digest_hex(opts_.digest))
        continue;
    } catch (const std::exception&) {
      continue;
    }
    s->fd = std::move(fd);
    s->inbuf.clear();
    s->task.reset();
    ++stats_.connects;
  }
}

LevelOutcome Coordinator::run_level(const MiningContext& ctx, std::size_t k, std::span<const Itemset> itemsets,
                                    const RuleStore& snapshot) {
  const auto batches = make_batches(itemsets, ctx.config().batch);
  const std::size_t nb = batches.size();
  LevelOutcome out;
  out.additions.resize(nb);
  if (nb == 0) return out;

  connect_missing(ctx);
  const auto& d = ctx.dataset();
  const json begin{{"type", "LEVEL_BEGIN"}, {"k", k}, {"rules", rule_lines(snapshot.rules(), d)}};
  const auto begin_frame = encode_frame(begin.dump());
  for (auto& s : sessions_) {
    if (!s->alive()) continue;
    try {
      send_all(s->fd.get(), begin_frame);
    } catch (const ProtocolError&) {
      drop(*s);
    }
  }

  std::deque<std::size_t> pending;
  for (std::size_t b = 0; b < nb; ++b) pending.push_back(b);
  std::vector<char> done(nb, 0);
  std::size_t remaining = nb;

  auto lose = [&](Session& s) {
    if (s.task && !done[*s.task]) {
      pending.push_front(*s.task);
      ++stats_.redispatched;
    }
    s.task.reset();
    drop(s);
  };

  auto task_frame = [&](std::size_t b) {
    json sets = json::array();
    for (const auto& is : batches[b]) {
      json names = json::array();
      for (auto i : is) names.push_back(d.item_name(i));
      sets.push_back(std::move(names));
    }
    return json{{"type", "TASK"}, {"id", b}, {"k", k}, {"itemsets", std::move(sets)}};
  };

  auto accept = [&](Session& s, const json& j) {
    const auto id = j.at("id").get<std::size_t>();
    if (s.task == id) s.task.reset();
    if (id >= nb || done[id]) {
      ++stats_.duplicates_ignored;
      return;
    }
    out.additions[id] = parse_rules(j.at("rules"), ctx);
    out.stats.candidates += j.value("candidates", std::size_t{0});
    out.stats.breaks_audited += j.value("breaks_audited", std::size_t{0});
    out.stats.audit_violations += j.value("audit_violations", std::size_t{0});
    done[id] = 1;
    --remaining;
    ++stats_.results_accepted;
    ++out.remote_batches;
  };

  while (remaining > 0) {
    for (auto& s : sessions_) {
      while (s->alive() && !s->task && !pending.empty()) {
        const auto b = pending.front();
        pending.pop_front();
        if (done[b]) continue;
        try {
          send_frame(s->fd.get(), task_frame(b));
          s->task = b;
          s->sent = Clock::now();
          ++stats_.tasks_sent;
        } catch (const ProtocolError&) {
          pending.push_front(b);
          lose(*s);
        }
      }
    }

    if (live_workers() == 0) {
      for (auto& s : sessions_) s->task.reset();
      for (std::size_t b = 0; b < nb; ++b) {
        if (done[b]) continue;
        out.additions[b] = process_batch(ctx, batches[b], snapshot, out.stats);
        done[b] = 1;
        --remaining;
        ++stats_.local_batches;
      }
      pending.clear();
      break;
    }

    std::vector<pollfd> fds;
    std::vector<Session*> owners;
    auto wait = std::chrono::milliseconds(200);
    const auto now = Clock::now();
    for (auto& s : sessions_) {
      if (!s->alive()) continue;
      fds.push_back({s->fd.get(), POLLIN, 0});
      owners.push_back(s.get());
      if (s->task) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(s->sent + opts_.task_timeout - now);
        wait = std::clamp(left, std::chrono::milliseconds(0), wait);
      }
    }
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(wait.count()));
    if (ready < 0 && errno != EINTR) throw ProtocolError(sys_error("poll"));

    for (std::size_t i = 0; ready > 0 && i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      Session& s = *owners[i];
      char buf[65536];
      const auto r = ::recv(s.fd.get(), buf, sizeof buf, 0);
      if (r <= 0) {
        if (r < 0 && errno == EINTR) continue;
        lose(s);
        continue;
      }
      s.inbuf.append(buf, static_cast<std::size_t>(r));
      try {
        while (auto f = decode_frame(s.inbuf)) {
          s.inbuf.erase(0, f->second);
          const auto j = json::parse(f->first);
          const auto type = j.value("type", std::string{});
          if (type == "RESULT") {
            accept(s, j);
          } else if (type == "ERR") {
            throw ProtocolError("worker " + s.ep.to_string() + ": " + j.value("message", std::string{}));
          }
        }
      } catch (const std::exception&) {
        lose(s);
      }
    }

    const auto after = Clock::now();
    for (auto& s : sessions_)
      if (s->alive() && s->task && after - s->sent > opts_.task_timeout) lose(*s);
  }

  for (auto& s : sessions_) {
    if (!s->alive()) continue;
    try {
      send_frame(s->fd.get(), json{{"type", "LEVEL_END"}, {"k", k}});
    } catch (const ProtocolError&) {
      drop(*s);
    }
  }
  return out;
}

}  // namespace qarma
