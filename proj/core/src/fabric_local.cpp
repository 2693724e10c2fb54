#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "stagekit/fabric.hpp"

namespace stagekit::fabric {

namespace {

constexpr uint16_t kTagBcast = 0xffe0;
constexpr uint16_t kTagAllgather = 0xffe1;
constexpr uint16_t kTagBarrierUp = 0xffe2;
constexpr uint16_t kTagBarrierDown = 0xffe3;
constexpr uint64_t kMaxFrameBytes = 1ull << 31;  // sanity cap on payload length

struct Addr {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
};

Addr parse_addr(std::string s) {
  if (s.empty()) {
    const char* env = std::getenv(kFabricAddrEnv);
    if (env) s = env;
  }
  Addr a;
  if (s.empty()) return a;
  size_t colon = s.rfind(':');
  if (colon == std::string::npos) {
    a.host = s;
    return a;
  }
  a.host = s.substr(0, colon);
  if (a.host.empty()) a.host = "127.0.0.1";
  std::string port = s.substr(colon + 1);
  if (!port.empty()) a.port = static_cast<uint16_t>(std::stoul(port));
  return a;
}

[[noreturn]] void sys_fail(const std::string& what) {
  throw FabricError(what + ": " + std::strerror(errno));
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close_fd(); }
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
};

Socket tcp_listen(const Addr& addr, int backlog, uint16_t* bound_port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  Socket s(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in sin{};
  sin.sin_family = AF_INET;
  sin.sin_port = htons(addr.port);
  if (::inet_pton(AF_INET, addr.host.c_str(), &sin.sin_addr) != 1) {
    throw FabricError("bad fabric address host: " + addr.host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sin), sizeof sin) != 0) sys_fail("bind");
  if (::listen(fd, backlog) != 0) sys_fail("listen");
  sockaddr_in actual{};
  socklen_t len = sizeof actual;
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&actual), &len) != 0) {
    sys_fail("getsockname");
  }
  *bound_port = ntohs(actual.sin_port);
  return s;
}

Socket tcp_connect(const Addr& addr) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  Socket s(fd);
  sockaddr_in sin{};
  sin.sin_family = AF_INET;
  sin.sin_port = htons(addr.port);
  if (::inet_pton(AF_INET, addr.host.c_str(), &sin.sin_addr) != 1) {
    throw FabricError("bad fabric address host: " + addr.host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sin), sizeof sin) != 0) sys_fail("connect");
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

void write_all(int fd, const uint8_t* data, size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("send");
    }
    data += n;
    len -= static_cast<size_t>(n);
  }
}

// Reads exactly len bytes. deadline < 0 means block forever. Returns
// false on clean EOF at a frame boundary (start == true, nothing read).
bool read_exact(int fd, uint8_t* data, size_t len, double deadline_s,
                std::chrono::steady_clock::time_point start_tp, bool* timed_out) {
  size_t got = 0;
  while (got < len) {
    if (deadline_s >= 0) {
      auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_tp)
                         .count();
      double remain = deadline_s - elapsed;
      if (remain <= 0) {
        *timed_out = true;
        return false;
      }
      pollfd p{fd, POLLIN, 0};
      int pr = ::poll(&p, 1, static_cast<int>(remain * 1000) + 1);
      if (pr < 0) {
        if (errno == EINTR) continue;
        sys_fail("poll");
      }
      if (pr == 0) {
        *timed_out = true;
        return false;
      }
    }
    ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("recv");
    }
    if (n == 0) {
      if (got == 0) return false;  // clean EOF
      throw FabricError("connection closed mid-frame");
    }
    got += static_cast<size_t>(n);
  }
  return true;
}

struct Frame {
  Rank src = 0;
  Rank dst = 0;
  uint16_t tag = 0;
  Bytes payload;
};

void write_frame(int fd, const Frame& f) {
  Bytes buf = encode_frame_header(f.tag, f.payload.size() + 8);
  put_u32le(buf, f.src);
  put_u32le(buf, f.dst);
  append(buf, f.payload);
  write_all(fd, buf.data(), buf.size());
}

// Returns false on clean EOF or timeout (distinguished via *timed_out).
bool read_frame(int fd, Frame* out, double deadline_s, bool* timed_out) {
  auto start = std::chrono::steady_clock::now();
  *timed_out = false;
  uint8_t header[kFrameHeaderSize];
  if (!read_exact(fd, header, sizeof header, deadline_s, start, timed_out)) return false;
  FrameHeader h = decode_frame_header(ByteView(header, sizeof header));
  if (h.payload_len < 8 || h.payload_len > kMaxFrameBytes) {
    throw FabricError("bad frame payload length " + std::to_string(h.payload_len));
  }
  Bytes body(h.payload_len);
  bool t2 = false;
  if (!read_exact(fd, body.data(), body.size(), deadline_s, start, &t2)) {
    if (t2) {
      *timed_out = true;
      return false;
    }
    throw FabricError("connection closed mid-frame");
  }
  out->tag = h.tag;
  out->src = get_u32le(body.data());
  out->dst = get_u32le(body.data() + 4);
  out->payload.assign(body.begin() + 8, body.end());
  return true;
}

}  // namespace

// Rank-0-hosted router: every agent holds one connection to it; frames
// are forwarded to their destination's connection. Per-connection reader
// threads never block on downstream writes (unbounded per-destination
// queues drained by writer threads), so collectives cannot deadlock on
// socket buffers.
class LocalFabricImpl {
 public:
  LocalFabricImpl(const Topology& topo, const LocalFabricOptions& opts)
      : topo_(topo), timeout_s_(opts.timeout_s) {
    Addr addr = parse_addr(opts.addr);
    uint16_t port = 0;
    listener_ = tcp_listen(addr, static_cast<int>(topo.total_ranks()) + 8, &port);
    connect_addr_ = addr;
    connect_addr_.port = port;
    size_t n = topo.total_ranks();
    conns_.resize(n);
    out_queues_.reserve(n);
    for (size_t i = 0; i < n; ++i) out_queues_.push_back(std::make_unique<OutQueue>());
    accept_thread_ = std::thread([this, n] { accept_loop(n); });
  }

  ~LocalFabricImpl() { shutdown(); }

  const Topology& topology() const { return topo_; }
  double timeout() const { return timeout_s_; }

  // --- agent side ---

  Socket connect_agent(Rank rank) {
    Socket s = tcp_connect(connect_addr_);
    Frame hello{rank, 0, kTagHello, {}};
    write_frame(s.fd(), hello);
    Frame go;
    bool timed_out = false;
    if (!read_frame(s.fd(), &go, timeout_s_, &timed_out) || go.tag != kTagGo) {
      throw FabricError(timed_out ? "timeout waiting for fabric rendezvous"
                                  : "fabric rendezvous failed");
    }
    return s;
  }

  void shutdown() {
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& q : out_queues_) {
      std::lock_guard lock(q->mu);
      q->closed = true;
      q->cv.notify_all();
    }
    for (auto& t : reader_threads_) {
      if (t.joinable()) t.join();
    }
    for (auto& t : writer_threads_) {
      if (t.joinable()) t.join();
    }
  }

  // Runs one agent: connect, handshake, execute fn, record any error.
  void run_agent_thread(Rank rank, const std::function<void(Agent&)>& fn,
                        std::exception_ptr* error);

 private:
  struct OutQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Frame> frames;
    bool closed = false;
  };

  void accept_loop(size_t expected) {
    size_t registered = 0;
    std::vector<Socket> pending;
    while (registered < expected) {
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        return;  // listener closed during teardown
      }
      Socket s(fd);
      Frame hello;
      bool timed_out = false;
      if (!read_frame(s.fd(), &hello, timeout_s_, &timed_out) || hello.tag != kTagHello) {
        continue;  // stray connection
      }
      Rank r = hello.src;
      if (r >= conns_.size() || conns_[r].valid()) continue;
      conns_[r] = std::move(s);
      ++registered;
    }
    for (size_t r = 0; r < conns_.size(); ++r) {
      Frame go{0, static_cast<Rank>(r), kTagGo, {}};
      write_frame(conns_[r].fd(), go);
    }
    reader_threads_.reserve(conns_.size());
    writer_threads_.reserve(conns_.size());
    for (size_t r = 0; r < conns_.size(); ++r) {
      reader_threads_.emplace_back([this, r] { reader_loop(r); });
      writer_threads_.emplace_back([this, r] { writer_loop(r); });
    }
  }

  void reader_loop(size_t r) {
    for (;;) {
      Frame f;
      bool timed_out = false;
      bool ok = false;
      try {
        ok = read_frame(conns_[r].fd(), &f, -1.0, &timed_out);
      } catch (const FabricError&) {
        ok = false;  // peer died mid-frame; its waiters will time out
      }
      if (!ok) break;
      if (f.dst >= out_queues_.size()) continue;
      OutQueue& q = *out_queues_[f.dst];
      std::lock_guard lock(q.mu);
      if (q.closed) break;
      q.frames.push_back(std::move(f));
      q.cv.notify_all();
    }
    OutQueue& q = *out_queues_[r];
    std::lock_guard lock(q.mu);
    q.closed = true;
    q.cv.notify_all();
  }

  void writer_loop(size_t r) {
    OutQueue& q = *out_queues_[r];
    for (;;) {
      Frame f;
      {
        std::unique_lock lock(q.mu);
        q.cv.wait(lock, [&] { return q.closed || !q.frames.empty(); });
        if (q.frames.empty()) return;  // closed and drained
        f = std::move(q.frames.front());
        q.frames.pop_front();
      }
      try {
        write_frame(conns_[r].fd(), f);
      } catch (const FabricError&) {
        return;  // destination gone
      }
    }
  }

  Topology topo_;
  double timeout_s_;
  Socket listener_;
  Addr connect_addr_;
  std::vector<Socket> conns_;
  std::vector<std::unique_ptr<OutQueue>> out_queues_;
  std::thread accept_thread_;
  std::vector<std::thread> reader_threads_;
  std::vector<std::thread> writer_threads_;
};

namespace {

// Agent-thread state lives here rather than in the public Agent handle.
struct AgentState {
  Socket sock;
  std::deque<Frame> pending;
};

thread_local AgentState* tls_agent = nullptr;

Frame recv_matching(LocalFabricImpl* impl, const std::function<bool(const Frame&)>& match,
                    const std::string& what) {
  AgentState& st = *tls_agent;
  for (auto it = st.pending.begin(); it != st.pending.end(); ++it) {
    if (match(*it)) {
      Frame f = std::move(*it);
      st.pending.erase(it);
      return f;
    }
  }
  auto start = std::chrono::steady_clock::now();
  for (;;) {
    auto elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double remain = impl->timeout() - elapsed;
    if (remain <= 0) throw FabricTimeout("timeout in " + what);
    Frame f;
    bool timed_out = false;
    if (!read_frame(st.sock.fd(), &f, remain, &timed_out)) {
      if (timed_out) throw FabricTimeout("timeout in " + what);
      throw FabricError("fabric connection closed during " + what);
    }
    if (match(f)) return f;
    st.pending.push_back(std::move(f));
  }
}

size_t group_pos(const std::vector<Rank>& group, Rank r, const char* what) {
  for (size_t i = 0; i < group.size(); ++i) {
    if (group[i] == r) return i;
  }
  throw FabricError(std::string(what) + ": calling rank not in group");
}

}  // namespace

const Topology& Agent::topology() const { return impl_->topology(); }

void Agent::send(Rank dst, uint16_t tag, ByteView payload) {
  if (tag >= 0xff00) throw FabricError("application tags must be below 0xff00");
  if (dst == rank_) throw FabricError("point-to-point send to self");
  if (!impl_->topology().valid_rank(dst)) {
    throw FabricError("send to rank outside topology");
  }
  Frame f{rank_, dst, tag, Bytes(payload.begin(), payload.end())};
  write_frame(tls_agent->sock.fd(), f);
}

Message Agent::recv(Rank src, uint16_t tag) {
  Frame f = recv_matching(
      impl_, [&](const Frame& fr) { return fr.src == src && fr.tag == tag; }, "recv");
  return Message{f.src, f.dst, f.tag, std::move(f.payload)};
}

Message Agent::recv_any(const std::vector<uint16_t>& tags) {
  Frame f = recv_matching(
      impl_,
      [&](const Frame& fr) {
        for (uint16_t t : tags) {
          if (fr.tag == t) return true;
        }
        return false;
      },
      "recv_any");
  return Message{f.src, f.dst, f.tag, std::move(f.payload)};
}

namespace {

void send_internal(Rank self, Rank dst, uint16_t tag, ByteView payload) {
  Frame f{self, dst, tag, Bytes(payload.begin(), payload.end())};
  write_frame(tls_agent->sock.fd(), f);
}

Bytes recv_internal(LocalFabricImpl* impl, Rank src, uint16_t tag, const char* what) {
  Frame f = recv_matching(
      impl, [&](const Frame& fr) { return fr.src == src && fr.tag == tag; }, what);
  return std::move(f.payload);
}

}  // namespace

Bytes Agent::bcast(const std::vector<Rank>& group, Rank root, Bytes payload) {
  if (group.empty()) throw FabricError("bcast: empty group");
  size_t n = group.size();
  size_t root_pos = group_pos(group, root, "bcast root");
  if (std::find(group.begin(), group.end(), root) == group.end()) {
    throw FabricError("bcast root not in group");
  }
  size_t my_pos = group_pos(group, rank_, "bcast");
  size_t rel = (my_pos + n - root_pos) % n;

  // Binomial tree over group positions relative to the root.
  if (rel != 0) {
    size_t step = 1;
    while (step * 2 <= rel) step *= 2;
    size_t parent_rel = rel - step;
    Rank parent = group[(parent_rel + root_pos) % n];
    payload = recv_internal(impl_, parent, kTagBcast, "bcast");
  }
  for (size_t step = 1; step < n; step *= 2) {
    if (rel < step) {
      size_t child_rel = rel + step;
      if (child_rel < n) {
        Rank child = group[(child_rel + root_pos) % n];
        send_internal(rank_, child, kTagBcast, payload);
      }
    }
  }
  return payload;
}

Bytes Agent::allgather(const std::vector<Rank>& group, Bytes chunk) {
  size_t n = group.size();
  if (n == 0) throw FabricError("allgather: empty group");
  size_t pos = group_pos(group, rank_, "allgather");
  std::vector<Bytes> blocks(n);
  blocks[pos] = std::move(chunk);
  if (n > 1) {
    Rank right = group[(pos + 1) % n];
    Rank left = group[(pos + n - 1) % n];
    size_t cur = pos;
    for (size_t step = 0; step + 1 < n; ++step) {
      send_internal(rank_, right, kTagAllgather, blocks[cur]);
      size_t incoming = (pos + n - step - 1) % n;
      blocks[incoming] = recv_internal(impl_, left, kTagAllgather, "allgather");
      cur = incoming;
    }
  }
  // Rank order, not group-position order.
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return group[a] < group[b]; });
  Bytes out;
  for (size_t i : order) append(out, blocks[i]);
  return out;
}

void Agent::barrier(const std::vector<Rank>& group) {
  size_t n = group.size();
  if (n == 0) throw FabricError("barrier: empty group");
  size_t pos = group_pos(group, rank_, "barrier");
  // Gather up a binary tree rooted at position 0, then release down it.
  size_t left = 2 * pos + 1, right = 2 * pos + 2;
  if (left < n) recv_internal(impl_, group[left], kTagBarrierUp, "barrier");
  if (right < n) recv_internal(impl_, group[right], kTagBarrierUp, "barrier");
  if (pos != 0) {
    Rank parent = group[(pos - 1) / 2];
    send_internal(rank_, parent, kTagBarrierUp, {});
    recv_internal(impl_, parent, kTagBarrierDown, "barrier");
  }
  if (left < n) send_internal(rank_, group[left], kTagBarrierDown, {});
  if (right < n) send_internal(rank_, group[right], kTagBarrierDown, {});
}

void LocalFabricImpl::run_agent_thread(Rank rank, const std::function<void(Agent&)>& fn,
                                       std::exception_ptr* error) {
  AgentState state;
  try {
    state.sock = connect_agent(rank);
    tls_agent = &state;
    Agent agent(this, rank);
    fn(agent);
  } catch (...) {
    *error = std::current_exception();
  }
  tls_agent = nullptr;
  state.sock.close_fd();
}

void run_local_agents(const Topology& topo, const LocalFabricOptions& opts,
                      const std::function<void(Agent&)>& fn) {
  LocalFabricImpl impl(topo, opts);
  size_t n = topo.total_ranks();
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(n);
  threads.reserve(n);
  for (size_t r = 0; r < n; ++r) {
    threads.emplace_back(
        [&, r] { impl.run_agent_thread(static_cast<Rank>(r), fn, &errors[r]); });
  }
  for (auto& t : threads) t.join();
  impl.shutdown();
  for (size_t r = 0; r < n; ++r) {
    if (errors[r]) std::rethrow_exception(errors[r]);
  }
}

}  // namespace stagekit::fabric
