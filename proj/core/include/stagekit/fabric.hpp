#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stagekit/bytes.hpp"
#include "stagekit/errors.hpp"

namespace stagekit::fabric {

using Rank = uint32_t;

// nodes x agents-per-node layout; ranks are assigned node-major, so rank
// r lives on node r / agents_per_node.
struct Topology {
  uint32_t nodes = 1;
  uint32_t agents_per_node = 1;

  uint64_t total_ranks() const {
    return static_cast<uint64_t>(nodes) * agents_per_node;
  }
  uint32_t node_of(Rank r) const { return r / agents_per_node; }
  bool valid_rank(Rank r) const { return r < total_ranks(); }
};

Topology build_topology(uint32_t nodes, uint32_t agents_per_node);

// Exactly one rank per node; the leader of node n is the lowest rank on
// it (n * agents_per_node).
struct LeaderSet {
  std::vector<Rank> leaders;
};

LeaderSet leader_set(const Topology& topo);

struct Message {
  Rank src = 0;
  Rank dst = 0;
  uint16_t tag = 0;
  Bytes payload;
};

// Monotone simulated seconds.
class VirtualClock {
 public:
  double now() const { return now_; }
  void advance(double seconds) {
    if (seconds < 0) throw FabricError("clock cannot move backwards");
    now_ += seconds;
  }
  void advance_to(double t) {
    if (t < now_) throw FabricError("clock cannot move backwards");
    now_ = t;
  }

 private:
  double now_ = 0.0;
};

// Interconnect cost model. A message of b bytes costs one latency per
// 4 MiB chunk (the chunk size is a knob) plus b / bandwidth; collectives
// compose messages per standard algorithms: binomial tree broadcast,
// ring allgather, tree-up/tree-down barrier.
struct NetModel {
  double b_net_bytes_per_s = 10e9;
  double alpha_s = 0.0;
  uint64_t chunk_bytes = 4ull << 20;

  double message_seconds(uint64_t bytes) const;
  double bcast_seconds(uint64_t group_size, uint64_t bytes) const;
  double allgather_seconds(uint64_t group_size, uint64_t chunk) const;
  double barrier_seconds(uint64_t group_size) const;
};

uint32_t ceil_log2(uint64_t n);

// Deterministic simulated fabric: group operations advance the shared
// virtual clock by the NetModel cost and deliver payloads logically. The
// group synchronizes at each collective, which mirrors the lockstep
// structure of the staging pipeline.
class SimFabric {
 public:
  SimFabric(Topology topo, NetModel net) : topo_(topo), net_(net) {}

  const Topology& topology() const { return topo_; }
  const NetModel& net() const { return net_; }
  VirtualClock& clock() { return clock_; }
  double now() const { return clock_.now(); }

  // Every member ends up holding the returned payload.
  Bytes bcast(const std::vector<Rank>& group, Rank root, Bytes payload);

  // chunks[i] is the contribution of group[i]; the result is the
  // concatenation in rank order (not group-position order).
  Bytes allgather(const std::vector<Rank>& group, const std::vector<Bytes>& chunks);

  void barrier(const std::vector<Rank>& group);

 private:
  Topology topo_;
  NetModel net_;
  VirtualClock clock_;
};

// ----------------------------------------------------------------- local

// Real multi-agent backend: one execution context per rank on this host,
// exchanging frames over loopback byte-stream sockets. Rank 0's listener
// is the rendezvous point; every agent connects to it and frames are
// routed through it. Wire format per frame: 16-byte header (magic "STGK",
// version u16 LE, tag u16 LE, payload length u64 LE), then the payload.
// Routed payloads begin with an 8-byte src/dst preamble added by the
// transport.

inline constexpr char kFrameMagic[4] = {'S', 'T', 'G', 'K'};
inline constexpr uint16_t kFrameVersion = 1;
inline constexpr size_t kFrameHeaderSize = 16;
inline constexpr const char* kFabricAddrEnv = "STAGEKIT_FABRIC_ADDR";

// Reserved control tags (application tags stay below these).
inline constexpr uint16_t kTagHello = 0xfff0;
inline constexpr uint16_t kTagGo = 0xfff1;

Bytes encode_frame_header(uint16_t tag, uint64_t payload_len);

struct FrameHeader {
  uint16_t version = 0;
  uint16_t tag = 0;
  uint64_t payload_len = 0;
};
FrameHeader decode_frame_header(ByteView header16);

class LocalFabricImpl;

// Per-agent handle. Not shareable across agents.
class Agent {
 public:
  Rank rank() const { return rank_; }
  const Topology& topology() const;

  void send(Rank dst, uint16_t tag, ByteView payload);
  Message recv(Rank src, uint16_t tag);
  // Next frame carrying any of `tags`, from any source.
  Message recv_any(const std::vector<uint16_t>& tags);

  Bytes bcast(const std::vector<Rank>& group, Rank root, Bytes payload);
  Bytes allgather(const std::vector<Rank>& group, Bytes chunk);
  void barrier(const std::vector<Rank>& group);

 private:
  friend class LocalFabricImpl;
  Agent(LocalFabricImpl* impl, Rank rank) : impl_(impl), rank_(rank) {}
  LocalFabricImpl* impl_;
  Rank rank_;
};

struct LocalFabricOptions {
  // "host:port"; empty falls back to $STAGEKIT_FABRIC_ADDR, then
  // 127.0.0.1:0 (ephemeral port).
  std::string addr;
  double timeout_s = 30.0;
};

// Runs fn once per rank, each in its own agent context; returns when all
// agents finish. The first agent exception (lowest rank) is rethrown.
void run_local_agents(const Topology& topo, const LocalFabricOptions& opts,
                      const std::function<void(Agent&)>& fn);

}  // namespace stagekit::fabric
