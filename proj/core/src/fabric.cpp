#include "stagekit/fabric.hpp"

#include <algorithm>
#include <cstring>
#include <map>

namespace stagekit::fabric {

Topology build_topology(uint32_t nodes, uint32_t agents_per_node) {
  if (nodes == 0) throw FabricError("topology needs at least one node");
  if (agents_per_node == 0) throw FabricError("topology needs at least one agent per node");
  return Topology{nodes, agents_per_node};
}

LeaderSet leader_set(const Topology& topo) {
  LeaderSet ls;
  ls.leaders.reserve(topo.nodes);
  for (uint32_t n = 0; n < topo.nodes; ++n) {
    ls.leaders.push_back(static_cast<Rank>(n) * topo.agents_per_node);
  }
  return ls;
}

uint32_t ceil_log2(uint64_t n) {
  uint32_t r = 0;
  uint64_t p = 1;
  while (p < n) {
    p <<= 1;
    ++r;
  }
  return r;
}

double NetModel::message_seconds(uint64_t bytes) const {
  uint64_t chunks = bytes == 0 ? 1 : (bytes + chunk_bytes - 1) / chunk_bytes;
  return static_cast<double>(chunks) * alpha_s +
         static_cast<double>(bytes) / b_net_bytes_per_s;
}

double NetModel::bcast_seconds(uint64_t group_size, uint64_t bytes) const {
  if (group_size <= 1) return 0.0;
  return static_cast<double>(ceil_log2(group_size)) * message_seconds(bytes);
}

double NetModel::allgather_seconds(uint64_t group_size, uint64_t chunk) const {
  if (group_size <= 1) return 0.0;
  return static_cast<double>(group_size - 1) * message_seconds(chunk);
}

double NetModel::barrier_seconds(uint64_t group_size) const {
  if (group_size <= 1) return 0.0;
  return 2.0 * static_cast<double>(ceil_log2(group_size)) * alpha_s;
}

static void check_group(const Topology& topo, const std::vector<Rank>& group) {
  if (group.empty()) throw FabricError("empty communication group");
  for (Rank r : group) {
    if (!topo.valid_rank(r)) {
      throw FabricError("rank " + std::to_string(r) + " outside topology");
    }
  }
}

Bytes SimFabric::bcast(const std::vector<Rank>& group, Rank root, Bytes payload) {
  check_group(topo_, group);
  if (std::find(group.begin(), group.end(), root) == group.end()) {
    throw FabricError("bcast root " + std::to_string(root) + " not in group");
  }
  clock_.advance(net_.bcast_seconds(group.size(), payload.size()));
  return payload;
}

Bytes SimFabric::allgather(const std::vector<Rank>& group, const std::vector<Bytes>& chunks) {
  check_group(topo_, group);
  if (chunks.size() != group.size()) {
    throw FabricError("allgather needs one chunk per group member");
  }
  uint64_t max_chunk = 0;
  for (const Bytes& c : chunks) max_chunk = std::max<uint64_t>(max_chunk, c.size());
  clock_.advance(net_.allgather_seconds(group.size(), max_chunk));

  // Concatenate in rank order regardless of the order the group was given.
  std::map<Rank, const Bytes*> by_rank;
  for (size_t i = 0; i < group.size(); ++i) by_rank[group[i]] = &chunks[i];
  if (by_rank.size() != group.size()) throw FabricError("duplicate rank in group");
  Bytes out;
  for (const auto& [rank, chunk] : by_rank) append(out, *chunk);
  return out;
}

void SimFabric::barrier(const std::vector<Rank>& group) {
  check_group(topo_, group);
  clock_.advance(net_.barrier_seconds(group.size()));
}

Bytes encode_frame_header(uint16_t tag, uint64_t payload_len) {
  Bytes h;
  h.reserve(kFrameHeaderSize);
  h.insert(h.end(), kFrameMagic, kFrameMagic + 4);
  put_u16le(h, kFrameVersion);
  put_u16le(h, tag);
  put_u64le(h, payload_len);
  return h;
}

FrameHeader decode_frame_header(ByteView header16) {
  if (header16.size() != kFrameHeaderSize) {
    throw FabricError("frame header must be 16 bytes");
  }
  if (std::memcmp(header16.data(), kFrameMagic, 4) != 0) {
    throw FabricError("bad frame magic");
  }
  FrameHeader h;
  h.version = get_u16le(header16.data() + 4);
  h.tag = get_u16le(header16.data() + 6);
  h.payload_len = get_u64le(header16.data() + 8);
  if (h.version != kFrameVersion) {
    throw FabricError("unsupported frame version " + std::to_string(h.version));
  }
  return h;
}

}  // namespace stagekit::fabric
