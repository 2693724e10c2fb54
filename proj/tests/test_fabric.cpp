#include "stagekit/fabric.hpp"

#include <gtest/gtest.h>

#include "stagekit/rng.hpp"

using namespace stagekit;
using namespace stagekit::fabric;

TEST(Topology, SingleRank) {
  Topology t = build_topology(1, 1);
  EXPECT_EQ(t.total_ranks(), 1u);
  EXPECT_EQ(t.node_of(0), 0u);
}

TEST(Topology, NodeMajorAssignment) {
  Topology t = build_topology(2, 3);
  EXPECT_EQ(t.total_ranks(), 6u);
  for (Rank r : {0u, 1u, 2u}) EXPECT_EQ(t.node_of(r), 0u);
  for (Rank r : {3u, 4u, 5u}) EXPECT_EQ(t.node_of(r), 1u);
}

TEST(Topology, LargeArithmetic) {
  Topology t = build_topology(8192, 16);
  EXPECT_EQ(t.total_ranks(), 131072u);
  EXPECT_EQ(t.node_of(131071), 8191u);
}

TEST(Topology, ZeroCountsRejected) {
  EXPECT_THROW(build_topology(0, 1), FabricError);
  EXPECT_THROW(build_topology(1, 0), FabricError);
}

TEST(Leaders, SingleNode) {
  LeaderSet ls = leader_set(build_topology(1, 4));
  ASSERT_EQ(ls.leaders.size(), 1u);
  EXPECT_EQ(ls.leaders[0], 0u);
}

TEST(Leaders, LowestRankPerNode) {
  LeaderSet ls = leader_set(build_topology(3, 2));
  EXPECT_EQ(ls.leaders, (std::vector<Rank>{0, 2, 4}));
}

TEST(Leaders, LargeCase) {
  LeaderSet ls = leader_set(build_topology(8192, 16));
  ASSERT_EQ(ls.leaders.size(), 8192u);
  EXPECT_EQ(ls.leaders.back(), 131056u);
}

TEST(Leaders, ExactlyOnePerNodeProperty) {
  for (uint32_t n = 1; n <= 64; n *= 2) {
    for (uint32_t a = 1; a <= 8; ++a) {
      Topology t = build_topology(n, a);
      LeaderSet ls = leader_set(t);
      ASSERT_EQ(ls.leaders.size(), n);
      for (uint32_t i = 0; i < n; ++i) {
        EXPECT_EQ(t.node_of(ls.leaders[i]), i);
        EXPECT_EQ(ls.leaders[i] % a, 0u);  // lowest rank on its node
      }
    }
  }
}

// -------------------------------------------------------------- net cost

TEST(NetModel, BcastTreeCost) {
  NetModel net;
  net.b_net_bytes_per_s = 10e9;
  net.alpha_s = 0;
  EXPECT_DOUBLE_EQ(net.bcast_seconds(1, 100 << 20), 0.0);
  // 2 rounds x 100 MB / 10 GB/s
  EXPECT_DOUBLE_EQ(net.bcast_seconds(4, 100000000), 0.02);
}

TEST(NetModel, AllgatherRingCost) {
  NetModel net;
  net.b_net_bytes_per_s = 10e9;
  net.alpha_s = 0;
  EXPECT_DOUBLE_EQ(net.allgather_seconds(1, 25000000), 0.0);
  EXPECT_DOUBLE_EQ(net.allgather_seconds(4, 25000000), 0.0075);
}

TEST(NetModel, BarrierCost) {
  NetModel net;
  net.alpha_s = 1e-6;
  EXPECT_DOUBLE_EQ(net.barrier_seconds(8), 6e-6);
  EXPECT_DOUBLE_EQ(net.barrier_seconds(1), 0.0);
}

TEST(NetModel, ChunkingAddsLatencyPerChunk) {
  NetModel net;
  net.b_net_bytes_per_s = 1e9;
  net.alpha_s = 1e-3;
  net.chunk_bytes = 4 << 20;
  // 9 MiB -> 3 chunks -> 3 latencies + transfer
  uint64_t bytes = 9ull << 20;
  EXPECT_DOUBLE_EQ(net.message_seconds(bytes),
                   3e-3 + static_cast<double>(bytes) / 1e9);
  // zero-byte message still pays one latency
  EXPECT_DOUBLE_EQ(net.message_seconds(0), 1e-3);
}

TEST(CeilLog2, Values) {
  EXPECT_EQ(ceil_log2(1), 0u);
  EXPECT_EQ(ceil_log2(2), 1u);
  EXPECT_EQ(ceil_log2(3), 2u);
  EXPECT_EQ(ceil_log2(4), 2u);
  EXPECT_EQ(ceil_log2(5), 3u);
  EXPECT_EQ(ceil_log2(8192), 13u);
}

// ------------------------------------------------------------ sim fabric

TEST(SimFabric, BcastDeliversAndCharges) {
  NetModel net;
  net.b_net_bytes_per_s = 10e9;
  net.alpha_s = 0;
  SimFabric fab(build_topology(4, 1), net);
  Bytes payload = to_bytes(std::string(100000000, 'x'));
  Bytes got = fab.bcast({0, 1, 2, 3}, 0, payload);
  EXPECT_EQ(got.size(), payload.size());
  EXPECT_DOUBLE_EQ(fab.now(), 0.02);
}

TEST(SimFabric, SingleMemberGroupIsFree) {
  SimFabric fab(build_topology(1, 1), NetModel{10e9, 1e-3, 4 << 20});
  fab.bcast({0}, 0, to_bytes("hello"));
  fab.barrier({0});
  EXPECT_DOUBLE_EQ(fab.now(), 0.0);
}

TEST(SimFabric, RootMustBeInGroup) {
  SimFabric fab(build_topology(4, 1), NetModel{});
  EXPECT_THROW(fab.bcast({0, 1}, 3, {}), FabricError);
}

TEST(SimFabric, AllgatherConcatenatesInRankOrder) {
  SimFabric fab(build_topology(3, 1), NetModel{10e9, 0, 4 << 20});
  std::vector<Bytes> chunks = {to_bytes("a"), to_bytes("b"), to_bytes("c")};
  Bytes out = fab.allgather({0, 1, 2}, chunks);
  EXPECT_EQ(to_string(out), "abc");
  // group listed out of order: still rank order
  std::vector<Bytes> shuffled = {to_bytes("c"), to_bytes("a"), to_bytes("b")};
  Bytes out2 = fab.allgather({2, 0, 1}, shuffled);
  EXPECT_EQ(to_string(out2), "abc");
}

TEST(SimFabric, AllgatherCostUsesMaxChunk) {
  NetModel net;
  net.b_net_bytes_per_s = 10e9;
  net.alpha_s = 0;
  SimFabric fab(build_topology(4, 1), net);
  std::vector<Bytes> chunks(4);
  chunks[0] = Bytes(25000000, 1);
  chunks[1] = Bytes(25000000, 2);
  chunks[2] = Bytes(25000000, 3);
  chunks[3] = Bytes(25000000, 4);
  fab.allgather({0, 1, 2, 3}, chunks);
  EXPECT_DOUBLE_EQ(fab.now(), 0.0075);
}

TEST(SimFabric, ClockIsMonotone) {
  SimFabric fab(build_topology(8, 1), NetModel{1e9, 1e-6, 4 << 20});
  std::vector<Rank> group = {0, 1, 2, 3, 4, 5, 6, 7};
  double prev = fab.now();
  for (int i = 0; i < 10; ++i) {
    fab.barrier(group);
    EXPECT_GE(fab.now(), prev);
    prev = fab.now();
  }
  EXPECT_DOUBLE_EQ(fab.now(), 10 * 6e-6);
}

TEST(VirtualClockTest, RejectsBackwardMotion) {
  VirtualClock c;
  c.advance(1.5);
  EXPECT_DOUBLE_EQ(c.now(), 1.5);
  EXPECT_THROW(c.advance(-0.1), FabricError);
  EXPECT_THROW(c.advance_to(1.0), FabricError);
}

// ------------------------------------------------------------ wire format

TEST(FrameHeader, GoldenBytes) {
  Bytes h = encode_frame_header(7, 0x1122334455667788ull);
  ASSERT_EQ(h.size(), kFrameHeaderSize);
  EXPECT_EQ(h[0], 'S');
  EXPECT_EQ(h[1], 'T');
  EXPECT_EQ(h[2], 'G');
  EXPECT_EQ(h[3], 'K');
  EXPECT_EQ(h[4], 1);  // version u16 LE
  EXPECT_EQ(h[5], 0);
  EXPECT_EQ(h[6], 7);  // tag u16 LE
  EXPECT_EQ(h[7], 0);
  // payload length u64 LE
  const uint8_t expect_len[8] = {0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(h[8 + i], expect_len[i]) << i;
}

TEST(FrameHeader, RoundTrip) {
  Bytes h = encode_frame_header(42, 1234567);
  FrameHeader decoded = decode_frame_header(h);
  EXPECT_EQ(decoded.version, kFrameVersion);
  EXPECT_EQ(decoded.tag, 42);
  EXPECT_EQ(decoded.payload_len, 1234567u);
}

TEST(FrameHeader, BadMagicRejected) {
  Bytes h = encode_frame_header(1, 1);
  h[0] = 'X';
  EXPECT_THROW(decode_frame_header(h), FabricError);
}

TEST(FrameHeader, WrongVersionRejected) {
  Bytes h = encode_frame_header(1, 1);
  h[4] = 9;
  EXPECT_THROW(decode_frame_header(h), FabricError);
}
