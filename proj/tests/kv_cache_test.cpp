#include <gtest/gtest.h>

#include <random>

#include "treeattn/kv_cache.hpp"
#include "treeattn/synth.hpp"

using namespace treeattn;

TEST(PagePool, AllocateCeilingDivision) {
    PagePool pool(8, 16);
    const KvHandle& h = pool.allocate(0, 4000);
    EXPECT_EQ(h.refs.size(), 4000u);
    EXPECT_EQ(pool.page_count(), 250u);

    PagePool p2(8, 16);
    p2.allocate(0, 17);
    EXPECT_EQ(p2.page_count(), 2u);

    PagePool p3(8, 16);
    const KvHandle& empty = p3.allocate(0, 0);
    EXPECT_TRUE(empty.refs.empty());
    EXPECT_EQ(p3.page_count(), 0u);
}

TEST(PagePool, FreeRecyclesPages) {
    PagePool pool(8, 16);
    pool.allocate(0, 16);
    EXPECT_EQ(pool.page_count(), 1u);
    pool.free(0);
    EXPECT_EQ(pool.free_page_count(), 1u);
    // Next allocation reuses the recycled page.
    pool.allocate(1, 10);
    EXPECT_EQ(pool.page_count(), 1u);
    EXPECT_EQ(pool.free_page_count(), 0u);

    EXPECT_THROW(pool.free(0), std::logic_error);  // double free
}

TEST(PagePool, PagesNeverSharedAcrossNodes) {
    PagePool pool(8, 16);
    pool.allocate(0, 3);   // tail page 3/16 used
    pool.allocate(1, 3);   // must land on its own page
    EXPECT_EQ(pool.page_count(), 2u);
    // Freeing node 1 releases its page even though node 0's page is partial.
    pool.free(1);
    EXPECT_EQ(pool.free_page_count(), 1u);
    EXPECT_EQ(pool.live_slots(), 3);
}

TEST(PagePool, ExtendFillsTailFirst) {
    PagePool pool(8, 16);
    KvHandle& h = pool.allocate(0, 10);
    pool.extend(h, 6);
    EXPECT_EQ(pool.page_count(), 1u);
    pool.extend(h, 1);
    EXPECT_EQ(pool.page_count(), 2u);
}

TEST(PagePool, WriteGatherRoundTrip) {
    PagePool pool(4, 16);
    KvHandle& h = pool.allocate(0, 3);
    std::vector<float> k = {1, 2, 3, 4}, v = {5, 6, 7, 8};
    pool.write_kv(h, 0, k, v);
    auto g = pool.gather(std::span<const TokenRef>(h.refs.data(), 1));
    EXPECT_EQ(std::vector<float>(g.keys.begin(), g.keys.end()), k);
    EXPECT_EQ(std::vector<float>(g.values.begin(), g.values.end()), v);

    EXPECT_THROW(pool.write_kv(h, 3, k, v), std::invalid_argument);
    std::vector<float> bad = {1, 2};
    EXPECT_THROW(pool.write_kv(h, 0, bad, v), std::invalid_argument);
}

TEST(PagePool, GatherPreservesOrderBitExact) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> dist(-10, 10);
    PagePool pool(8, 4);
    KvHandle& a = pool.allocate(0, 7);
    KvHandle& b = pool.allocate(1, 5);
    std::vector<std::vector<float>> keys, values;
    auto write_all = [&](KvHandle& h) {
        for (std::size_t t = 0; t < h.refs.size(); ++t) {
            std::vector<float> k(8), v(8);
            for (auto& x : k) x = dist(rng);
            for (auto& x : v) x = dist(rng);
            pool.write_kv(h, static_cast<int>(t), k, v);
            keys.push_back(k);
            values.push_back(v);
        }
    };
    write_all(a);
    write_all(b);

    // Gather across both nodes' refs concatenated: rows match per-node
    // gathers stacked, bit-exact.
    std::vector<TokenRef> refs(a.refs);
    refs.insert(refs.end(), b.refs.begin(), b.refs.end());
    auto g = pool.gather(refs);
    ASSERT_EQ(g.rows, 12);
    for (int t = 0; t < 12; ++t)
        for (int d = 0; d < 8; ++d) {
            EXPECT_EQ(g.keys[t * 8 + d], keys[t][d]);
            EXPECT_EQ(g.values[t * 8 + d], values[t][d]);
        }

    auto empty = pool.gather(std::span<const TokenRef>{});
    EXPECT_EQ(empty.rows, 0);
}

TEST(PagePool, AccountingInvariant) {
    std::mt19937_64 rng(11);
    PagePool pool(4, 16);
    DecodingTree tree = random_tree(rng, {}, &pool);
    EXPECT_EQ(pool.live_slots(), tree.total_tokens());

    // Prune a subtree: live slots drop by exactly its token count.
    for (NodeId leaf : tree.leaves()) {
        if (leaf == tree.root()) continue;
        const std::int64_t drop = tree.node(leaf).token_count;
        const std::int64_t before = pool.live_slots();
        tree.prune(leaf);
        EXPECT_EQ(pool.live_slots(), before - drop);
        break;
    }
}

TEST(PagePool, GatherDanglingRefThrows) {
    PagePool pool(4, 16);
    KvHandle h = pool.allocate(0, 2);  // copy before free
    pool.free(0);
    EXPECT_THROW(pool.gather(h.refs), std::logic_error);
}
