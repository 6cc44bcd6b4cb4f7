#include <doctest.h>

#include "dmm/layout.hpp"
#include "dmm/rng.hpp"
#include "support.hpp"

using namespace dmm;
using testutil::make_machine;

namespace {

// Direct-application oracle for permutation schedules.
std::vector<word> apply_perm_directly(const std::vector<word>& grid, u32 W, u32 M,
                                      const std::vector<std::pair<u32, u32>>& perm) {
    std::vector<word> out(grid.size());
    for (u32 r = 0; r < W; ++r)
        for (u32 c = 0; c < M; ++c) {
            auto [dr, dc] = perm[u64(r) * M + c];
            out[u64(dr) * M + dc] = grid[u64(r) * M + c];
        }
    return out;
}

std::vector<std::pair<u32, u32>> random_cell_perm(Rng& rng, u32 W, u32 M) {
    auto lin = random_permutation(rng, u64(W) * M);
    std::vector<std::pair<u32, u32>> perm(lin.size());
    for (std::size_t i = 0; i < lin.size(); ++i)
        perm[i] = {u32(lin[i] / M), u32(lin[i] % M)};
    return perm;
}

std::vector<word> iota_grid(u64 n) {
    std::vector<word> g(n);
    for (u64 i = 0; i < n; ++i)
        g[i] = i;
    return g;
}

}  // namespace

TEST_CASE("transpose_square") {
    SUBCASE("1x1 identity, no steps") {
        Machine m = make_machine(1, 1);
        MatrixView v = MatrixView::full(m);
        v.load({5});
        transpose_square(v);
        CHECK(m.steps() == 0);
        CHECK(v.snapshot() == std::vector<word>{5});
    }
    SUBCASE("2x2") {
        Machine m = make_machine(2, 2);
        MatrixView v = MatrixView::full(m);
        v.load({1, 2, 3, 4});  // [[a,b],[c,d]]
        transpose_square(v);
        CHECK(v.snapshot() == std::vector<word>{1, 3, 2, 4});
    }
    SUBCASE("involution on random 64x64, within step bound") {
        Rng rng(7);
        Machine m = make_machine(64, 64);
        TraceAuditor aud(64);
        m.attach_auditor(&aud);
        MatrixView v = MatrixView::full(m);
        auto grid = testutil::random_grid(rng, 64 * 64, 0, 1u << 30);
        v.load(grid);
        transpose_square(v);
        const u64 once = m.steps();
        CHECK(once <= 4 * 64);
        transpose_square(v);
        CHECK(v.snapshot() == grid);
        CHECK(aud.clean());
    }
    SUBCASE("non-square rejected") {
        Machine m = make_machine(4, 8);
        CHECK_THROWS_AS(transpose_square(MatrixView::full(m)), NotSquare);
    }
}

TEST_CASE("layout conversions") {
    SUBCASE("2x4 example") {
        Machine m = make_machine(2, 4);
        MatrixView v = MatrixView::full(m);
        v.load({1, 2, 3, 4, 5, 6, 7, 8});  // [a..d],[e..h]
        to_column_major(v);
        CHECK(v.snapshot() == std::vector<word>{1, 3, 5, 7, 2, 4, 6, 8});
    }
    SUBCASE("mutually inverse on random 8x32") {
        Rng rng(21);
        Machine m = make_machine(8, 32);
        MatrixView v = MatrixView::full(m);
        for (int t = 0; t < 10; ++t) {
            auto grid = testutil::random_grid(rng, 8 * 32, 0, 1000);
            v.load(grid);
            to_column_major(v);
            to_row_major(v);
            CHECK(v.snapshot() == grid);
        }
    }
    SUBCASE("square conversion coincides with transpose") {
        Rng rng(3);
        Machine a = make_machine(4, 4);
        Machine b = make_machine(4, 4);
        MatrixView va = MatrixView::full(a), vb = MatrixView::full(b);
        auto grid = testutil::random_grid(rng, 16, 0, 99);
        va.load(grid);
        vb.load(grid);
        to_column_major(va);
        transpose_square(vb);
        CHECK(va.snapshot() == vb.snapshot());
    }
    SUBCASE("conversion round-trip across many shapes, divisible or not") {
        Rng rng(97);
        for (int t = 0; t < 60; ++t) {
            const u32 W = 1 + u32(rng_below(rng, 24));
            const u32 M = 1 + u32(rng_below(rng, 24));
            Machine m = make_machine(W, M);
            TraceAuditor aud(W);
            m.attach_auditor(&aud);
            MatrixView v = MatrixView::full(m);
            auto grid = iota_grid(u64(W) * M);
            v.load(grid);
            to_column_major(v);
            auto snap = v.snapshot();
            for (u32 r = 0; r < W; ++r)
                for (u32 c = 0; c < M; ++c) {
                    const u64 lin = u64(r) * M + c;
                    CHECK(snap[(lin % W) * M + u32(lin / W)] == lin);
                }
            to_row_major(v);
            CHECK(v.snapshot() == grid);
            CHECK(aud.clean());
        }
    }
    SUBCASE("non-divisible shapes via the generic scheduler") {
        Rng rng(5);
        Machine m = make_machine(6, 9);
        TraceAuditor aud(6);
        m.attach_auditor(&aud);
        MatrixView v = MatrixView::full(m);
        auto grid = iota_grid(54);
        v.load(grid);
        to_column_major(v);
        // oracle: linear index i*M+j lands at (v mod W, v div W)
        auto snap = v.snapshot();
        for (u32 r = 0; r < 6; ++r)
            for (u32 c = 0; c < 9; ++c) {
                const u64 lin = grid[u64(r) * 9 + c];
                CHECK(snap[(lin % 6) * 9 + (lin / 6)] == lin);
            }
        to_row_major(v);
        CHECK(v.snapshot() == grid);
        CHECK(aud.clean());
    }
}

TEST_CASE("offline_schedule") {
    SUBCASE("identity permutation gives m same-bank rounds") {
        const u32 W = 4, M = 3;
        std::vector<std::pair<u32, u32>> perm;
        for (u32 r = 0; r < W; ++r)
            for (u32 c = 0; c < M; ++c)
                perm.push_back({r, c});
        Schedule s = offline_schedule(W, M, perm);
        CHECK(s.rounds.size() <= M);
        s.validate(W, M);
        for (const auto& round : s.rounds)
            for (const Move& mv : round)
                CHECK(mv.src_bank == mv.dst_bank);
    }
    SUBCASE("conversion permutation for 4x4 equals transpose") {
        const u32 W = 4, M = 4;
        std::vector<std::pair<u32, u32>> perm;
        for (u32 r = 0; r < W; ++r)
            for (u32 c = 0; c < M; ++c) {
                const u64 lin = u64(r) * M + c;
                perm.push_back({u32(lin % W), u32(lin / W)});
            }
        Schedule s = offline_schedule(W, M, perm);
        CHECK(s.rounds.size() <= 4);
        s.validate(W, M);

        Machine m = make_machine(4, 4);
        MatrixView v = MatrixView::full(m);
        auto grid = iota_grid(16);
        v.load(grid);
        apply_schedule(v, s);  // lands in the s0 window
        std::vector<word> moved;
        for (u32 r = 0; r < 4; ++r)
            for (u32 c = 0; c < 4; ++c)
                moved.push_back(m.peek(r, v.s0(c)));
        // transpose oracle
        std::vector<word> tr(16);
        for (u32 r = 0; r < 4; ++r)
            for (u32 c = 0; c < 4; ++c)
                tr[c * 4 + r] = grid[r * 4 + c];
        CHECK(moved == tr);
        CHECK(m.steps() == 2 * s.rounds.size());
    }
    SUBCASE("random permutations match the direct-application oracle") {
        Rng rng(11);
        Machine m = make_machine(16, 8);
        MatrixView v = MatrixView::full(m);
        for (int t = 0; t < 20; ++t) {
            auto perm = random_cell_perm(rng, 16, 8);
            Schedule s = offline_schedule(16, 8, perm);
            CHECK(s.rounds.size() <= 8);
            s.validate(16, 8);
            auto grid = iota_grid(128);
            TraceAuditor aud(16);
            m.attach_auditor(&aud);
            v.load(grid);
            apply_schedule(v, s);
            std::vector<word> moved;
            for (u32 r = 0; r < 16; ++r)
                for (u32 c = 0; c < 8; ++c)
                    moved.push_back(m.peek(r, v.s0(c)));
            CHECK(moved == apply_perm_directly(grid, 16, 8, perm));
            CHECK(aud.clean());
            m.attach_auditor(nullptr);
        }
    }
    SUBCASE("non-bijections rejected") {
        std::vector<std::pair<u32, u32>> bad(8, {0, 0});
        CHECK_THROWS_AS(offline_schedule(4, 2, bad), NotBijective);
    }
    SUBCASE("empty schedule costs no steps") {
        Machine m = make_machine(2, 2);
        MatrixView v = MatrixView::full(m);
        Schedule s;
        apply_schedule(v, s);
        CHECK(m.steps() == 0);
    }
    SUBCASE("one-round schedule costs two steps") {
        Machine m = make_machine(4, 2);
        MatrixView v = MatrixView::full(m);
        Schedule s;
        s.rounds.push_back({{0, 0, 1, 0}, {1, 0, 2, 0}, {2, 0, 3, 0}, {3, 0, 0, 0}});
        apply_schedule(v, s);
        CHECK(m.steps() == 2);
    }
}

TEST_CASE("schedule text round-trip") {
    Rng rng(13);
    auto perm = random_cell_perm(rng, 5, 7);
    Schedule s = offline_schedule(5, 7, perm);
    Schedule back = schedule_from_text(schedule_to_text(s));
    REQUIRE(back.rounds.size() == s.rounds.size());
    for (std::size_t i = 0; i < s.rounds.size(); ++i) {
        REQUIRE(back.rounds[i].size() == s.rounds[i].size());
        for (std::size_t j = 0; j < s.rounds[i].size(); ++j) {
            CHECK(back.rounds[i][j].src_bank == s.rounds[i][j].src_bank);
            CHECK(back.rounds[i][j].dst_off == s.rounds[i][j].dst_off);
        }
    }
}
