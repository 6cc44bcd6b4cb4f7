#pragma once

// view.hpp — submatrix views. A view maps a local W'xM' matrix onto a row
// subset and column window of the parent machine; algorithms written against
// views compose under recursion, and disjoint sibling views can run their
// step sequences merged through Machine::lockstep.

#include <numeric>
#include <vector>

#include "dmm/core.hpp"

namespace dmm {

class MatrixView {
  public:
    MatrixView() = default;

    /// Full working view of a machine: input region plus the two standard
    /// scratch windows (output region and scratch A).
    static MatrixView full(Machine& m) {
        MatrixView v;
        v.mach_ = &m;
        v.rows_.resize(m.w());
        std::iota(v.rows_.begin(), v.rows_.end(), 0u);
        v.col_base_ = m.config().work_base();
        v.cols_ = m.m();
        v.s0_base_ = m.config().out_base();
        v.s1_base_ = m.config().scratch_a_base();
        v.check();
        return v;
    }

    static MatrixView make(Machine& m, std::vector<u32> rows, u32 col_base, u32 cols,
                           u32 s0_base, u32 s1_base) {
        MatrixView v;
        v.mach_ = &m;
        v.rows_ = std::move(rows);
        v.col_base_ = col_base;
        v.cols_ = cols;
        v.s0_base_ = s0_base;
        v.s1_base_ = s1_base;
        v.check();
        return v;
    }

    Machine& machine() const { return *mach_; }
    u32 W() const { return static_cast<u32>(rows_.size()); }
    u32 M() const { return cols_; }
    const std::vector<u32>& rows() const { return rows_; }

    u32 bank(u32 r) const { return rows_[r]; }
    u32 off(u32 c) const { return col_base_ + c; }
    u32 s0(u32 c) const { return s0_base_ + c; }
    u32 s1(u32 c) const { return s1_base_ + c; }
    u32 col_base() const { return col_base_; }
    u32 s0_base() const { return s0_base_; }
    u32 s1_base() const { return s1_base_; }

    /// Contiguous row range [lo, lo+count).
    MatrixView row_range(u32 lo, u32 count) const {
        if (u64(lo) + count > rows_.size())
            throw OutOfBounds("row_range outside view");
        MatrixView v(*this);
        v.rows_.assign(rows_.begin() + lo, rows_.begin() + lo + count);
        return v;
    }

    /// Arbitrary row selection by local indices.
    MatrixView pick_rows(const std::vector<u32>& locals) const {
        MatrixView v(*this);
        v.rows_.clear();
        v.rows_.reserve(locals.size());
        for (u32 r : locals) {
            if (r >= rows_.size())
                throw OutOfBounds("pick_rows index outside view");
            v.rows_.push_back(rows_[r]);
        }
        return v;
    }

    /// Column window [lo, lo+count); scratch windows shift along.
    MatrixView col_window(u32 lo, u32 count) const {
        if (u64(lo) + count > cols_)
            throw OutOfBounds("col_window outside view");
        MatrixView v(*this);
        v.col_base_ += lo;
        v.s0_base_ += lo;
        v.s1_base_ += lo;
        v.cols_ = count;
        return v;
    }

    // Host-side grid inspection (row-major snapshot of the working window).
    std::vector<word> snapshot() const {
        std::vector<word> g;
        g.reserve(u64(W()) * M());
        for (u32 r = 0; r < W(); ++r)
            for (u32 c = 0; c < M(); ++c)
                g.push_back(mach_->peek(bank(r), off(c)));
        return g;
    }
    void load(const std::vector<word>& grid) {
        if (grid.size() != u64(W()) * M())
            throw ShapeViolation("grid size mismatch in load");
        for (u32 r = 0; r < W(); ++r)
            for (u32 c = 0; c < M(); ++c)
                mach_->poke(bank(r), off(c), grid[u64(r) * M() + c]);
    }

  private:
    void check() const {
        const auto& cfg = mach_->config();
        std::vector<u32> sorted = rows_;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] >= cfg.w)
                throw OutOfBounds("view row outside machine");
            if (i > 0 && sorted[i] == sorted[i - 1])
                throw OverlappingViews("view rows must be injective");
        }
        if (u64(col_base_) + cols_ > cfg.bank_capacity ||
            u64(s0_base_) + cols_ > cfg.bank_capacity ||
            u64(s1_base_) + cols_ > cfg.bank_capacity)
            throw OutOfBounds("view column window outside bank capacity");
    }

    Machine* mach_ = nullptr;
    std::vector<u32> rows_;
    u32 col_base_ = 0;
    u32 cols_ = 0;
    u32 s0_base_ = 0;
    u32 s1_base_ = 0;
};

/// View factory: row subset plus column range of the working
/// region, with the standard scratch windows alongside.
inline MatrixView make_view(Machine& m, std::vector<u32> rows, u32 col_lo, u32 col_count) {
    const auto& cfg = m.config();
    return MatrixView::make(m, std::move(rows), cfg.work_base() + col_lo, col_count,
                            cfg.out_base() + col_lo, cfg.scratch_a_base() + col_lo);
}

/// Run the same algorithm over disjoint sibling views in merged lockstep.
template <class F>
void lockstep_over(std::vector<MatrixView>& views, F&& body) {
    if (views.empty())
        return;
    views.front().machine().lockstep(views.size(), [&](std::size_t i) { body(views[i]); });
}

// Row-local helpers -----------------------------------------------------------

/// fn(local_row, RowIO&) for every view row, merged into common steps.
template <class F>
void for_rows(const MatrixView& v, F&& fn) {
    v.machine().rows_lockstep(v.rows(), fn);
}

/// Copy `count` words per row from one column window to another (row-local,
/// 2*count steps).
inline void copy_window(const MatrixView& v, u32 from_base, u32 to_base, u32 count) {
    for_rows(v, [&](std::size_t, RowIO& io) {
        for (u32 c = 0; c < count; ++c)
            io.write(to_base + c, io.read(from_base + c));
    });
}

}  // namespace dmm
