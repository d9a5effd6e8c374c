#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "esm/geometry.hpp"

namespace esm {

// Egocentric local map geometry: 32 x 32 cells over 7.68 m, agent at cell
// (16, 16), forward along increasing row, left along increasing column.
inline constexpr int kLocalSize = 32;
inline constexpr double kLocalExtent = 7.68;
inline constexpr double kLocalCell = kLocalExtent / kLocalSize;

// Dense row-major plane of doubles.
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, double value = 0.0);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Cell holding the agent / memory heads.
    int center_row() const { return rows_ / 2; }
    int center_col() const { return cols_ / 2; }

    bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const
    {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    void fill(double value);

    bool same_shape(const Grid& other) const
    {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Grid& a, const Grid& b) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Bilinear sample at fractional (row, col) index. Taps outside the grid read
// `fill`; coordinates within 1e-9 of a lattice point are snapped to it.
double bilinear_sample(const Grid& grid, double row, double col, double fill);

// output(o) = bilinear sample of `input` at a^-1(o), where o is measured in
// cells from the center cell. Out-of-range samples read `fill`.
Grid warp_map(const Grid& input, const Affine2& a, double fill = 0.0);

// Rotates a square grid by quarter turns (counterclockwise in (row, col))
// about its center cell; cells rotated in from outside get `fill`.
Grid rotate_quarter(const Grid& input, int quarter_turns, double fill = 0.0);

}  // namespace esm
