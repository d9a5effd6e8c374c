#include "esm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esm/error.hpp"

namespace esm {

namespace {

constexpr double kSnap = 1e-9;

double snap(double v)
{
    const double r = std::round(v);
    return std::abs(v - r) < kSnap ? r : v;
}

}  // namespace

Grid::Grid(int rows, int cols, double value) : rows_(rows), cols_(cols)
{
    if (rows < 0 || cols < 0)
        throw Error(ErrorCode::InvalidArgument, "grid dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(rows) * cols, value);
}

void Grid::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

double bilinear_sample(const Grid& grid, double row, double col, double fill)
{
    row = snap(row);
    col = snap(col);
    const double r0f = std::floor(row);
    const double c0f = std::floor(col);
    const double fr = row - r0f;
    const double fc = col - c0f;
    // Far outside: avoid int overflow on the casts below.
    if (r0f < -2.0 || c0f < -2.0 || r0f > grid.rows() + 1.0 || c0f > grid.cols() + 1.0)
        return fill;
    const int r0 = static_cast<int>(r0f);
    const int c0 = static_cast<int>(c0f);

    auto tap = [&](int r, int c) { return grid.contains(r, c) ? grid(r, c) : fill; };

    if (fr == 0.0 && fc == 0.0)
        return tap(r0, c0);
    if (fr == 0.0)
        return (1.0 - fc) * tap(r0, c0) + fc * tap(r0, c0 + 1);
    if (fc == 0.0)
        return (1.0 - fr) * tap(r0, c0) + fr * tap(r0 + 1, c0);
    return (1.0 - fr) * ((1.0 - fc) * tap(r0, c0) + fc * tap(r0, c0 + 1)) +
           fr * ((1.0 - fc) * tap(r0 + 1, c0) + fc * tap(r0 + 1, c0 + 1));
}

Grid warp_map(const Grid& input, const Affine2& a, double fill)
{
    Grid out(input.rows(), input.cols(), fill);
    const Affine2 inv = a.inverse();
    const double cr = input.center_row();
    const double cc = input.center_col();
    int r_begin = 0;
    int r_end = out.rows();
    int c_begin = 0;
    int c_end = out.cols();
    if (fill == 0.0) {
        // Output cells whose taps all miss the nonzero part of the input are
        // exactly zero, so only the image of that part is sampled.
        int r_lo = input.rows();
        int r_hi = -1;
        int c_lo = input.cols();
        int c_hi = -1;
        for (int r = 0; r < input.rows(); ++r) {
            for (int c = 0; c < input.cols(); ++c) {
                if (input(r, c) != 0.0) {
                    r_lo = std::min(r_lo, r);
                    r_hi = std::max(r_hi, r);
                    c_lo = std::min(c_lo, c);
                    c_hi = std::max(c_hi, c);
                }
            }
        }
        if (r_hi < 0)
            return out;
        double lo_r = std::numeric_limits<double>::infinity();
        double hi_r = -lo_r;
        double lo_c = lo_r;
        double hi_c = -lo_r;
        for (double r : {r_lo - 1.0, r_hi + 1.0}) {
            for (double c : {c_lo - 1.0, c_hi + 1.0}) {
                const Vec2 o = a.apply({r - cr, c - cc});
                lo_r = std::min(lo_r, o.x + cr);
                hi_r = std::max(hi_r, o.x + cr);
                lo_c = std::min(lo_c, o.y + cc);
                hi_c = std::max(hi_c, o.y + cc);
            }
        }
        auto clip = [](double v, int n) { return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(n))); };
        r_begin = clip(std::floor(lo_r) - 2.0, out.rows());
        r_end = clip(std::ceil(hi_r) + 3.0, out.rows());
        c_begin = clip(std::floor(lo_c) - 2.0, out.cols());
        c_end = clip(std::ceil(hi_c) + 3.0, out.cols());
    }
    for (int r = r_begin; r < r_end; ++r) {
        for (int c = c_begin; c < c_end; ++c) {
            const Vec2 src = inv.apply({r - cr, c - cc});
            out(r, c) = bilinear_sample(input, src.x + cr, src.y + cc, fill);
        }
    }
    return out;
}

Grid rotate_quarter(const Grid& input, int quarter_turns, double fill)
{
    if (input.rows() != input.cols())
        throw Error(ErrorCode::ShapeMismatch, "rotate_quarter needs a square grid");
    const int turns = ((quarter_turns % 4) + 4) % 4;
    if (turns == 0)
        return input;
    Grid out(input.rows(), input.cols(), fill);
    const int center = input.center_row();
    for (int r = 0; r < out.rows(); ++r) {
        for (int c = 0; c < out.cols(); ++c) {
            // Inverse-map output offset back to the source.
            int dr = r - center;
            int dc = c - center;
            for (int k = 0; k < turns; ++k) {
                const int t = dr;
                dr = dc;
                dc = -t;
            }
            const int sr = dr + center;
            const int sc = dc + center;
            if (input.contains(sr, sc))
                out(r, c) = input(sr, sc);
        }
    }
    return out;
}

}  // namespace esm
