#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace esm {

inline constexpr double kPi = 3.14159265358979323846;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Normalizes an angle into [-pi, pi).
double wrap_angle(double angle);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

Vec2 rotate(Vec2 v, double angle);
double norm(Vec2 v);

// Agent state in the world frame. theta is counterclockwise from +x.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Vec2 position() const { return {x, y}; }
};

// One step of rigid motion: rotate by dtheta, then move `distance` along
// `heading`, measured relative to the post-rotation orientation.
struct Egomotion {
    double dtheta = 0.0;
    double heading = 0.0;
    double distance = 0.0;
};

struct ActionLimits {
    double rot_limit = deg_to_rad(10.0);
    double trans_limit = 0.1;
    double step_period = 0.25;
};

enum class NoiseDistribution { Uniform, Gaussian };

struct NoiseModel {
    double relative_level = 0.0;
    std::uint64_t seed = 0;
    NoiseDistribution distribution = NoiseDistribution::Uniform;
};

// Seeded generator with a portable mapping from engine output to reals, so
// streams agree across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform01();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    // Standard normal (Box-Muller on uniform01).
    double normal();
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// 2x3 rigid transform acting on (forward, left) coordinates in grid cells:
// q' = L q + t.
struct Affine2 {
    std::array<double, 4> linear{1.0, 0.0, 0.0, 1.0};  // row-major 2x2
    Vec2 translation{};

    static Affine2 identity() { return {}; }
    static Affine2 rotation(double angle, Vec2 pivot = {});
    static Affine2 translation_by(Vec2 t);

    Vec2 apply(Vec2 q) const;
    Affine2 inverse() const;
    double determinant() const { return linear[0] * linear[3] - linear[1] * linear[2]; }
};

// (a * b).apply(q) == a.apply(b.apply(q))
Affine2 operator*(const Affine2& a, const Affine2& b);

Egomotion validate_egomotion(const Egomotion& e, const ActionLimits& limits);

Pose compose_pose(const Pose& p, const Egomotion& e);

// The motion that undoes `e`: compose_pose(compose_pose(p, e), inverse_egomotion(e)) == p.
Egomotion inverse_egomotion(const Egomotion& e);

// Single motion equivalent to applying `first` and then `second`.
Egomotion compose_egomotion(const Egomotion& first, const Egomotion& second);

// Motion taking pose `from` to pose `to`.
Egomotion relative_egomotion(const Pose& from, const Pose& to);

// Rigid-transform algebra on poses: compose_frames(a, b) expresses `b`, given in
// the frame of `a`, in a's parent frame.
Pose compose_frames(const Pose& a, const Pose& b);
Pose invert_frame(const Pose& a);

// Maps previous-egocentric grid coordinates to current-egocentric ones:
// the inverse of the agent's own motion, in units of `cell_size`.
Affine2 egomotion_to_affine(const Egomotion& e, double cell_size);

// Multiplicative noise on dtheta and distance, re-clamped to `limits`.
Egomotion perturb_egomotion(const Egomotion& e, const NoiseModel& noise,
                            const ActionLimits& limits, Rng& rng);

}  // namespace esm
