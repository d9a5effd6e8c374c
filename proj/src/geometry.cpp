#include "esm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "esm/error.hpp"

namespace esm {

namespace {

// Slack for limits given in degrees and converted on both sides.
constexpr double kLimitSlack = 1e-12;

}  // namespace

double wrap_angle(double angle)
{
    const double two_pi = 2.0 * kPi;
    double wrapped = angle - two_pi * std::floor((angle + kPi) / two_pi);
    // floor() rounding can land exactly on +pi.
    if (wrapped >= kPi)
        wrapped -= two_pi;
    return wrapped;
}

Vec2 rotate(Vec2 v, double angle)
{
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

double Rng::uniform01()
{
    // 53 random mantissa bits.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0)
        u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
}

std::size_t Rng::index(std::size_t n)
{
    if (n == 0)
        throw Error(ErrorCode::InvalidArgument, "Rng::index on empty range");
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
}

Affine2 Affine2::rotation(double angle, Vec2 pivot)
{
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Affine2 a;
    a.linear = {c, -s, s, c};
    const Vec2 rotated = rotate(pivot, angle);
    a.translation = pivot - rotated;
    return a;
}

Affine2 Affine2::translation_by(Vec2 t)
{
    Affine2 a;
    a.translation = t;
    return a;
}

Vec2 Affine2::apply(Vec2 q) const
{
    return {linear[0] * q.x + linear[1] * q.y + translation.x,
            linear[2] * q.x + linear[3] * q.y + translation.y};
}

Affine2 Affine2::inverse() const
{
    const double det = determinant();
    Affine2 inv;
    inv.linear = {linear[3] / det, -linear[1] / det, -linear[2] / det, linear[0] / det};
    const Vec2 t = {inv.linear[0] * translation.x + inv.linear[1] * translation.y,
                    inv.linear[2] * translation.x + inv.linear[3] * translation.y};
    inv.translation = {-t.x, -t.y};
    return inv;
}

Affine2 operator*(const Affine2& a, const Affine2& b)
{
    Affine2 c;
    c.linear = {a.linear[0] * b.linear[0] + a.linear[1] * b.linear[2],
                a.linear[0] * b.linear[1] + a.linear[1] * b.linear[3],
                a.linear[2] * b.linear[0] + a.linear[3] * b.linear[2],
                a.linear[2] * b.linear[1] + a.linear[3] * b.linear[3]};
    c.translation = a.apply(b.translation);
    return c;
}

Egomotion validate_egomotion(const Egomotion& e, const ActionLimits& limits)
{
    if (!std::isfinite(e.dtheta) || !std::isfinite(e.heading) || !std::isfinite(e.distance))
        throw Error(ErrorCode::LimitExceeded, "egomotion has non-finite components");
    if (std::abs(e.dtheta) > limits.rot_limit + kLimitSlack) {
        std::ostringstream msg;
        msg << "rotation " << rad_to_deg(e.dtheta) << " deg exceeds limit "
            << rad_to_deg(limits.rot_limit) << " deg";
        throw Error(ErrorCode::LimitExceeded, msg.str());
    }
    if (e.distance < 0.0 || e.distance > limits.trans_limit + kLimitSlack) {
        std::ostringstream msg;
        msg << "translation " << e.distance << " m outside [0, " << limits.trans_limit << "]";
        throw Error(ErrorCode::LimitExceeded, msg.str());
    }
    return e;
}

Pose compose_pose(const Pose& p, const Egomotion& e)
{
    Pose out;
    out.theta = wrap_angle(p.theta + e.dtheta);
    const double direction = out.theta + e.heading;
    out.x = p.x + e.distance * std::cos(direction);
    out.y = p.y + e.distance * std::sin(direction);
    return out;
}

Egomotion inverse_egomotion(const Egomotion& e)
{
    // Undo the rotation, then walk back along the reversed world direction.
    return {-e.dtheta, wrap_angle(e.dtheta + e.heading + kPi), e.distance};
}

Egomotion compose_egomotion(const Egomotion& first, const Egomotion& second)
{
    const Pose mid = compose_pose(Pose{}, first);
    const Pose end = compose_pose(mid, second);
    Egomotion out = relative_egomotion(Pose{}, end);
    // Keep the unwrapped rotation so multi-turn compositions stay exact.
    out.dtheta = first.dtheta + second.dtheta;
    if (out.distance > 0.0)
        out.heading = wrap_angle(std::atan2(end.y, end.x) - out.dtheta);
    return out;
}

Egomotion relative_egomotion(const Pose& from, const Pose& to)
{
    Egomotion e;
    e.dtheta = wrap_angle(to.theta - from.theta);
    const Vec2 delta = to.position() - from.position();
    e.distance = norm(delta);
    if (e.distance > 0.0)
        e.heading = wrap_angle(std::atan2(delta.y, delta.x) - to.theta);
    return e;
}

Pose compose_frames(const Pose& a, const Pose& b)
{
    const Vec2 p = a.position() + rotate(b.position(), a.theta);
    return {p.x, p.y, wrap_angle(a.theta + b.theta)};
}

Pose invert_frame(const Pose& a)
{
    const Vec2 p = rotate(a.position(), -a.theta);
    return {-p.x, -p.y, wrap_angle(-a.theta)};
}

Affine2 egomotion_to_affine(const Egomotion& e, double cell_size)
{
    if (!(cell_size > 0.0))
        throw Error(ErrorCode::InvalidArgument, "cell_size must be positive");
    // In the previous frame the agent ends at t with orientation dtheta;
    // a fixed point q is seen at R(-dtheta) (q - t) afterwards.
    const double direction = e.dtheta + e.heading;
    const double cells = e.distance / cell_size;
    const Vec2 t = {cells * std::cos(direction), cells * std::sin(direction)};
    Affine2 a = Affine2::rotation(-e.dtheta);
    const Vec2 moved = a.apply(t);
    a.translation = {-moved.x, -moved.y};
    return a;
}

Egomotion perturb_egomotion(const Egomotion& e, const NoiseModel& noise,
                            const ActionLimits& limits, Rng& rng)
{
    if (noise.relative_level < 0.0)
        throw Error(ErrorCode::InvalidArgument, "noise level must be non-negative");
    auto draw = [&]() {
        return noise.distribution == NoiseDistribution::Uniform ? rng.uniform(-1.0, 1.0)
                                                                : rng.normal();
    };
    // Always consume two draws so the stream does not depend on the motion.
    const double u_rot = draw();
    const double u_trans = draw();
    if (noise.relative_level == 0.0)
        return e;

    Egomotion out = e;
    out.dtheta = std::clamp(e.dtheta * (1.0 + noise.relative_level * u_rot),
                            -limits.rot_limit, limits.rot_limit);
    out.distance = std::clamp(e.distance * (1.0 + noise.relative_level * u_trans), 0.0,
                              limits.trans_limit);
    return out;
}

}  // namespace esm
