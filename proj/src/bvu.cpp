#include "esm/bvu.hpp"

#include <cmath>

#include "esm/error.hpp"

namespace esm {

Grid merge_maps(const Grid& warped, const Grid& obs, const MergeParams& params)
{
    if (!warped.same_shape(obs))
        throw Error(ErrorCode::ShapeMismatch, "merge_maps: map and observation differ in shape");
    if (!(params.lambda >= 0.0 && params.lambda <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");
    Grid out(warped.rows(), warped.cols());
    const auto w = warped.values();
    const auto o = obs.values();
    auto dst = out.values();
    for (std::size_t k = 0; k < dst.size(); ++k) {
        const double z = params.lambda * o[k] + (1.0 - params.lambda) * w[k];
        dst[k] = std::tanh(z);
    }
    return out;
}

Grid bvu_step(const Grid& prev, const Egomotion& e, const Grid& obs, const MergeParams& params)
{
    const Grid warped = warp_map(prev, egomotion_to_affine(e, kLocalCell), 0.0);
    return merge_maps(warped, obs, params);
}

const Grid& LocalMapper::step(const Egomotion& e, const Grid& obs)
{
    map_ = bvu_step(map_, e, obs, params_);
    return map_;
}

}  // namespace esm
