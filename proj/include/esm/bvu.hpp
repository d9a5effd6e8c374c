#pragma once

#include "esm/geometry.hpp"
#include "esm/grid.hpp"

namespace esm {

struct MergeParams {
    double lambda = 0.5;
};

// tanh(lambda * obs + (1 - lambda) * warped), elementwise.
Grid merge_maps(const Grid& warped, const Grid& obs, const MergeParams& params);

// One recurrent local-map update: warp the previous map into the current
// egocentric frame, then merge the new observation.
Grid bvu_step(const Grid& prev, const Egomotion& e, const Grid& obs, const MergeParams& params);

// Accumulative egocentric local map m_t.
class LocalMapper {
public:
    explicit LocalMapper(MergeParams params = {})
        : params_(params), map_(kLocalSize, kLocalSize, 0.0) {}

    const Grid& step(const Egomotion& e, const Grid& obs);

    const Grid& map() const { return map_; }
    const MergeParams& params() const { return params_; }
    void reset() { map_.fill(0.0); }

private:
    MergeParams params_;
    Grid map_;
};

}  // namespace esm
