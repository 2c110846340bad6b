#pragma once

#include <cstdint>

#include "p3d/volume.hpp"

namespace p3d {

/// Random head-like phantom: an outer ellipsoid shell with several inner
/// ellipsoids of different intensity, 2x supersampled for partial-volume
/// edges. Values in [0, 1].
Volume ellipsoid_phantom(const Dims& dims, std::uint64_t seed);

}  // namespace p3d
