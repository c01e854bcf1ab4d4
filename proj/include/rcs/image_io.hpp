#pragma once

#include "rcs/tv.hpp"

#include <string>

namespace rcs {

/// Binary PGM (P5, maxval 255). Pixels are mapped linearly from [lo, hi] to
/// [0, 255] and clamped.
void write_pgm(const std::string& path, const Image& img, double lo = 0.0, double hi = 1.0);
/// Reads P5 with maxval <= 255 into [0, 1].
Image read_pgm(const std::string& path);

/// Raw float64 image: the 8 bytes "F64IMAGE", little-endian uint32 width and
/// height, then width * height little-endian doubles in row-major order.
void write_raw(const std::string& path, const Image& img);
Image read_raw(const std::string& path);

}  // namespace rcs
