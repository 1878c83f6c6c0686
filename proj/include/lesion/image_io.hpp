#pragma once

#include "lesion/raster.hpp"

#include <filesystem>

namespace lesion::io {

/// Decodes an 8-bit PNG or JPEG (detected by signature) into [0,1] RGB.
/// Throws DataError when the file is missing or undecodable.
RgbImage read_image(const std::filesystem::path& path);

/// Reads a mask image; a pixel is foreground when its gray value is >= 128.
BinaryMask read_mask(const std::filesystem::path& path);

/// 8-bit grayscale PNG with values {0, 255}.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

/// 8-bit grayscale PNG with value round(255 * v), v clamped to [0,1].
void write_gray_png(const std::filesystem::path& path, const ScalarMap& map);

/// 8-bit RGB PNG with channels round(255 * v).
void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);

/// Truth contour in pure red and predicted contour in pure green (drawn last)
/// over the image, one pixel wide.
RgbImage render_overlay(const RgbImage& img, const BinaryMask& truth, const BinaryMask& predicted);

}  // namespace lesion::io
