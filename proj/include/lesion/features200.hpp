#pragma once

#include "lesion/raster.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace lesion {

inline constexpr int kFeaturesPerChannel = 62;
inline constexpr int kShapeFeatures = 14;
inline constexpr int kFeatureCount = 3 * kFeaturesPerChannel + kShapeFeatures;
static_assert(kFeatureCount == 200);

using FeatureVector200 = std::array<double, kFeatureCount>;

// Layout. Channel c in {R, G, B} owns entries [62c, 62c + 62):
//
//   +0  .. +11  first-order statistics of the lesion pixels
//   +12 .. +23  the same statistics over the border band
//   +24 .. +27  lesion/band contrast: mean difference, mean ratio,
//               normalized difference, 16-bin histogram intersection
//   +28 .. +43  16-bin normalized histogram of the lesion pixels
//   +44 .. +49  Sobel magnitude on the lesion: mean, std, max, median, p90,
//               fraction above 0.1
//   +50 .. +61  8-level co-occurrence at offsets (1,0) then (0,1):
//               contrast, correlation, energy, homogeneity, entropy,
//               dissimilarity
//
// First-order statistics are ordered mean, std, skewness, kurtosis, min, max,
// median, p10, p25, p75, p90, entropy (32-bin, bits).
//
// Entries [186, 200) describe the mask shape: area fraction,
// perimeter/diagonal, compactness, solidity, extent, eccentricity,
// equivalent diameter/diagonal, major axis/diagonal, minor axis/diagonal,
// sin 2theta, cos 2theta, centroid x offset, centroid y offset,
// border irregularity.
//
// Empty regions give 0 for statistics, histograms, entropies and texture. The
// ratio features (contrast mean ratio, solidity, extent, border
// irregularity) are 1 when undefined.

/// Ring between the mask and its dilation by max(5, round(0.02 * diagonal)).
int border_band_radius(int width, int height);
BinaryMask border_band(const BinaryMask& mask);

FeatureVector200 extract_features(const RgbImage& img, const BinaryMask& mask);

/// "f000" .. "f199".
std::string feature_column_name(int index);

}  // namespace lesion
