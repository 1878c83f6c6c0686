#pragma once

#include "lesion/raster.hpp"

#include <cstddef>
#include <vector>

namespace lesion {

struct Offset {
    int dx;
    int dy;
    bool operator==(const Offset&) const = default;
};

/// Disk structuring element: all integer offsets with dx^2 + dy^2 <= r^2.
class StructuringElement {
public:
    static StructuringElement disk(int radius);

    int radius() const { return radius_; }
    const std::vector<Offset>& offsets() const { return offsets_; }
    /// Half-width of the disk's horizontal run at row dy (|dy| <= radius).
    int half_width(int dy) const { return half_widths_[static_cast<std::size_t>(dy + radius_)]; }

private:
    int radius_ = 0;
    std::vector<Offset> offsets_;
    std::vector<int> half_widths_;
};

// Border convention: dilation reads out-of-image pixels as background and
// erosion reads them as foreground. The pair is then adjoint on the image
// domain, so open/close are idempotent, open is anti-extensive, close is
// extensive and erode(m) == ~dilate(~m) holds exactly.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);
BinaryMask open(const BinaryMask& mask, const StructuringElement& se);
BinaryMask close(const BinaryMask& mask, const StructuringElement& se);

/// Sets background regions (4-connected) that do not reach the border.
BinaryMask fill_holes(const BinaryMask& mask);

enum class Connectivity { four, eight };

struct ComponentLabels {
    /// 0 = background, components numbered from 1 in raster order of their
    /// first pixel.
    std::vector<int> labels;
    /// sizes[i] is the pixel count of component i+1.
    std::vector<std::size_t> sizes;
};

ComponentLabels label_components(const BinaryMask& mask, Connectivity conn);

/// Keeps the largest 8-connected component; ties go to the component whose
/// first pixel comes earliest in raster order.
BinaryMask largest_component(const BinaryMask& mask);

/// Disk radius used by cleanup: max(1, round(0.01 * diagonal)).
int cleanup_radius(double img_diag);

/// open -> close -> fill_holes -> largest_component.
BinaryMask cleanup(const BinaryMask& mask, double img_diag);

/// Foreground pixels with a 4-neighbor in the background or outside the image.
BinaryMask inner_boundary(const BinaryMask& mask);

/// Number of inner-boundary pixels.
std::size_t perimeter(const BinaryMask& mask);

}  // namespace lesion
