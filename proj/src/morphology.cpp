#include "lesion/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace lesion {

namespace {

// Per-row running counts of foreground pixels: row y, column i holds the
// number of ones in [0, i).
class RowPrefix {
public:
    explicit RowPrefix(const BinaryMask& m) : width_(m.width()) {
        const auto stride = static_cast<std::size_t>(width_) + 1;
        counts_.assign(stride * static_cast<std::size_t>(m.height()), 0);
        for (int y = 0; y < m.height(); ++y) {
            int* row = &counts_[static_cast<std::size_t>(y) * stride];
            for (int x = 0; x < width_; ++x) row[x + 1] = row[x] + (m.at(x, y) ? 1 : 0);
        }
    }

    // Ones within columns [lo, hi] of row y, clipped to the image.
    int ones(int y, int lo, int hi) const {
        lo = std::max(lo, 0);
        hi = std::min(hi, width_ - 1);
        if (lo > hi) return 0;
        const int* row = &counts_[static_cast<std::size_t>(y) * (static_cast<std::size_t>(width_) + 1)];
        return row[hi + 1] - row[lo];
    }

    static int span(int lo, int hi, int width) {
        lo = std::max(lo, 0);
        hi = std::min(hi, width - 1);
        return lo > hi ? 0 : hi - lo + 1;
    }

private:
    int width_;
    std::vector<int> counts_;
};

}  // namespace

StructuringElement StructuringElement::disk(int radius) {
    if (radius < 1) throw std::invalid_argument("StructuringElement::disk: radius must be >= 1");
    StructuringElement se;
    se.radius_ = radius;
    const int r2 = radius * radius;
    for (int dy = -radius; dy <= radius; ++dy) {
        int w = 0;
        while ((w + 1) * (w + 1) + dy * dy <= r2) ++w;
        se.half_widths_.push_back(w);
        for (int dx = -w; dx <= w; ++dx) se.offsets_.push_back({dx, dy});
    }
    return se;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    const RowPrefix prefix(mask);
    const int r = se.radius();
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            bool hit = false;
            for (int dy = -r; dy <= r && !hit; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= mask.height()) continue;
                const int w = se.half_width(dy);
                hit = prefix.ones(yy, x - w, x + w) > 0;
            }
            out.set(x, y, hit);
        }
    }
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
    const RowPrefix prefix(mask);
    const int r = se.radius();
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            bool keep = mask.at(x, y);
            for (int dy = -r; dy <= r && keep; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= mask.height()) continue;
                const int w = se.half_width(dy);
                keep = prefix.ones(yy, x - w, x + w) == RowPrefix::span(x - w, x + w, mask.width());
            }
            out.set(x, y, keep);
        }
    }
    return out;
}

BinaryMask open(const BinaryMask& mask, const StructuringElement& se) {
    return dilate(erode(mask, se), se);
}

BinaryMask close(const BinaryMask& mask, const StructuringElement& se) {
    return erode(dilate(mask, se), se);
}

BinaryMask fill_holes(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> reached(mask.size(), 0);
    std::deque<std::size_t> queue;
    auto seed = [&](int x, int y) {
        const auto i = static_cast<std::size_t>(y) * w + x;
        if (!mask[i] && !reached[i]) {
            reached[i] = 1;
            queue.push_back(i);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        const int x = static_cast<int>(i % w);
        const int y = static_cast<int>(i / w);
        if (x > 0) seed(x - 1, y);
        if (x + 1 < w) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < h) seed(x, y + 1);
    }
    BinaryMask out = mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i] && !reached[i]) out.set(i, true);
    }
    return out;
}

ComponentLabels label_components(const BinaryMask& mask, Connectivity conn) {
    const int w = mask.width();
    const int h = mask.height();
    ComponentLabels result;
    result.labels.assign(mask.size(), 0);
    std::deque<std::size_t> queue;
    int next = 0;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || result.labels[start] != 0) continue;
        ++next;
        std::size_t size = 0;
        result.labels[start] = next;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t i = queue.front();
            queue.pop_front();
            ++size;
            const int x = static_cast<int>(i % w);
            const int y = static_cast<int>(i / w);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (conn == Connectivity::four && dx != 0 && dy != 0) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const auto j = static_cast<std::size_t>(ny) * w + nx;
                    if (mask[j] && result.labels[j] == 0) {
                        result.labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        result.sizes.push_back(size);
    }
    return result;
}

BinaryMask largest_component(const BinaryMask& mask) {
    const ComponentLabels cc = label_components(mask, Connectivity::eight);
    BinaryMask out(mask.width(), mask.height());
    if (cc.sizes.empty()) return out;
    // Labels follow raster order of first pixel, so the first maximum wins ties.
    const auto best = static_cast<int>(std::max_element(cc.sizes.begin(), cc.sizes.end()) -
                                       cc.sizes.begin()) + 1;
    for (std::size_t i = 0; i < mask.size(); ++i) out.set(i, cc.labels[i] == best);
    return out;
}

int cleanup_radius(double img_diag) {
    return std::max(1, static_cast<int>(std::lround(0.01 * img_diag)));
}

BinaryMask cleanup(const BinaryMask& mask, double img_diag) {
    const auto se = StructuringElement::disk(cleanup_radius(img_diag));
    return largest_component(fill_holes(close(open(mask, se), se)));
}

BinaryMask inner_boundary(const BinaryMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            const bool edge = !mask.get_or(x - 1, y, false) || !mask.get_or(x + 1, y, false) ||
                              !mask.get_or(x, y - 1, false) || !mask.get_or(x, y + 1, false);
            out.set(x, y, edge);
        }
    }
    return out;
}

std::size_t perimeter(const BinaryMask& mask) { return inner_boundary(mask).count(); }

}  // namespace lesion
