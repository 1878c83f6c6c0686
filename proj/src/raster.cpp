#include "lesion/raster.hpp"

#include "lesion/error.hpp"
#include "lesion/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lesion {

namespace {

void require_dims(int width, int height, const char* what) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument(std::string(what) + ": width and height must be >= 1");
    }
}

std::size_t area(int width, int height) {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

struct Tap {
    int index;
    double weight;
};

// Coverage weights of each source sample for each output sample along one axis.
std::vector<std::vector<Tap>> area_taps(int n_in, int n_out) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(n_out));
    const double scale = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(n_in - 1, static_cast<int>(std::ceil(hi)) - 1);
        for (int i = first; i <= last; ++i) {
            const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (overlap > 0.0) taps[o].push_back({i, overlap / scale});
        }
    }
    return taps;
}

}  // namespace

RgbImage::RgbImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
    require_dims(width, height, "RgbImage");
    pixels_.assign(area(width, height), fill);
}

RgbImage::RgbImage(int width, int height, std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
    require_dims(width, height, "RgbImage");
    if (pixels_.size() != area(width, height)) {
        throw std::invalid_argument("RgbImage: pixel count does not match dimensions");
    }
    for (const Rgb& p : pixels_) {
        for (double v : p) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw std::invalid_argument("RgbImage: channel value outside [0,1]");
            }
        }
    }
}

std::vector<double> RgbImage::channel(int c) const {
    std::vector<double> out(pixels_.size());
    for (std::size_t i = 0; i < pixels_.size(); ++i) out[i] = pixels_[i][static_cast<std::size_t>(c)];
    return out;
}

ScalarMap::ScalarMap(int width, int height, double fill) : width_(width), height_(height) {
    require_dims(width, height, "ScalarMap");
    values_.assign(area(width, height), fill);
}

ScalarMap::ScalarMap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    require_dims(width, height, "ScalarMap");
    if (values_.size() != area(width, height)) {
        throw std::invalid_argument("ScalarMap: value count does not match dimensions");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw std::invalid_argument("ScalarMap: non-finite value");
    }
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
    require_dims(width, height, "BinaryMask");
    bits_.assign(area(width, height), fill ? 1 : 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    require_dims(width, height, "BinaryMask");
    if (bits_.size() != area(width, height)) {
        throw std::invalid_argument("BinaryMask: bit count does not match dimensions");
    }
    for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
    BinaryMask out = *this;
    for (auto& b : out.bits_) b ^= 1;
    return out;
}

double diagonal(int width, int height) {
    return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

RgbImage resize_area_average(const RgbImage& img, int max_side) {
    if (max_side < 1) throw std::invalid_argument("resize_area_average: max_side must be >= 1");
    const int longest = std::max(img.width(), img.height());
    if (longest <= max_side) return img;

    const double scale = static_cast<double>(max_side) / longest;
    auto scaled = [&](int side) {
        if (side == longest) return max_side;
        return std::max(1, static_cast<int>(std::lround(side * scale)));
    };
    const int out_w = scaled(img.width());
    const int out_h = scaled(img.height());

    const auto xtaps = area_taps(img.width(), out_w);
    const auto ytaps = area_taps(img.height(), out_h);

    // Horizontal pass, then vertical.
    std::vector<Rgb> rows(static_cast<std::size_t>(out_w) * img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int ox = 0; ox < out_w; ++ox) {
            Rgb acc{0.0, 0.0, 0.0};
            for (const Tap& t : xtaps[ox]) {
                const Rgb& p = img.at(t.index, y);
                for (int c = 0; c < 3; ++c) acc[c] += t.weight * p[c];
            }
            rows[static_cast<std::size_t>(y) * out_w + ox] = acc;
        }
    }

    std::vector<Rgb> out(static_cast<std::size_t>(out_w) * out_h);
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            Rgb acc{0.0, 0.0, 0.0};
            for (const Tap& t : ytaps[oy]) {
                const Rgb& p = rows[static_cast<std::size_t>(t.index) * out_w + ox];
                for (int c = 0; c < 3; ++c) acc[c] += t.weight * p[c];
            }
            for (double& v : acc) v = std::clamp(v, 0.0, 1.0);
            out[static_cast<std::size_t>(oy) * out_w + ox] = acc;
        }
    }
    return RgbImage(out_w, out_h, std::move(out));
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1) {
        throw std::invalid_argument("resize_mask_nearest: target dims must be >= 1");
    }
    if (target_w == mask.width() && target_h == mask.height()) return mask;

    auto source = [](int o, int n_out, int n_in) {
        const int s = static_cast<int>(std::floor((o + 0.5) * n_in / n_out));
        return std::clamp(s, 0, n_in - 1);
    };
    BinaryMask out(target_w, target_h);
    for (int y = 0; y < target_h; ++y) {
        const int sy = source(y, target_h, mask.height());
        for (int x = 0; x < target_w; ++x) {
            out.set(x, y, mask.at(source(x, target_w, mask.width()), sy));
        }
    }
    return out;
}

std::vector<Rgb> sample_pixels(const RgbImage& img, const BinaryMask& mask, bool inside,
                               std::size_t n, std::uint64_t seed) {
    if (img.width() != mask.width() || img.height() != mask.height()) {
        throw std::invalid_argument("sample_pixels: mask and image dimensions differ");
    }
    if (n < 1) throw std::invalid_argument("sample_pixels: n must be >= 1");

    std::vector<std::size_t> region;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == inside) region.push_back(i);
    }
    if (region.empty()) throw DataError("sample_pixels: empty region");

    const std::size_t take = std::min(n, region.size());
    Rng rng(seed);
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(region.size() - i));
        std::swap(region[i], region[j]);
    }

    std::vector<Rgb> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(img[region[i]]);
    return out;
}

BinaryMask threshold_at_least(const ScalarMap& map, double t) {
    BinaryMask out(map.width(), map.height());
    for (std::size_t i = 0; i < map.size(); ++i) out.set(i, map[i] >= t);
    return out;
}

}  // namespace lesion
