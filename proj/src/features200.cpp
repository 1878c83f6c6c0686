#include "lesion/features200.hpp"

#include "lesion/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace lesion {

namespace {

constexpr double kRatioEps = 1e-6;

double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> histogram(const std::vector<double>& values, int bins) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    if (values.empty()) return h;
    for (double v : values) {
        const int b = std::min(bins - 1, static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * bins)));
        h[static_cast<std::size_t>(b)] += 1.0;
    }
    for (double& v : h) v /= static_cast<double>(values.size());
    return h;
}

double entropy_bits(const std::vector<double>& probabilities) {
    double e = 0.0;
    for (double p : probabilities) {
        if (p > 0.0) e -= p * std::log2(p);
    }
    return e;
}

// mean, std, skewness, kurtosis, min, max, median, p10, p25, p75, p90, entropy
std::array<double, 12> first_order(std::vector<double> v) {
    std::array<double, 12> out{};
    if (v.empty()) return out;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    for (double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    // Rounding leaves a tiny spread on constant regions; treat it as none.
    const double sd = std::sqrt(m2) < 1e-12 ? 0.0 : std::sqrt(m2);
    const std::vector<double> hist = histogram(v, 32);
    std::sort(v.begin(), v.end());
    out[0] = mean;
    out[1] = sd;
    out[2] = sd > 0.0 ? m3 / (sd * sd * sd) : 0.0;
    out[3] = sd > 0.0 ? m4 / (m2 * m2) : 0.0;
    out[4] = v.front();
    out[5] = v.back();
    out[6] = percentile_sorted(v, 0.5);
    out[7] = percentile_sorted(v, 0.10);
    out[8] = percentile_sorted(v, 0.25);
    out[9] = percentile_sorted(v, 0.75);
    out[10] = percentile_sorted(v, 0.90);
    out[11] = entropy_bits(hist);
    return out;
}

std::vector<double> gather(const std::vector<double>& plane, const BinaryMask& region) {
    std::vector<double> out;
    for (std::size_t i = 0; i < plane.size(); ++i) {
        if (region[i]) out.push_back(plane[i]);
    }
    return out;
}

// Sobel gradient magnitude divided by 8 (a unit step in intensity gives 0.5
// at the edge), replicate borders.
std::vector<double> sobel_magnitude(const std::vector<double>& plane, int w, int h) {
    auto px = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return plane[static_cast<std::size_t>(y) * w + x];
    };
    std::vector<double> mag(plane.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            mag[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy) / 8.0;
        }
    }
    return mag;
}

// contrast, correlation, energy, homogeneity, entropy, dissimilarity
std::array<double, 6> cooccurrence(const std::vector<double>& plane, const BinaryMask& mask,
                                   int dx, int dy) {
    constexpr int kLevels = 8;
    std::array<double, 6> out{};
    std::array<std::array<double, kLevels>, kLevels> glcm{};
    auto level = [](double v) {
        return std::min(kLevels - 1, static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * kLevels)));
    };
    const int w = mask.width();
    const int h = mask.height();
    double pairs = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int nx = x + dx;
            const int ny = y + dy;
            if (nx >= w || ny >= h || !mask.at(x, y) || !mask.at(nx, ny)) continue;
            const int a = level(plane[static_cast<std::size_t>(y) * w + x]);
            const int b = level(plane[static_cast<std::size_t>(ny) * w + nx]);
            glcm[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += 1.0;
            glcm[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] += 1.0;
            pairs += 2.0;
        }
    }
    if (pairs == 0.0) return out;

    double mu = 0.0;
    for (int i = 0; i < kLevels; ++i) {
        for (int j = 0; j < kLevels; ++j) {
            glcm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] /= pairs;
            mu += i * glcm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    double var = 0.0;
    double cov = 0.0;
    for (int i = 0; i < kLevels; ++i) {
        for (int j = 0; j < kLevels; ++j) {
            const double p = glcm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            const double d = i - j;
            out[0] += d * d * p;
            out[2] += p * p;
            out[3] += p / (1.0 + d * d);
            if (p > 0.0) out[4] -= p * std::log2(p);
            out[5] += std::abs(d) * p;
            var += (i - mu) * (i - mu) * p;
            cov += (i - mu) * (j - mu) * p;
        }
    }
    // A single gray level is perfectly correlated with itself.
    out[1] = var > 1e-15 ? cov / var : 1.0;
    return out;
}

struct Moments {
    double area = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double mu20 = 0.0;
    double mu02 = 0.0;
    double mu11 = 0.0;
    int min_x = 0;
    int max_x = 0;
    int min_y = 0;
    int max_y = 0;
};

Moments moments(const BinaryMask& mask) {
    Moments m;
    m.min_x = mask.width();
    m.min_y = mask.height();
    m.max_x = -1;
    m.max_y = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            m.area += 1.0;
            m.cx += x;
            m.cy += y;
            m.min_x = std::min(m.min_x, x);
            m.max_x = std::max(m.max_x, x);
            m.min_y = std::min(m.min_y, y);
            m.max_y = std::max(m.max_y, y);
        }
    }
    if (m.area == 0.0) return m;
    m.cx /= m.area;
    m.cy /= m.area;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            const double dx = x - m.cx;
            const double dy = y - m.cy;
            m.mu20 += dx * dx;
            m.mu02 += dy * dy;
            m.mu11 += dx * dy;
        }
    }
    m.mu20 /= m.area;
    m.mu02 /= m.area;
    m.mu11 /= m.area;
    return m;
}

std::array<double, kShapeFeatures> shape_features(const BinaryMask& mask) {
    std::array<double, kShapeFeatures> f{};
    const Moments m = moments(mask);
    if (m.area == 0.0) {
        f[3] = 1.0;  // solidity
        f[4] = 1.0;  // extent
        f[13] = 1.0;  // border irregularity
        return f;
    }
    const int w = mask.width();
    const int h = mask.height();
    const double diag = diagonal(w, h);
    const int rb = border_band_radius(w, h);
    const double area = m.area;
    const double perim = static_cast<double>(perimeter(mask));

    const double filled_closed =
        static_cast<double>(fill_holes(close(mask, StructuringElement::disk(rb))).count());
    const double hull_perim = static_cast<double>(
        perimeter(fill_holes(close(mask, StructuringElement::disk(3 * rb)))));
    const double bbox = static_cast<double>(m.max_x - m.min_x + 1) *
                        static_cast<double>(m.max_y - m.min_y + 1);

    const double half_trace = 0.5 * (m.mu20 + m.mu02);
    const double root = std::sqrt(0.25 * (m.mu20 - m.mu02) * (m.mu20 - m.mu02) + m.mu11 * m.mu11);
    const double l1 = half_trace + root;
    const double l2 = std::max(0.0, half_trace - root);
    const double two_theta = std::atan2(2.0 * m.mu11, m.mu20 - m.mu02);

    f[0] = area / static_cast<double>(mask.size());
    f[1] = perim / diag;
    f[2] = 4.0 * std::numbers::pi * area / (perim * perim);
    f[3] = area / filled_closed;
    f[4] = area / bbox;
    f[5] = l1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
    f[6] = std::sqrt(4.0 * area / std::numbers::pi) / diag;
    f[7] = 4.0 * std::sqrt(l1) / diag;
    f[8] = 4.0 * std::sqrt(l2) / diag;
    f[9] = std::sin(two_theta);
    f[10] = std::cos(two_theta);
    f[11] = (m.cx - 0.5 * (w - 1)) / w;
    f[12] = (m.cy - 0.5 * (h - 1)) / h;
    f[13] = hull_perim > 0.0 ? perim / hull_perim : 1.0;
    return f;
}

}  // namespace

int border_band_radius(int width, int height) {
    return std::max(5, static_cast<int>(std::lround(0.02 * diagonal(width, height))));
}

BinaryMask border_band(const BinaryMask& mask) {
    const auto se = StructuringElement::disk(border_band_radius(mask.width(), mask.height()));
    BinaryMask ring = dilate(mask, se);
    for (std::size_t i = 0; i < ring.size(); ++i) {
        if (mask[i]) ring.set(i, false);
    }
    return ring;
}

FeatureVector200 extract_features(const RgbImage& img, const BinaryMask& mask) {
    if (img.width() != mask.width() || img.height() != mask.height()) {
        throw std::invalid_argument("extract_features: image and mask dimensions differ");
    }
    FeatureVector200 out{};
    const BinaryMask band = border_band(mask);
    const bool has_inside = mask.any();
    const bool has_band = band.any();

    for (int c = 0; c < 3; ++c) {
        const std::vector<double> plane = img.channel(c);
        const std::vector<double> inside = gather(plane, mask);
        const std::vector<double> ring = gather(plane, band);
        std::size_t k = static_cast<std::size_t>(c) * kFeaturesPerChannel;

        const auto in_stats = first_order(inside);
        const auto band_stats = first_order(ring);
        for (double v : in_stats) out[k++] = v;
        for (double v : band_stats) out[k++] = v;

        const std::vector<double> in_hist = histogram(inside, 16);
        if (has_inside && has_band) {
            const double a = in_stats[0];
            const double b = band_stats[0];
            const std::vector<double> band_hist = histogram(ring, 16);
            double inter = 0.0;
            for (std::size_t i = 0; i < 16; ++i) inter += std::min(in_hist[i], band_hist[i]);
            out[k++] = a - b;
            out[k++] = a / (b + kRatioEps);
            out[k++] = (a - b) / (a + b + kRatioEps);
            out[k++] = inter;
        } else {
            out[k++] = 0.0;
            out[k++] = 1.0;
            out[k++] = 0.0;
            out[k++] = 0.0;
        }
        for (double v : in_hist) out[k++] = v;

        std::vector<double> grad = gather(sobel_magnitude(plane, img.width(), img.height()), mask);
        if (!grad.empty()) {
            const double n = static_cast<double>(grad.size());
            double mean = 0.0;
            double edges = 0.0;
            for (double g : grad) {
                mean += g;
                edges += g > 0.1 ? 1.0 : 0.0;
            }
            mean /= n;
            double var = 0.0;
            for (double g : grad) var += (g - mean) * (g - mean);
            std::sort(grad.begin(), grad.end());
            out[k++] = mean;
            out[k++] = std::sqrt(var / n);
            out[k++] = grad.back();
            out[k++] = percentile_sorted(grad, 0.5);
            out[k++] = percentile_sorted(grad, 0.9);
            out[k++] = edges / n;
        } else {
            k += 6;
        }

        for (double v : cooccurrence(plane, mask, 1, 0)) out[k++] = v;
        for (double v : cooccurrence(plane, mask, 0, 1)) out[k++] = v;
    }

    const auto shape = shape_features(mask);
    std::copy(shape.begin(), shape.end(), out.begin() + 3 * kFeaturesPerChannel);
    return out;
}

std::string feature_column_name(int index) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "f%03d", index);
    return buf;
}

}  // namespace lesion
