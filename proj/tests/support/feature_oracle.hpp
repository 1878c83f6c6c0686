#pragma once

#include "lesion/raster.hpp"

#include "morph_oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace lesion::testing {

// Feature vector recomputed from the definitions, one channel at a time.
struct FeatureOracle {
    const RgbImage& img;
    const BinaryMask& mask;
    int w;
    int h;
    BinaryMask band;

    FeatureOracle(const RgbImage& i, const BinaryMask& m) : img(i), mask(m), w(i.width()), h(i.height()) {
        const int rb = std::max(5, static_cast<int>(std::lround(0.02 * std::hypot(w, h))));
        const BinaryMask d = bf_dilate(mask, rb);
        band = BinaryMask(w, h);
        for (std::size_t k = 0; k < mask.size(); ++k) band.set(k, d[k] && !mask[k]);
    }

    static double pct(std::vector<double> v, double q) {
        std::sort(v.begin(), v.end());
        const double pos = q * (v.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        if (i + 1 >= v.size()) return v.back();
        return v[i] * (1 - (pos - i)) + v[i + 1] * (pos - i);
    }

    static std::vector<double> hist(const std::vector<double>& v, int bins) {
        std::vector<double> out(bins, 0.0);
        for (double x : v) out[std::min(bins - 1, static_cast<int>(x * bins))] += 1.0 / v.size();
        return out;
    }

    static std::vector<double> stats(const std::vector<double>& v) {
        if (v.empty()) return std::vector<double>(12, 0.0);
        const double n = v.size();
        double mean = 0;
        for (double x : v) mean += x / n;
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean) / n;
        const double sd = std::sqrt(var) < 1e-12 ? 0.0 : std::sqrt(var);
        double skew = 0;
        double kurt = 0;
        if (sd > 0) {
            for (double x : v) {
                skew += std::pow((x - mean) / sd, 3) / n;
                kurt += std::pow((x - mean) / sd, 4) / n;
            }
        }
        double ent = 0;
        for (double p : hist(v, 32)) {
            if (p > 0) ent -= p * std::log2(p);
        }
        return {mean, sd, skew, kurt, *std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end()),
                pct(v, 0.5), pct(v, 0.1), pct(v, 0.25), pct(v, 0.75), pct(v, 0.9), ent};
    }

    std::vector<double> values(int c, const BinaryMask& region) const {
        std::vector<double> v;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (region.at(x, y)) v.push_back(img.at(x, y)[c]);
            }
        }
        return v;
    }

    double sobel(int c, int x, int y) const {
        static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
        double gx = 0;
        double gy = 0;
        for (int j = -1; j <= 1; ++j) {
            for (int i = -1; i <= 1; ++i) {
                const double v = img.at(std::clamp(x + i, 0, w - 1), std::clamp(y + j, 0, h - 1))[c];
                gx += kx[j + 1][i + 1] * v;
                gy += kx[i + 1][j + 1] * v;
            }
        }
        return std::hypot(gx, gy) / 8;
    }

    std::vector<double> glcm(int c, int dx, int dy) const {
        Eigen::Matrix<double, 8, 8> p = Eigen::Matrix<double, 8, 8>::Zero();
        auto q = [](double v) { return std::min(7, static_cast<int>(v * 8)); };
        for (int y = 0; y + dy < h; ++y) {
            for (int x = 0; x + dx < w; ++x) {
                if (!mask.at(x, y) || !mask.at(x + dx, y + dy)) continue;
                const int a = q(img.at(x, y)[c]);
                const int b = q(img.at(x + dx, y + dy)[c]);
                p(a, b) += 1;
                p(b, a) += 1;
            }
        }
        if (p.sum() == 0) return std::vector<double>(6, 0.0);
        p /= p.sum();
        double contrast = 0, energy = 0, homog = 0, ent = 0, dis = 0, mu = 0;
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) {
                contrast += (i - j) * (i - j) * p(i, j);
                energy += p(i, j) * p(i, j);
                homog += p(i, j) / (1 + (i - j) * (i - j));
                if (p(i, j) > 0) ent -= p(i, j) * std::log2(p(i, j));
                dis += std::abs(i - j) * p(i, j);
                mu += i * p(i, j);
            }
        }
        double var = 0, cov = 0;
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) {
                var += (i - mu) * (i - mu) * p(i, j);
                cov += (i - mu) * (j - mu) * p(i, j);
            }
        }
        return {contrast, var > 1e-15 ? cov / var : 1.0, energy, homog, ent, dis};
    }

    std::vector<double> channel(int c) const {
        std::vector<double> f;
        const auto in = values(c, mask);
        const auto ring = values(c, band);
        const auto si = stats(in);
        const auto sb = stats(ring);
        f.insert(f.end(), si.begin(), si.end());
        f.insert(f.end(), sb.begin(), sb.end());
        if (!in.empty() && !ring.empty()) {
            const double a = si[0];
            const double b = sb[0];
            const auto hi = hist(in, 16);
            const auto hb = hist(ring, 16);
            double inter = 0;
            for (int k = 0; k < 16; ++k) inter += std::min(hi[k], hb[k]);
            f.insert(f.end(), {a - b, a / (b + 1e-6), (a - b) / (a + b + 1e-6), inter});
        } else {
            f.insert(f.end(), {0.0, 1.0, 0.0, 0.0});
        }
        const auto hi = in.empty() ? std::vector<double>(16, 0.0) : hist(in, 16);
        f.insert(f.end(), hi.begin(), hi.end());
        std::vector<double> g;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (mask.at(x, y)) g.push_back(sobel(c, x, y));
            }
        }
        if (g.empty()) {
            f.insert(f.end(), 6, 0.0);
        } else {
            const auto s = stats(g);
            double edges = 0;
            for (double v : g) edges += v > 0.1 ? 1.0 / g.size() : 0.0;
            f.insert(f.end(), {s[0], s[1], s[5], s[6], s[10], edges});
        }
        for (const auto& off : {std::pair{1, 0}, std::pair{0, 1}}) {
            const auto t = glcm(c, off.first, off.second);
            f.insert(f.end(), t.begin(), t.end());
        }
        return f;
    }

    std::vector<double> shape() const {
        double area = 0, sx = 0, sy = 0;
        int x0 = w, x1 = -1, y0 = h, y1 = -1;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!mask.at(x, y)) continue;
                area += 1;
                sx += x;
                sy += y;
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
        if (area == 0) {
            std::vector<double> f(14, 0.0);
            f[3] = f[4] = f[13] = 1.0;
            return f;
        }
        const double cx = sx / area;
        const double cy = sy / area;
        Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!mask.at(x, y)) continue;
                const Eigen::Vector2d d(x - cx, y - cy);
                cov += d * d.transpose() / area;
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
        const double l2 = std::max(0.0, es.eigenvalues()[0]);
        const double l1 = es.eigenvalues()[1];
        const Eigen::Vector2d major = es.eigenvectors().col(1);
        const double theta = std::atan2(major.y(), major.x());
        const double diag = std::hypot(w, h);
        const int rb = std::max(5, static_cast<int>(std::lround(0.02 * diag)));
        const double perim = bf_perimeter(mask);
        const double solid_den = bf_fill(bf_erode(bf_dilate(mask, rb), rb)).count();
        const double hull_perim = bf_perimeter(bf_fill(bf_erode(bf_dilate(mask, 3 * rb), 3 * rb)));
        return {area / (w * h),
                perim / diag,
                4 * std::numbers::pi * area / (perim * perim),
                area / solid_den,
                area / ((x1 - x0 + 1.0) * (y1 - y0 + 1.0)),
                std::sqrt(1 - l2 / l1),
                std::sqrt(4 * area / std::numbers::pi) / diag,
                4 * std::sqrt(l1) / diag,
                4 * std::sqrt(l2) / diag,
                std::sin(2 * theta),
                std::cos(2 * theta),
                (cx - (w - 1) / 2.0) / w,
                (cy - (h - 1) / 2.0) / h,
                perim / hull_perim};
    }

    std::vector<double> all() const {
        std::vector<double> f;
        for (int c = 0; c < 3; ++c) {
            const auto v = channel(c);
            f.insert(f.end(), v.begin(), v.end());
        }
        const auto s = shape();
        f.insert(f.end(), s.begin(), s.end());
        return f;
    }
};

}  // namespace lesion::testing
