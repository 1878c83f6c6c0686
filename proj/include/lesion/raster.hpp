#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lesion {

using Rgb = std::array<double, 3>;

/// Row-major RGB raster; channels are normalized to [0, 1].
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(int width, int height, Rgb fill = {0.0, 0.0, 0.0});
    RgbImage(int width, int height, std::vector<Rgb> pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return pixels_.size(); }
    bool empty() const { return pixels_.empty(); }

    const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }
    Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
    const Rgb& operator[](std::size_t i) const { return pixels_[i]; }
    Rgb& operator[](std::size_t i) { return pixels_[i]; }

    std::span<const Rgb> pixels() const { return pixels_; }

    /// Single channel as a row-major plane.
    std::vector<double> channel(int c) const;

    bool operator==(const RgbImage&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> pixels_;
};

/// Row-major real-valued raster (posterior maps, gradient magnitudes).
class ScalarMap {
public:
    ScalarMap() = default;
    ScalarMap(int width, int height, double fill = 0.0);
    ScalarMap(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return values_.size(); }

    double at(int x, int y) const { return values_[index(x, y)]; }
    double& at(int x, int y) { return values_[index(x, y)]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const { return values_; }

    bool operator==(const ScalarMap&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Row-major {0,1} raster.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);
    BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return bits_.size(); }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

    /// Out-of-range coordinates read as `outside`.
    bool get_or(int x, int y, bool outside) const {
        if (x < 0 || y < 0 || x >= width_ || y >= height_) return outside;
        return at(x, y);
    }

    std::span<const std::uint8_t> bits() const { return bits_; }
    std::size_t count() const;
    bool any() const { return count() > 0; }

    BinaryMask complement() const;

    bool same_shape(const BinaryMask& o) const {
        return width_ == o.width_ && height_ == o.height_;
    }

    bool operator==(const BinaryMask&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Image diagonal length in pixels.
double diagonal(int width, int height);

/// Area-average downsample so the longest side equals `max_side`.
/// Returns the input unchanged when it already fits.
RgbImage resize_area_average(const RgbImage& img, int max_side);

BinaryMask resize_mask_nearest(const BinaryMask& mask, int target_w, int target_h);

/// Uniform sample without replacement of min(n, |region|) pixels from the
/// region selected by `mask == inside`. Throws DataError("empty region").
std::vector<Rgb> sample_pixels(const RgbImage& img, const BinaryMask& mask, bool inside,
                               std::size_t n, std::uint64_t seed);

/// Pixels with value >= t.
BinaryMask threshold_at_least(const ScalarMap& map, double t);

}  // namespace lesion
