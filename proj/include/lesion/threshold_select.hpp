#pragma once

#include "lesion/raster.hpp"
#include "lesion/svm.hpp"

#include <array>
#include <functional>
#include <optional>
#include <vector>

namespace lesion {

inline constexpr int kCandidateFeatureCount = 12;
using CandidateFeatures = std::array<double, kCandidateFeatureCount>;

/// Strictly ascending thresholds inside (0, 1).
class ThresholdGrid {
public:
    explicit ThresholdGrid(std::vector<double> values);

    /// 0.05, 0.075, ..., 0.95 (37 values).
    static ThresholdGrid standard();

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    bool operator==(const ThresholdGrid&) const = default;

private:
    std::vector<double> values_;
};

struct ThresholdCandidate {
    double threshold = 0.0;
    BinaryMask raw_mask;
    BinaryMask cleaned_mask;
    CandidateFeatures features{};
    std::optional<double> true_jaccard;
    std::optional<double> predicted_jaccard;
};

/// Features describing one thresholded candidate, in order:
///  0 threshold
///  1 area fraction of the cleaned mask
///  2 mean posterior inside cleaned (0 if empty)
///  3 mean posterior outside cleaned (0 if empty)
///  4 inside minus outside
///  5 posterior std inside cleaned (0 if empty)
///  6 8-connected components of the raw mask, capped at 32, divided by 32
///  7 perimeter / sqrt(area) of cleaned (0 if empty)
///  8 area(cleaned) / area(fill_holes(close(raw))) (1 if the denominator is 0)
///  9 compactness 4 pi A / P^2 of cleaned (0 if empty)
/// 10 fraction of cleaned pixels on the image border (0 if empty)
/// 11 mean posterior in the ring dilate(cleaned) \ cleaned (0 if the ring is empty)
/// The disk radius for steps 8 and 11 is the cleanup radius of the map.
CandidateFeatures candidate_features(const ScalarMap& pmap, double t, const BinaryMask& cleaned,
                                     const BinaryMask& raw);

/// One candidate per grid value: raw = pmap >= t, cleaned = cleanup(raw).
std::vector<ThresholdCandidate> sweep(const ScalarMap& pmap, const ThresholdGrid& grid);

struct SvrConfig {
    double c = 10.0;
    double epsilon = 0.02;
    /// <= 0 selects scale_gamma on the standardized candidate features.
    double gamma = 0.0;
    SmoConfig smo;
};

/// SVR over standardized candidate features, predicting cleaned-mask Jaccard.
struct ThresholdModel {
    Scaler scaler;
    SvrModel svr;
    ThresholdGrid grid = ThresholdGrid::standard();

    /// Prediction clamped to [0, 1].
    double predict(const CandidateFeatures& f) const;

    bool operator==(const ThresholdModel&) const = default;
};

struct ThresholdTrainingImage {
    ScalarMap posterior;
    BinaryMask truth;
};

/// Regression rows (candidate features, cleaned-mask Jaccard) for one image.
struct ThresholdTrainingRows {
    Samples x;
    std::vector<double> y;
};

ThresholdTrainingRows threshold_training_rows(const ScalarMap& posterior, const BinaryMask& truth,
                                              const ThresholdGrid& grid);

/// Fits the scaler and SVR on the concatenated rows.
ThresholdModel fit_threshold_model(const std::vector<ThresholdTrainingRows>& rows,
                                   const ThresholdGrid& grid, const SvrConfig& cfg);

ThresholdModel train_threshold_svr(const std::vector<ThresholdTrainingImage>& training,
                                   const ThresholdGrid& grid, const SvrConfig& cfg);

struct ThresholdSelection {
    double threshold = 0.0;
    BinaryMask mask;
    double predicted_jaccard = 0.0;
};

using JaccardPredictor = std::function<double(const CandidateFeatures&)>;

/// Argmax of the predictor over the candidates; ties go to the smallest
/// threshold. `candidates` may be in any order.
ThresholdSelection select_best(const std::vector<ThresholdCandidate>& candidates,
                               const JaccardPredictor& predictor);

/// Sweeps the model's grid over pmap and returns the best cleaned mask at
/// the map's resolution.
ThresholdSelection select_threshold(const ThresholdModel& model, const ScalarMap& pmap);

}  // namespace lesion
