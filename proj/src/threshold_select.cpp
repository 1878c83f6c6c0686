#include "lesion/threshold_select.hpp"

#include "lesion/evaluation.hpp"
#include "lesion/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lesion {

namespace {

bool same_dims(const ScalarMap& m, const BinaryMask& b) {
    return m.width() == b.width() && m.height() == b.height();
}

}  // namespace

ThresholdGrid::ThresholdGrid(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("ThresholdGrid: empty grid");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!(values_[i] > 0.0 && values_[i] < 1.0)) {
            throw std::invalid_argument("ThresholdGrid: values must lie in (0,1)");
        }
        if (i > 0 && !(values_[i] > values_[i - 1])) {
            throw std::invalid_argument("ThresholdGrid: values must be strictly ascending");
        }
    }
}

ThresholdGrid ThresholdGrid::standard() {
    std::vector<double> v;
    for (int i = 2; i <= 38; ++i) v.push_back(i / 40.0);
    return ThresholdGrid(std::move(v));
}

CandidateFeatures candidate_features(const ScalarMap& pmap, double t, const BinaryMask& cleaned,
                                     const BinaryMask& raw) {
    if (!same_dims(pmap, cleaned) || !same_dims(pmap, raw)) {
        throw std::invalid_argument("candidate_features: map and mask dimensions differ");
    }
    const int w = pmap.width();
    const int h = pmap.height();
    const double n = static_cast<double>(pmap.size());
    const int radius = cleanup_radius(diagonal(w, h));
    const auto se = StructuringElement::disk(radius);

    double in_sum = 0.0;
    double in_sum2 = 0.0;
    double out_sum = 0.0;
    std::size_t in_n = 0;
    std::size_t border_n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double p = pmap.at(x, y);
            if (cleaned.at(x, y)) {
                in_sum += p;
                ++in_n;
                if (x == 0 || y == 0 || x == w - 1 || y == h - 1) ++border_n;
            } else {
                out_sum += p;
            }
        }
    }
    const std::size_t out_n = pmap.size() - in_n;
    const double in_mean = in_n ? in_sum / static_cast<double>(in_n) : 0.0;
    const double out_mean = out_n ? out_sum / static_cast<double>(out_n) : 0.0;
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (cleaned[i]) in_sum2 += (pmap[i] - in_mean) * (pmap[i] - in_mean);
    }
    const double in_std = in_n ? std::sqrt(in_sum2 / static_cast<double>(in_n)) : 0.0;

    const std::size_t raw_components =
        label_components(raw, Connectivity::eight).sizes.size();

    const double area = static_cast<double>(in_n);
    const double perim = static_cast<double>(perimeter(cleaned));

    const std::size_t hull_area = fill_holes(close(raw, se)).count();

    const BinaryMask ring_outer = dilate(cleaned, se);
    double ring_sum = 0.0;
    std::size_t ring_n = 0;
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (ring_outer[i] && !cleaned[i]) {
            ring_sum += pmap[i];
            ++ring_n;
        }
    }

    CandidateFeatures f{};
    f[0] = t;
    f[1] = area / n;
    f[2] = in_mean;
    f[3] = out_mean;
    f[4] = in_mean - out_mean;
    f[5] = in_std;
    f[6] = static_cast<double>(std::min<std::size_t>(raw_components, 32)) / 32.0;
    f[7] = in_n ? perim / std::sqrt(area) : 0.0;
    f[8] = hull_area ? area / static_cast<double>(hull_area) : 1.0;
    f[9] = in_n ? 4.0 * std::numbers::pi * area / (perim * perim) : 0.0;
    f[10] = in_n ? static_cast<double>(border_n) / area : 0.0;
    f[11] = ring_n ? ring_sum / static_cast<double>(ring_n) : 0.0;
    return f;
}

std::vector<ThresholdCandidate> sweep(const ScalarMap& pmap, const ThresholdGrid& grid) {
    const double diag = diagonal(pmap.width(), pmap.height());
    std::vector<ThresholdCandidate> out;
    out.reserve(grid.size());
    for (double t : grid.values()) {
        ThresholdCandidate c;
        c.threshold = t;
        c.raw_mask = threshold_at_least(pmap, t);
        c.cleaned_mask = cleanup(c.raw_mask, diag);
        c.features = candidate_features(pmap, t, c.cleaned_mask, c.raw_mask);
        out.push_back(std::move(c));
    }
    return out;
}

double ThresholdModel::predict(const CandidateFeatures& f) const {
    const Sample x = scaler.apply(f);
    return std::clamp(svr_predict(svr, x), 0.0, 1.0);
}

ThresholdTrainingRows threshold_training_rows(const ScalarMap& posterior, const BinaryMask& truth,
                                              const ThresholdGrid& grid) {
    if (!same_dims(posterior, truth)) {
        throw std::invalid_argument("train_threshold_svr: truth mask does not match posterior map");
    }
    ThresholdTrainingRows rows;
    for (const ThresholdCandidate& c : sweep(posterior, grid)) {
        rows.x.emplace_back(c.features.begin(), c.features.end());
        rows.y.push_back(jaccard(c.cleaned_mask, truth));
    }
    return rows;
}

ThresholdModel fit_threshold_model(const std::vector<ThresholdTrainingRows>& rows,
                                   const ThresholdGrid& grid, const SvrConfig& cfg) {
    Samples x;
    std::vector<double> y;
    for (const auto& r : rows) {
        x.insert(x.end(), r.x.begin(), r.x.end());
        y.insert(y.end(), r.y.begin(), r.y.end());
    }
    if (x.empty()) throw std::invalid_argument("train_threshold_svr: no training images");

    ThresholdModel model;
    model.grid = grid;
    model.scaler = fit_scaler(x);
    const Samples xs = model.scaler.apply(x);
    const Kernel kernel = Kernel::rbf(cfg.gamma > 0.0 ? cfg.gamma : scale_gamma(xs));
    model.svr = svr_fit(xs, y, kernel, cfg.c, cfg.epsilon, cfg.smo);
    return model;
}

ThresholdModel train_threshold_svr(const std::vector<ThresholdTrainingImage>& training,
                                   const ThresholdGrid& grid, const SvrConfig& cfg) {
    if (training.empty()) throw std::invalid_argument("train_threshold_svr: no training images");
    std::vector<ThresholdTrainingRows> rows;
    rows.reserve(training.size());
    for (const auto& item : training) {
        rows.push_back(threshold_training_rows(item.posterior, item.truth, grid));
    }
    return fit_threshold_model(rows, grid, cfg);
}

ThresholdSelection select_best(const std::vector<ThresholdCandidate>& candidates,
                               const JaccardPredictor& predictor) {
    if (candidates.empty()) throw std::invalid_argument("select_best: no candidates");
    const ThresholdCandidate* best = nullptr;
    double best_score = 0.0;
    for (const ThresholdCandidate& c : candidates) {
        const double s = predictor(c.features);
        if (best == nullptr || s > best_score ||
            (s == best_score && c.threshold < best->threshold)) {
            best = &c;
            best_score = s;
        }
    }
    return {best->threshold, best->cleaned_mask, best_score};
}

ThresholdSelection select_threshold(const ThresholdModel& model, const ScalarMap& pmap) {
    const auto candidates = sweep(pmap, model.grid);
    return select_best(candidates, [&](const CandidateFeatures& f) { return model.predict(f); });
}

}  // namespace lesion
