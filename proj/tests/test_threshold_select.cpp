#include "lesion/evaluation.hpp"
#include "lesion/morphology.hpp"
#include "lesion/rng.hpp"
#include "lesion/threshold_select.hpp"

#include "morph_oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace lesion;
using namespace lesion::testing;

namespace {

ScalarMap disk_posterior(int w, int h, double cx, double cy, double r, double edge) {
    ScalarMap p(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = std::hypot(x - cx, y - cy);
            p.at(x, y) = 1.0 / (1.0 + std::exp((d - r) / edge));
        }
    }
    return p;
}

}  // namespace

TEST_CASE("grid") {
    const ThresholdGrid g = ThresholdGrid::standard();
    REQUIRE(g.size() == 37);
    CHECK(g.values().front() == doctest::Approx(0.05));
    CHECK(g.values().back() == doctest::Approx(0.95));
    for (std::size_t i = 1; i < g.size(); ++i) {
        CHECK(g.values()[i] - g.values()[i - 1] == doctest::Approx(0.025));
    }
    CHECK_THROWS_AS(ThresholdGrid({}), std::invalid_argument);
    CHECK_THROWS_AS(ThresholdGrid({0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(ThresholdGrid({0.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(ThresholdGrid({0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("candidate features match a direct recomputation") {
    const int w = 32;
    const int h = 32;
    const ScalarMap p = disk_posterior(w, h, 14.3, 16.8, 8.5, 1.5);
    const double t = 0.45;
    BinaryMask raw = threshold_at_least(p, t);
    // Speckles, a hole and a border-touching blob make every term nontrivial.
    raw.set(1, 1, true);
    raw.set(28, 3, true);
    raw.set(29, 3, true);
    raw.set(14, 16, false);
    for (int y = 26; y < 32; ++y) raw.set(31, y, true);
    const BinaryMask cleaned = cleanup(raw, diagonal(w, h));
    REQUIRE(cleaned.any());

    const CandidateFeatures f = candidate_features(p, t, cleaned, raw);

    const int r = std::max(1, static_cast<int>(std::lround(0.01 * std::hypot(w, h))));
    double in_sum = 0;
    double out_sum = 0;
    double in_n = 0;
    double border = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (cleaned.at(x, y)) {
                in_sum += p.at(x, y);
                in_n += 1;
                if (x == 0 || y == 0 || x == w - 1 || y == h - 1) border += 1;
            } else {
                out_sum += p.at(x, y);
            }
        }
    }
    const double in_mean = in_sum / in_n;
    const double out_mean = out_sum / (w * h - in_n);
    double var = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (cleaned.at(x, y)) var += std::pow(p.at(x, y) - in_mean, 2);
        }
    }
    const double in_std = std::sqrt(var / in_n);
    const double perim = static_cast<double>(bf_perimeter(cleaned));
    const double hull = static_cast<double>(bf_fill(bf_erode(bf_dilate(raw, r), r)).count());
    const BinaryMask outer = bf_dilate(cleaned, r);
    double ring_sum = 0;
    double ring_n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (outer.at(x, y) && !cleaned.at(x, y)) {
                ring_sum += p.at(x, y);
                ring_n += 1;
            }
        }
    }
    const double comps = static_cast<double>(bf_components8(raw));
    CHECK(comps == 4);

    const double expected[kCandidateFeatureCount] = {
        t,
        in_n / (w * h),
        in_mean,
        out_mean,
        in_mean - out_mean,
        in_std,
        comps / 32.0,
        perim / std::sqrt(in_n),
        in_n / hull,
        4 * std::numbers::pi * in_n / (perim * perim),
        border / in_n,
        ring_sum / ring_n,
    };
    for (int i = 0; i < kCandidateFeatureCount; ++i) {
        INFO("feature " << i);
        CHECK(f[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
}

TEST_CASE("degenerate maps") {
    SUBCASE("full") {
        const ScalarMap p(20, 20, 1.0);
        const auto c = sweep(p, ThresholdGrid({0.5}));
        REQUIRE(c.size() == 1);
        const auto& f = c[0].features;
        CHECK(f[1] == 1.0);
        CHECK(f[2] == 1.0);
        CHECK(f[3] == 0.0);
        CHECK(f[4] == 1.0);
        CHECK(f[11] == 0.0);
    }
    SUBCASE("empty") {
        const ScalarMap p(20, 20, 0.1);
        const auto c = sweep(p, ThresholdGrid({0.5}));
        const auto& f = c[0].features;
        CHECK_FALSE(c[0].raw_mask.any());
        CHECK_FALSE(c[0].cleaned_mask.any());
        const CandidateFeatures expected{0.5, 0, 0, 0.1, -0.1, 0, 0, 0, 1, 0, 0, 0};
        for (int i = 0; i < kCandidateFeatureCount; ++i) {
            CHECK(std::isfinite(f[i]));
            CHECK(f[i] == doctest::Approx(expected[i]));
        }
    }
}

TEST_CASE("sweep") {
    Rng rng(8);
    std::vector<double> v(40 * 30);
    for (double& x : v) x = rng.uniform();
    const ScalarMap noisy(40, 30, v);
    const ThresholdGrid g = ThresholdGrid::standard();
    const auto cands = sweep(noisy, g);
    REQUIRE(cands.size() == 37);
    const double diag = diagonal(40, 30);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(cands[i].threshold == g.values()[i]);
        CHECK(cands[i].raw_mask == threshold_at_least(noisy, g.values()[i]));
        CHECK(cands[i].cleaned_mask == cleanup(cands[i].raw_mask, diag));
        for (double f : cands[i].features) CHECK(std::isfinite(f));
        if (i > 0) {
            const auto& hi = cands[i].raw_mask;
            const auto& lo = cands[i - 1].raw_mask;
            for (std::size_t k = 0; k < hi.size(); ++k) {
                if (hi[k]) CHECK(lo[k]);
            }
        }
    }
}

TEST_CASE("features are consistent across resolution") {
    auto features_at = [](int s) {
        const ScalarMap p = disk_posterior(s, s, 0.3 * s, 0.5 * s, 0.35 * s, 0.02 * s);
        const BinaryMask raw = threshold_at_least(p, 0.5);
        const BinaryMask cleaned = cleanup(raw, diagonal(s, s));
        return candidate_features(p, 0.5, cleaned, raw);
    };
    const CandidateFeatures a = features_at(64);
    const CandidateFeatures b = features_at(128);
    CHECK(std::abs(a[1] - b[1]) < 0.05);
    CHECK(std::abs(a[9] - b[9]) < 0.05);
    CHECK(std::abs(a[10] - b[10]) < 0.05);
}

TEST_CASE("selection rule") {
    const ScalarMap p = disk_posterior(32, 32, 16, 16, 9, 2);
    const auto cands = sweep(p, ThresholdGrid::standard());

    const ThresholdSelection flat = select_best(cands, [](const CandidateFeatures&) { return 0.3; });
    CHECK(flat.threshold == doctest::Approx(0.05));
    CHECK(flat.mask == cands.front().cleaned_mask);

    const ThresholdSelection peak = select_best(cands, [](const CandidateFeatures& f) {
        return -(f[0] - 0.35) * (f[0] - 0.35);
    });
    CHECK(peak.threshold == doctest::Approx(0.35));

    // Quantized predictor with many ties; any order must give the same pick.
    const JaccardPredictor coarse = [](const CandidateFeatures& f) {
        return std::round(4.0 * f[1]) / 4.0;
    };
    const ThresholdSelection ref = select_best(cands, coarse);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto shuffled = cands;
        for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
        const ThresholdSelection s = select_best(shuffled, coarse);
        CHECK(s.threshold == ref.threshold);
        CHECK(s.mask == ref.mask);
    }
    CHECK_THROWS_AS(select_best({}, coarse), std::invalid_argument);
}

namespace {

std::vector<ScalarMap> posterior_family(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ScalarMap> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(disk_posterior(40, 32, rng.uniform(14, 26), rng.uniform(12, 20),
                                     rng.uniform(6, 11), rng.uniform(1.0, 3.0)));
    }
    return out;
}

}  // namespace

TEST_CASE("constant training target") {
    const ThresholdGrid g = ThresholdGrid::standard();
    std::vector<ThresholdTrainingRows> rows;
    for (const ScalarMap& p : posterior_family(4, 1)) {
        ThresholdTrainingRows r;
        for (const auto& c : sweep(p, g)) {
            r.x.emplace_back(c.features.begin(), c.features.end());
            r.y.push_back(0.63);
        }
        rows.push_back(std::move(r));
    }
    const SvrConfig cfg;
    const ThresholdModel m = fit_threshold_model(rows, g, cfg);
    for (const ScalarMap& p : posterior_family(3, 2)) {
        for (const auto& c : sweep(p, g)) CHECK(std::abs(m.predict(c.features) - 0.63) <= cfg.epsilon);
    }
}

TEST_CASE("learned selector recovers a known best threshold") {
    const ThresholdGrid g = ThresholdGrid::standard();
    std::vector<ThresholdTrainingRows> rows;
    for (const ScalarMap& p : posterior_family(10, 11)) {
        ThresholdTrainingRows r;
        for (const auto& c : sweep(p, g)) {
            r.x.emplace_back(c.features.begin(), c.features.end());
            r.y.push_back(1.0 - std::abs(c.threshold - 0.4));
        }
        rows.push_back(std::move(r));
    }
    SvrConfig cfg;
    cfg.epsilon = 0.002;
    const ThresholdModel m = fit_threshold_model(rows, g, cfg);
    for (const ScalarMap& p : posterior_family(10, 12)) {
        const ThresholdSelection s = select_threshold(m, p);
        CHECK(s.threshold == doctest::Approx(0.4));
        CHECK(s.predicted_jaccard >= 0.0);
        CHECK(s.predicted_jaccard <= 1.0);
    }
}

TEST_CASE("training on truth masks") {
    const auto maps = posterior_family(3, 5);
    std::vector<ThresholdTrainingImage> training;
    for (const ScalarMap& p : maps) training.push_back({p, threshold_at_least(p, 0.5)});
    const ThresholdGrid g = ThresholdGrid::standard();
    const ThresholdTrainingRows rows = threshold_training_rows(maps[0], training[0].truth, g);
    REQUIRE(rows.y.size() == 37);
    const auto cands = sweep(maps[0], g);
    for (std::size_t i = 0; i < 37; ++i) {
        CHECK(rows.y[i] == jaccard(cands[i].cleaned_mask, training[0].truth));
    }
    const ThresholdModel m = train_threshold_svr(training, g, SvrConfig{});
    for (const auto& c : cands) {
        const double v = m.predict(c.features);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK_THROWS_AS(train_threshold_svr({}, g, SvrConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(threshold_training_rows(maps[0], BinaryMask(3, 3), g), std::invalid_argument);
}
