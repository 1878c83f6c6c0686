#include "lesion/error.hpp"
#include "lesion/evaluation.hpp"
#include "lesion/rng.hpp"

#include "reference_tables.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

using namespace lesion;
using namespace lesion::testing;

namespace {

BinaryMask block(int w, int h, int x0, int y0, int bw, int bh) {
    BinaryMask m(w, h);
    for (int y = y0; y < y0 + bh; ++y) {
        for (int x = x0; x < x0 + bw; ++x) m.set(x, y, true);
    }
    return m;
}

std::vector<std::pair<std::string, double>> named(const std::vector<double>& v) {
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back("img" + std::to_string(i), v[i]);
    return out;
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

TEST_CASE("jaccard") {
    const BinaryMask a = block(3, 3, 0, 0, 2, 2);
    const BinaryMask b = block(3, 3, 1, 1, 2, 2);
    CHECK(jaccard(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(block(4, 4, 0, 0, 2, 2), block(4, 4, 2, 2, 2, 2)) == 0.0);
    CHECK(jaccard(BinaryMask(4, 4), BinaryMask(4, 4)) == 1.0);
    CHECK_THROWS_AS(jaccard(a, BinaryMask(4, 3)), DataError);

    // Enumerated oracle and symmetry on random small masks.
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        BinaryMask x(5, 4);
        BinaryMask y(5, 4);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x.set(i, rng.uniform() < 0.4);
            y.set(i, rng.uniform() < 0.4);
        }
        int inter = 0;
        int uni = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            inter += x[i] && y[i];
            uni += x[i] || y[i];
        }
        const double want = uni ? static_cast<double>(inter) / uni : 1.0;
        CHECK(jaccard(x, y) == want);
        CHECK(jaccard(y, x) == want);
    }
}

TEST_CASE("overlap report") {
    const OverlapReport r = overlap_report(named({0.9, 0.7, 0.5}));
    CHECK(r.mean_raw == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(r.mean_thresholded == doctest::Approx(1.6 / 3).epsilon(1e-15));
    CHECK(r.frac_below == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(r.threshold == 0.65);

    const OverlapReport all_pass = overlap_report(named({0.65, 0.8, 1.0}));
    CHECK(all_pass.mean_thresholded == all_pass.mean_raw);
    CHECK(all_pass.frac_below == 0.0);

    // The boundary value is kept; anything below is zeroed.
    const OverlapReport edge = overlap_report(named({0.65, 0.6499999}));
    CHECK(edge.mean_thresholded == doctest::Approx(0.325));

    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(1 + rng.index(30));
        for (double& v : s) v = rng.uniform();
        const OverlapReport zero = overlap_report(named(s), 0.0);
        CHECK(zero.mean_thresholded == zero.mean_raw);
        const OverlapReport std_rule = overlap_report(named(s));
        CHECK(std_rule.mean_thresholded <= std_rule.mean_raw);
        const double below = static_cast<double>(std::count_if(s.begin(), s.end(), [](double v) { return v < 0.65; }));
        CHECK(std_rule.frac_below == doctest::Approx(below / s.size()));
    }
    CHECK_THROWS_AS(overlap_report(named({})), DataError);

    const std::vector<MaskPair> pairs{{"a", block(3, 3, 0, 0, 2, 2), block(3, 3, 1, 1, 2, 2)},
                                      {"b", block(3, 3, 0, 0, 3, 3), block(3, 3, 0, 0, 3, 3)}};
    const OverlapReport pr = overlap_report(pairs);
    CHECK(pr.per_image[0].first == "a");
    CHECK(pr.mean_raw == doctest::Approx((1.0 / 7 + 1.0) / 2));
    CHECK(pr.mean_thresholded == doctest::Approx(0.5));
}

TEST_CASE("score histogram") {
    const auto ones = score_histogram(overlap_report(named({1.0, 1.0, 1.0})));
    REQUIRE(ones.size() == 20);
    CHECK(ones.back().count == 3);
    CHECK(ones.back().high == 1.0);
    CHECK(ones.front().low == 0.0);

    const auto two = score_histogram(overlap_report(named({0.1, 0.9})), 2);
    CHECK(two[0].count == 1);
    CHECK(two[1].count == 1);

    Rng rng(3);
    std::vector<double> s(137);
    for (double& v : s) v = rng.uniform();
    std::size_t total = 0;
    for (const auto& b : score_histogram(overlap_report(named(s)))) total += b.count;
    CHECK(total == 137);
    CHECK_THROWS_AS(score_histogram(overlap_report(named({0.5})), 0), std::invalid_argument);
}

TEST_CASE("confusion from labels") {
    const std::vector<Diagnosis> truth{Diagnosis::MEL, Diagnosis::NV, Diagnosis::NV, Diagnosis::DF};
    const ConfusionMatrix perfect = confusion(truth, truth);
    CHECK(perfect.trace() == 4);
    CHECK(perfect.row_sum(static_cast<int>(Diagnosis::NV)) == 2);

    const ConfusionMatrix one = confusion(std::vector<std::string>{"MEL"}, std::vector<std::string>{"NV"});
    CHECK(one.at(Diagnosis::MEL, Diagnosis::NV) == 1);
    CHECK(one.total() == 1);
    CHECK_THROWS_AS(confusion(std::vector<std::string>{"MEL"}, std::vector<std::string>{"XYZ"}), DataError);
    CHECK_THROWS(confusion(truth, std::vector<Diagnosis>{Diagnosis::MEL}));

    // Rebuild the reference matrix from expanded label lists.
    std::vector<Diagnosis> t;
    std::vector<Diagnosis> p;
    for (int r = 0; r < kNumDiagnoses; ++r) {
        for (int c = 0; c < kNumDiagnoses; ++c) {
            for (std::int64_t k = 0; k < kReferenceCounts[r][c]; ++k) {
                t.push_back(static_cast<Diagnosis>(r));
                p.push_back(static_cast<Diagnosis>(c));
            }
        }
    }
    const ConfusionMatrix cm = confusion(t, p);
    CHECK(cm.counts() == kReferenceCounts);
    for (int c = 0; c < kNumDiagnoses; ++c) CHECK(cm.row_sum(c) == kReferenceClassCounts[c]);
    CHECK(cm.total() == 10015);
    CHECK_NOTHROW(cm.check_class_counts(kReferenceClassCounts));
    auto off = kReferenceClassCounts;
    off[0] += 1;
    CHECK_THROWS_AS(cm.check_class_counts(off), DataError);
}

TEST_CASE("metrics from the reference matrix") {
    const ConfusionMatrix cm(kReferenceCounts);
    const MetricsReport m = metrics_from_confusion(cm);
    for (int c = 0; c < kNumDiagnoses; ++c) {
        const ClassMetrics& k = m.per_class[c];
        INFO("class " << diagnosis_names()[c]);
        CHECK(round4(k.accuracy) == doctest::Approx(kReferenceMetrics[0][c]).epsilon(1e-12));
        CHECK(round4(k.error_rate) == doctest::Approx(kReferenceMetrics[1][c]).epsilon(1e-12));
        CHECK(round4(k.sensitivity) == doctest::Approx(kReferenceMetrics[2][c]).epsilon(1e-12));
        CHECK(round4(k.specificity) == doctest::Approx(kReferenceMetrics[3][c]).epsilon(1e-12));
        CHECK(round4(k.precision) == doctest::Approx(kReferenceMetrics[4][c]).epsilon(1e-12));
        CHECK(round4(k.recall) == doctest::Approx(kReferenceMetrics[5][c]).epsilon(1e-12));

        CHECK(k.tp + k.fn + k.fp + k.tn == cm.total());
        CHECK(k.recall == k.sensitivity);
        CHECK(std::abs(k.error_rate - (1 - k.accuracy)) < 1e-12);
    }
    const auto& mel = m.per_class[0];
    CHECK(mel.tp == 783);
    CHECK(mel.fn == 330);
    CHECK(mel.fp == 964);
    CHECK(mel.tn == 7938);
    CHECK(round4(m.class_averaged_recall) == doctest::Approx(kReferenceAverageRecall).epsilon(1e-12));

    std::int64_t tp = 0;
    for (const auto& k : m.per_class) tp += k.tp;
    CHECK(tp == cm.trace());
}

TEST_CASE("metrics edge cases") {
    ConfusionMatrix::Counts diag{};
    for (int c = 0; c < kNumDiagnoses; ++c) diag[c][c] = c + 1;
    const MetricsReport perfect = metrics_from_confusion(ConfusionMatrix(diag));
    for (const auto& k : perfect.per_class) {
        CHECK(k.sensitivity == 1.0);
        CHECK(k.precision == 1.0);
        CHECK(k.specificity == 1.0);
        CHECK(k.error_rate == 0.0);
    }
    CHECK(perfect.class_averaged_recall == 1.0);

    ConfusionMatrix::Counts sparse{};
    sparse[0][1] = 4;
    const MetricsReport z = metrics_from_confusion(ConfusionMatrix(sparse));
    CHECK(z.per_class[0].precision == 0.0);
    CHECK(z.per_class[2].sensitivity == 0.0);
    CHECK(z.per_class[2].precision == 0.0);

    CHECK_THROWS_AS(ConfusionMatrix(ConfusionMatrix::Counts{}), DataError);
    ConfusionMatrix::Counts neg{};
    neg[0][0] = 3;
    neg[1][1] = -1;
    CHECK_THROWS_AS(ConfusionMatrix{neg}, DataError);
}

TEST_CASE("stratified k-fold") {
    SUBCASE("small balanced set") {
        const std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
        const auto folds = stratified_kfold(labels, 5, 7);
        REQUIRE(folds.size() == 5);
        for (const auto& f : folds) {
            REQUIRE(f.size() == 2);
            CHECK(labels[f[0]] != labels[f[1]]);
        }
    }
    SUBCASE("reference class counts") {
        std::vector<int> labels;
        for (int c = 0; c < kNumDiagnoses; ++c) labels.insert(labels.end(), kReferenceClassCounts[c], c);
        for (std::uint64_t seed : {1ULL, 42ULL}) {
            const auto folds = stratified_kfold(labels, 5, seed);
            std::set<std::size_t> all;
            std::size_t total = 0;
            for (const auto& f : folds) {
                std::array<int, kNumDiagnoses> per{};
                for (std::size_t i : f) ++per[labels[i]];
                CHECK((per[0] == 222 || per[0] == 223));
                CHECK(per[5] == 23);
                for (int c = 0; c < kNumDiagnoses; ++c) {
                    CHECK(std::abs(per[c] - static_cast<double>(kReferenceClassCounts[c]) / 5) < 1.0);
                }
                all.insert(f.begin(), f.end());
                total += f.size();
            }
            CHECK(total == labels.size());
            CHECK(all.size() == labels.size());
            CHECK(stratified_kfold(labels, 5, seed) == folds);
        }
        CHECK(stratified_kfold(labels, 5, 1) != stratified_kfold(labels, 5, 2));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(stratified_kfold({0, 1, 0}, 4, 1), DataError);
        CHECK_THROWS_AS(stratified_kfold({0, 1, 0}, 1, 1), std::invalid_argument);
    }
}

TEST_CASE("odd/even split") {
    const IdSplit s = odd_even_split({"ISIC_0000001", "ISIC_0000002", "ISIC_0000013", "ISIC_0000100"});
    CHECK(s.train == std::vector<std::string>{"ISIC_0000001", "ISIC_0000013"});
    CHECK(s.test == std::vector<std::string>{"ISIC_0000002", "ISIC_0000100"});
    CHECK(odd_even_split({"ISIC_0000001", "ISIC_0000003"}).test.empty());
    CHECK(trailing_number("ISIC_0024306") == 24306u);
    CHECK_FALSE(trailing_number("ISIC_").has_value());
    try {
        odd_even_split({"ISIC_0000001", "bad_id"});
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bad_id") != std::string::npos);
    }
}

TEST_CASE("report files") {
    const ConfusionMatrix cm(kReferenceCounts);
    std::ostringstream os;
    write_confusion_csv(os, cm);
    CHECK(os.str().rfind("truth/pred,MEL,NV,BCC,AKIEC,BKL,DF,VASC\nMEL,783,122,", 0) == 0);
    std::istringstream is(os.str());
    CHECK(read_confusion_csv(is) == cm);

    auto rejects = [](std::string text) {
        std::istringstream in(text);
        CHECK_THROWS_AS(read_confusion_csv(in), DataError);
    };
    std::string swapped = os.str();
    swapped.replace(swapped.find("MEL,NV"), 6, "NV,MEL");
    rejects(swapped);
    std::string negative = os.str();
    negative.replace(negative.find("783"), 3, "-78");
    rejects(negative);
    std::string fractional = os.str();
    fractional.replace(fractional.find("783"), 3, "7.3");
    rejects(fractional);
    rejects(os.str().substr(0, os.str().rfind("VASC")));

    std::ostringstream ms;
    write_metrics_csv(ms, metrics_from_confusion(cm));
    const std::string text = ms.str();
    CHECK(text.rfind("class,accuracy,error_rate,sensitivity,specificity,precision,recall\n", 0) == 0);
    CHECK(text.find("MEL,0.870794,0.129206,0.703504,0.891710,0.448197,0.703504\n") != std::string::npos);
    CHECK(text.find("AVG_RECALL,,,,,,0.730347\n") != std::string::npos);

    std::ostringstream ov;
    const OverlapReport r = overlap_report(named({0.9, 0.7, 0.5}));
    write_overlap_csv(ov, r);
    CHECK(ov.str() == "image,jaccard\nimg0,0.900000\nimg1,0.700000\nimg2,0.500000\n");
    CHECK(overlap_summary(r) ==
          "images=3 mean_raw=0.700000 mean_thresholded=0.533333 frac_below=0.333333 threshold=0.65");
    std::ostringstream hs;
    write_histogram_csv(hs, score_histogram(r, 2));
    CHECK(hs.str() == "bin_low,bin_high,count\n0.00,0.50,0\n0.50,1.00,3\n");
}

TEST_CASE("diagnosis names") {
    CHECK(diagnosis_names()[0] == "MEL");
    CHECK(diagnosis_names()[6] == "VASC");
    CHECK(parse_diagnosis("AKIEC") == Diagnosis::AKIEC);
    CHECK(to_string(Diagnosis::BKL) == "BKL");
    CHECK_THROWS_AS(parse_diagnosis("VAS"), DataError);
}
