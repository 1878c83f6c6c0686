#pragma once

#include "lesion/raster.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lesion {

/// Diagnosis classes in the fixed challenge order.
enum class Diagnosis { MEL = 0, NV, BCC, AKIEC, BKL, DF, VASC };

inline constexpr int kNumDiagnoses = 7;

const std::array<std::string, kNumDiagnoses>& diagnosis_names();
std::string_view to_string(Diagnosis d);
/// Throws DataError on an unknown name.
Diagnosis parse_diagnosis(std::string_view name);

// ---------------------------------------------------------------------------
// Segmentation overlap
// ---------------------------------------------------------------------------

/// |a & b| / |a | b|. Two empty masks score 1.
double jaccard(const BinaryMask& a, const BinaryMask& b);

struct OverlapReport {
    std::vector<std::pair<std::string, double>> per_image;
    double mean_raw = 0.0;
    /// Mean after scores below `threshold` are set to 0.
    double mean_thresholded = 0.0;
    double frac_below = 0.0;
    double threshold = 0.65;
};

/// Challenge scoring rule applied to precomputed scores.
OverlapReport overlap_report(std::vector<std::pair<std::string, double>> scores,
                             double threshold = 0.65);

struct MaskPair {
    std::string id;
    BinaryMask predicted;
    BinaryMask truth;
};

OverlapReport overlap_report(const std::vector<MaskPair>& pairs, double threshold = 0.65);

struct HistogramBin {
    double low = 0.0;
    double high = 0.0;
    std::size_t count = 0;
};

/// Equal-width bins over [0, 1]; the last bin is closed on the right.
std::vector<HistogramBin> score_histogram(const OverlapReport& report, int bins = 20);

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Rows are the true class, columns the predicted class.
class ConfusionMatrix {
public:
    using Counts = std::array<std::array<std::int64_t, kNumDiagnoses>, kNumDiagnoses>;

    ConfusionMatrix() = default;
    /// Validates nonnegative counts and a positive total.
    explicit ConfusionMatrix(const Counts& counts);

    std::int64_t at(Diagnosis truth, Diagnosis predicted) const {
        return counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
    }
    std::int64_t at(int truth, int predicted) const {
        return counts_[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
    }
    const Counts& counts() const { return counts_; }

    std::int64_t row_sum(int c) const;
    std::int64_t col_sum(int c) const;
    std::int64_t total() const;
    std::int64_t trace() const;

    /// Throws DataError unless every row sum equals the expected class count
    /// (and so the total equals the dataset size).
    void check_class_counts(const std::array<std::int64_t, kNumDiagnoses>& expected) const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    Counts counts_{};
};

ConfusionMatrix confusion(const std::vector<Diagnosis>& truth,
                          const std::vector<Diagnosis>& predicted);
/// Label-name variant; unknown names throw DataError.
ConfusionMatrix confusion(const std::vector<std::string>& truth,
                          const std::vector<std::string>& predicted);

struct ClassMetrics {
    std::int64_t tp = 0;
    std::int64_t fn = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    double accuracy = 0.0;
    double error_rate = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct MetricsReport {
    std::array<ClassMetrics, kNumDiagnoses> per_class{};
    double class_averaged_recall = 0.0;
};

/// One-vs-rest metrics per class; zero denominators give 0.
MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// k disjoint index folds covering all samples; per class the fold sizes
/// differ by at most one. `labels` are arbitrary nonnegative class ids.
std::vector<std::vector<std::size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                       std::uint64_t seed);

struct IdSplit {
    std::vector<std::string> train;  // odd trailing number
    std::vector<std::string> test;   // even trailing number
};

/// Parity of the trailing decimal number decides membership.
/// Throws DataError listing any id without one.
IdSplit odd_even_split(const std::vector<std::string>& ids);

/// Trailing decimal number of an id, if any.
std::optional<std::uint64_t> trailing_number(std::string_view id);

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

void write_overlap_csv(std::ostream& os, const OverlapReport& report);
void write_histogram_csv(std::ostream& os, const std::vector<HistogramBin>& bins);
std::string overlap_summary(const OverlapReport& report);

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm);
/// Strict reader: header row and column must list the classes in the fixed
/// order; counts must be nonnegative integers. Throws DataError otherwise.
ConfusionMatrix read_confusion_csv(std::istream& is);

void write_metrics_csv(std::ostream& os, const MetricsReport& report);

}  // namespace lesion
