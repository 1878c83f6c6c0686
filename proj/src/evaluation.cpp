#include "lesion/evaluation.hpp"

#include "lesion/csv.hpp"
#include "lesion/error.hpp"
#include "lesion/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace lesion {

const std::array<std::string, kNumDiagnoses>& diagnosis_names() {
    static const std::array<std::string, kNumDiagnoses> names{"MEL", "NV",  "BCC", "AKIEC",
                                                               "BKL", "DF", "VASC"};
    return names;
}

std::string_view to_string(Diagnosis d) { return diagnosis_names()[static_cast<std::size_t>(d)]; }

Diagnosis parse_diagnosis(std::string_view name) {
    const auto& names = diagnosis_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<Diagnosis>(i);
    }
    throw DataError("unknown diagnosis label '" + std::string(name) + "'");
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw DataError("jaccard: mask dimensions differ");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

OverlapReport overlap_report(std::vector<std::pair<std::string, double>> scores, double threshold) {
    if (scores.empty()) throw DataError("overlap_report: no image pairs");
    OverlapReport r;
    r.threshold = threshold;
    double raw = 0.0;
    double kept = 0.0;
    std::size_t below = 0;
    for (const auto& [id, j] : scores) {
        raw += j;
        if (j < threshold) {
            ++below;
        } else {
            kept += j;
        }
    }
    const double n = static_cast<double>(scores.size());
    r.mean_raw = raw / n;
    r.mean_thresholded = kept / n;
    r.frac_below = static_cast<double>(below) / n;
    r.per_image = std::move(scores);
    return r;
}

OverlapReport overlap_report(const std::vector<MaskPair>& pairs, double threshold) {
    std::vector<std::pair<std::string, double>> scores;
    scores.reserve(pairs.size());
    for (const MaskPair& p : pairs) scores.emplace_back(p.id, jaccard(p.predicted, p.truth));
    return overlap_report(std::move(scores), threshold);
}

std::vector<HistogramBin> score_histogram(const OverlapReport& report, int bins) {
    if (bins < 1) throw std::invalid_argument("score_histogram: bins must be >= 1");
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[static_cast<std::size_t>(b)].low = static_cast<double>(b) / bins;
        out[static_cast<std::size_t>(b)].high = static_cast<double>(b + 1) / bins;
    }
    for (const auto& [id, j] : report.per_image) {
        int b = static_cast<int>(std::floor(std::clamp(j, 0.0, 1.0) * bins));
        b = std::min(b, bins - 1);
        ++out[static_cast<std::size_t>(b)].count;
    }
    return out;
}

ConfusionMatrix::ConfusionMatrix(const Counts& counts) : counts_(counts) {
    for (const auto& row : counts_) {
        for (auto v : row) {
            if (v < 0) throw DataError("confusion matrix: negative count");
        }
    }
    if (total() <= 0) throw DataError("confusion matrix: total must be positive");
}

std::int64_t ConfusionMatrix::row_sum(int c) const {
    std::int64_t s = 0;
    for (auto v : counts_[static_cast<std::size_t>(c)]) s += v;
    return s;
}

std::int64_t ConfusionMatrix::col_sum(int c) const {
    std::int64_t s = 0;
    for (const auto& row : counts_) s += row[static_cast<std::size_t>(c)];
    return s;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (int c = 0; c < kNumDiagnoses; ++c) s += row_sum(c);
    return s;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t s = 0;
    for (std::size_t c = 0; c < kNumDiagnoses; ++c) s += counts_[c][c];
    return s;
}

void ConfusionMatrix::check_class_counts(
    const std::array<std::int64_t, kNumDiagnoses>& expected) const {
    std::int64_t expected_total = 0;
    for (int c = 0; c < kNumDiagnoses; ++c) {
        expected_total += expected[static_cast<std::size_t>(c)];
        if (row_sum(c) != expected[static_cast<std::size_t>(c)]) {
            throw DataError("confusion matrix: row " + diagnosis_names()[static_cast<std::size_t>(c)] +
                            " sums to " + std::to_string(row_sum(c)) + ", expected " +
                            std::to_string(expected[static_cast<std::size_t>(c)]));
        }
    }
    if (total() != expected_total) throw DataError("confusion matrix: total does not match dataset size");
}

ConfusionMatrix confusion(const std::vector<Diagnosis>& truth,
                          const std::vector<Diagnosis>& predicted) {
    if (truth.size() != predicted.size()) throw DataError("confusion: label list lengths differ");
    if (truth.empty()) throw DataError("confusion: no labels");
    ConfusionMatrix::Counts counts{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return ConfusionMatrix(counts);
}

ConfusionMatrix confusion(const std::vector<std::string>& truth,
                          const std::vector<std::string>& predicted) {
    if (truth.size() != predicted.size()) throw DataError("confusion: label list lengths differ");
    std::vector<Diagnosis> t;
    std::vector<Diagnosis> p;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        t.push_back(parse_diagnosis(truth[i]));
        p.push_back(parse_diagnosis(predicted[i]));
    }
    return confusion(t, p);
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total <= 0) throw DataError("metrics: empty confusion matrix");
    MetricsReport r;
    auto ratio = [](std::int64_t num, std::int64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    double recall_sum = 0.0;
    for (int c = 0; c < kNumDiagnoses; ++c) {
        ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
        m.tp = cm.at(c, c);
        m.fn = cm.row_sum(c) - m.tp;
        m.fp = cm.col_sum(c) - m.tp;
        m.tn = total - m.tp - m.fn - m.fp;
        m.accuracy = ratio(m.tp + m.tn, total);
        m.error_rate = 1.0 - m.accuracy;
        m.sensitivity = ratio(m.tp, m.tp + m.fn);
        m.recall = m.sensitivity;
        m.specificity = ratio(m.tn, m.tn + m.fp);
        m.precision = ratio(m.tp, m.tp + m.fp);
        recall_sum += m.recall;
    }
    r.class_averaged_recall = recall_sum / kNumDiagnoses;
    return r;
}

std::vector<std::vector<std::size_t>> stratified_kfold(const std::vector<int>& labels, int k,
                                                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > labels.size()) {
        throw DataError("stratified_kfold: k exceeds the number of samples");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw std::invalid_argument("stratified_kfold: negative class id");
        by_class[labels[i]].push_back(i);
    }

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t next = 0;
    for (auto& [cls, idx] : by_class) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.index(i))]);
        }
        // Round-robin continues across classes so fold totals also stay balanced.
        for (std::size_t i : idx) {
            folds[next].push_back(i);
            next = (next + 1) % static_cast<std::size_t>(k);
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

std::optional<std::uint64_t> trailing_number(std::string_view id) {
    std::size_t end = id.size();
    std::size_t begin = end;
    while (begin > 0 && id[begin - 1] >= '0' && id[begin - 1] <= '9') --begin;
    if (begin == end) return std::nullopt;
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(id.data() + begin, id.data() + end, v);
    if (ec != std::errc()) return std::nullopt;
    return v;
}

IdSplit odd_even_split(const std::vector<std::string>& ids) {
    IdSplit split;
    std::vector<std::string> bad;
    for (const std::string& id : ids) {
        const auto n = trailing_number(id);
        if (!n) {
            bad.push_back(id);
            continue;
        }
        (*n % 2 == 1 ? split.train : split.test).push_back(id);
    }
    if (!bad.empty()) {
        std::string msg = "odd_even_split: ids without a trailing number:";
        for (const auto& b : bad) msg += " " + b;
        throw DataError(msg);
    }
    return split;
}

void write_overlap_csv(std::ostream& os, const OverlapReport& report) {
    os << "image,jaccard\n";
    for (const auto& [id, j] : report.per_image) os << id << ',' << csv::format_fixed(j, 6) << '\n';
}

void write_histogram_csv(std::ostream& os, const std::vector<HistogramBin>& bins) {
    os << "bin_low,bin_high,count\n";
    for (const auto& b : bins) {
        os << csv::format_fixed(b.low, 2) << ',' << csv::format_fixed(b.high, 2) << ',' << b.count
           << '\n';
    }
}

std::string overlap_summary(const OverlapReport& report) {
    std::ostringstream os;
    os << "images=" << report.per_image.size() << " mean_raw=" << csv::format_fixed(report.mean_raw, 6)
       << " mean_thresholded=" << csv::format_fixed(report.mean_thresholded, 6)
       << " frac_below=" << csv::format_fixed(report.frac_below, 6)
       << " threshold=" << csv::format_fixed(report.threshold, 2);
    return os.str();
}

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm) {
    const auto& names = diagnosis_names();
    os << "truth/pred";
    for (const auto& n : names) os << ',' << n;
    os << '\n';
    for (int r = 0; r < kNumDiagnoses; ++r) {
        os << names[static_cast<std::size_t>(r)];
        for (int c = 0; c < kNumDiagnoses; ++c) os << ',' << cm.at(r, c);
        os << '\n';
    }
}

ConfusionMatrix read_confusion_csv(std::istream& is) {
    const auto rows = csv::read_rows(is);
    const auto& names = diagnosis_names();
    if (rows.size() != kNumDiagnoses + 1) {
        throw DataError("confusion csv: expected a header plus 7 rows, got " +
                        std::to_string(rows.size()) + " lines");
    }
    const auto& header = rows.front();
    if (header.size() != kNumDiagnoses + 1) throw DataError("confusion csv: header must have 8 fields");
    for (int c = 0; c < kNumDiagnoses; ++c) {
        if (header[static_cast<std::size_t>(c + 1)] != names[static_cast<std::size_t>(c)]) {
            throw DataError("confusion csv: header column " + std::to_string(c + 1) + " is '" +
                            header[static_cast<std::size_t>(c + 1)] + "', expected '" +
                            names[static_cast<std::size_t>(c)] + "'");
        }
    }
    ConfusionMatrix::Counts counts{};
    for (int r = 0; r < kNumDiagnoses; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r + 1)];
        if (row.size() != kNumDiagnoses + 1) throw DataError("confusion csv: row " + std::to_string(r + 1) + " must have 8 fields");
        if (row.front() != names[static_cast<std::size_t>(r)]) {
            throw DataError("confusion csv: row label '" + row.front() + "', expected '" +
                            names[static_cast<std::size_t>(r)] + "'");
        }
        for (int c = 0; c < kNumDiagnoses; ++c) {
            const std::string& f = row[static_cast<std::size_t>(c + 1)];
            std::int64_t v = -1;
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size() || v < 0) {
                throw DataError("confusion csv: invalid count '" + f + "'");
            }
            counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = v;
        }
    }
    return ConfusionMatrix(counts);
}

void write_metrics_csv(std::ostream& os, const MetricsReport& report) {
    const auto& names = diagnosis_names();
    os << "class,accuracy,error_rate,sensitivity,specificity,precision,recall\n";
    for (int c = 0; c < kNumDiagnoses; ++c) {
        const ClassMetrics& m = report.per_class[static_cast<std::size_t>(c)];
        os << names[static_cast<std::size_t>(c)] << ',' << csv::format_fixed(m.accuracy, 6) << ','
           << csv::format_fixed(m.error_rate, 6) << ',' << csv::format_fixed(m.sensitivity, 6) << ','
           << csv::format_fixed(m.specificity, 6) << ',' << csv::format_fixed(m.precision, 6) << ','
           << csv::format_fixed(m.recall, 6) << '\n';
    }
    os << "AVG_RECALL,,,,,," << csv::format_fixed(report.class_averaged_recall, 6) << '\n';
}

}  // namespace lesion
