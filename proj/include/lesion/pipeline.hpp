#pragma once

#include "lesion/bayes_seg.hpp"
#include "lesion/dataset.hpp"
#include "lesion/evaluation.hpp"
#include "lesion/model_io.hpp"
#include "lesion/svm.hpp"
#include "lesion/threshold_select.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lesion {

struct PipelineConfig {
    int max_side = 512;
    std::uint64_t seed = 42;
    int threads = 1;
    TissueTrainingConfig tissue;
    SvrConfig svr;
    ThresholdGrid grid = ThresholdGrid::standard();
    MulticlassConfig cls;
    int folds = 5;
    bool reuse_seg_models = false;

    /// Copies seed and threads into the component configs. Call after
    /// editing the top-level fields. Throws UsageError on out-of-range values.
    void propagate();
    io::Json to_json() const;
};

/// Runs fn(0..n-1) on up to `threads` workers. The first exception (lowest
/// index) is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Image decoded and reduced to the working resolution.
struct WorkingImage {
    int original_width = 0;
    int original_height = 0;
    RgbImage image;
};

WorkingImage make_working_image(const RgbImage& original, int max_side);
WorkingImage load_working_image(const std::filesystem::path& path, int max_side);
/// Reads a full-resolution mask, checks it against the original image
/// dimensions and samples it down to the working grid.
BinaryMask load_working_mask(const std::filesystem::path& path, const WorkingImage& img);

struct SegmentationModels {
    TissueColorModel tissue;
    ThresholdModel threshold;

    bool operator==(const SegmentationModels&) const = default;
};

/// Supplies training image i (working resolution) and its truth mask.
using TrainingLoader = std::function<std::pair<RgbImage, BinaryMask>(std::size_t)>;

SegmentationModels train_segmentation(std::size_t n, const TrainingLoader& load,
                                      const PipelineConfig& cfg);
SegmentationModels train_segmentation(const DatasetIndex& index, const PipelineConfig& cfg);

struct SegmentationOutput {
    ScalarMap posterior;
    double threshold = 0.0;
    double predicted_jaccard = 0.0;
    BinaryMask working_mask;
    /// working_mask resized to the original dimensions.
    BinaryMask mask;
};

SegmentationOutput segment_image(const SegmentationModels& models, const WorkingImage& img);

/// Diagnosis class names in fixed order, as used by the classifier.
std::vector<std::string> diagnosis_class_list();

SvcMulticlass train_classifier(const Samples& x, const std::vector<Diagnosis>& labels,
                               const PipelineConfig& cfg);

/// Feature CSV joined against labels; error when any id lacks a label.
struct LabeledFeatures {
    std::vector<std::string> ids;
    Samples x;
    std::vector<Diagnosis> labels;
};
LabeledFeatures join_labels(const FeatureTable& features,
                            const std::map<std::string, Diagnosis>& labels);

// ---- commands ---------------------------------------------------------

void save_segmentation_models(const SegmentationModels& m, const PipelineConfig& cfg,
                              const std::filesystem::path& tissue_path,
                              const std::filesystem::path& threshold_path);
SegmentationModels load_segmentation_models(const std::filesystem::path& tissue_path,
                                            const std::filesystem::path& threshold_path);

void cmd_train_seg(const DatasetIndex& index, const PipelineConfig& cfg,
                   const std::filesystem::path& tissue_out, const std::filesystem::path& threshold_out);

struct SegmentEmit {
    bool posteriors = false;
    bool overlays = false;
};

/// Ids whose images could not be processed; processing continues past them.
struct CommandStatus {
    std::size_t processed = 0;
    std::vector<std::string> failures;
};

/// Overlays need truth masks in the index (UsageError otherwise).
CommandStatus cmd_segment(const SegmentationModels& models, const DatasetIndex& index,
                          const std::filesystem::path& out_dir, const SegmentEmit& emit,
                          const PipelineConfig& cfg, std::ostream& log);

/// Writes <prefix>_report.csv, <prefix>_histogram.csv and <prefix>_summary.txt;
/// returns the summary line.
std::string cmd_eval_seg(const std::filesystem::path& pred_dir, const std::filesystem::path& truth_dir,
                         const std::string& out_prefix, const PipelineConfig& cfg);

/// Masks come from the index's truth masks, or from `pred_dir` when given.
void cmd_extract(const DatasetIndex& index, const std::optional<std::filesystem::path>& pred_dir,
                 const std::filesystem::path& out_csv, const PipelineConfig& cfg);

void cmd_train_cls(const std::filesystem::path& features_csv, const std::filesystem::path& labels_csv,
                   const std::filesystem::path& model_out, const PipelineConfig& cfg);

void cmd_classify(const std::filesystem::path& model_path, const std::filesystem::path& features_csv,
                  const std::filesystem::path& out_csv, const PipelineConfig& cfg);

/// Held-out predictions for every entry plus the aggregated reports.
struct CrossvalResult {
    std::vector<std::string> ids;
    std::vector<int> fold;
    std::vector<Diagnosis> truth;
    std::vector<Diagnosis> predicted;
    ConfusionMatrix confusion;
    MetricsReport metrics;
};

/// End-to-end: per fold, segmentation models are trained on the training
/// folds (or once on everything with reuse_seg_models), features come from
/// predicted masks, and the classifier is trained on the training folds.
CrossvalResult crossval_images(const DatasetIndex& index, const PipelineConfig& cfg, std::ostream& log);
/// Classifier-only variant over precomputed features.
CrossvalResult crossval_features(const LabeledFeatures& data, const PipelineConfig& cfg,
                                 std::ostream& log);

/// Writes confusion.csv, metrics.csv and predictions.csv into out_dir.
void write_crossval_outputs(const CrossvalResult& r, const std::filesystem::path& out_dir);

void cmd_metrics(const std::filesystem::path& confusion_csv, const std::filesystem::path& out_csv);

/// odd keeps ids with an odd trailing number (the training half), even the rest.
enum class Subset { all, odd, even };
DatasetIndex select_subset(const DatasetIndex& index, Subset which);

enum class SplitMode { odd_even, kfold };
/// odd_even: `image,subset` rows; kfold: `image,fold` rows (needs labels).
void cmd_split(const DatasetIndex& index, SplitMode mode, const PipelineConfig& cfg, std::ostream& os);

}  // namespace lesion
