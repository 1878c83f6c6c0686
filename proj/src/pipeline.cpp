#include "lesion/pipeline.hpp"

#include "lesion/csv.hpp"
#include "lesion/error.hpp"
#include "lesion/features200.hpp"
#include "lesion/image_io.hpp"
#include "lesion/morphology.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

namespace fs = std::filesystem;

namespace lesion {

namespace {

std::ofstream open_output(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    return os;
}

std::ifstream open_input(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return is;
}

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 20) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

io::Json svm_config_json(const SmoConfig& s) {
    return {{"tol", s.tol}, {"max_iter", s.max_iter}, {"cache_bytes", s.cache_bytes}};
}

std::array<std::int64_t, kNumDiagnoses> class_counts(const std::vector<Diagnosis>& labels) {
    std::array<std::int64_t, kNumDiagnoses> n{};
    for (Diagnosis d : labels) ++n[static_cast<std::size_t>(d)];
    return n;
}

std::vector<int> to_ints(const std::vector<Diagnosis>& labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (Diagnosis d : labels) out.push_back(static_cast<int>(d));
    return out;
}

// Indexes are into the fold-local list; classes seen anywhere in `labels`
// must also be in the training part.
void check_training_classes(const std::vector<Diagnosis>& labels, const std::vector<std::size_t>& train,
                            int fold) {
    const auto all = class_counts(labels);
    std::array<std::int64_t, kNumDiagnoses> seen{};
    for (std::size_t i : train) ++seen[static_cast<std::size_t>(labels[i])];
    for (int k = 0; k < kNumDiagnoses; ++k) {
        if (all[k] > 0 && seen[k] == 0) {
            throw DataError("class " + diagnosis_names()[k] + " is absent from the training part of fold " +
                            std::to_string(fold) + "; use a smaller k");
        }
    }
}

struct FoldPlan {
    std::vector<int> fold_of;
    std::vector<std::vector<std::size_t>> folds;
};

FoldPlan plan_folds(const std::vector<Diagnosis>& labels, const PipelineConfig& cfg) {
    FoldPlan p;
    p.folds = stratified_kfold(to_ints(labels), cfg.folds, cfg.seed);
    p.fold_of.assign(labels.size(), -1);
    for (std::size_t f = 0; f < p.folds.size(); ++f) {
        for (std::size_t i : p.folds[f]) p.fold_of[i] = static_cast<int>(f);
    }
    return p;
}

std::vector<std::size_t> training_indices(const FoldPlan& p, int fold) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p.fold_of.size(); ++i) {
        if (p.fold_of[i] != fold) out.push_back(i);
    }
    return out;
}

// Trains on the rows in `train`, predicts all rows in `test`.
std::vector<Diagnosis> fit_predict(const Samples& x, const std::vector<Diagnosis>& labels,
                                   const std::vector<std::size_t>& train,
                                   const std::vector<std::size_t>& test, const PipelineConfig& cfg) {
    Samples tx;
    std::vector<Diagnosis> ty;
    for (std::size_t i : train) {
        tx.push_back(x[i]);
        ty.push_back(labels[i]);
    }
    const SvcMulticlass model = train_classifier(tx, ty, cfg);
    std::vector<Diagnosis> out;
    for (std::size_t i : test) out.push_back(static_cast<Diagnosis>(multiclass_predict(model, x[i]).label));
    return out;
}

CrossvalResult finish_crossval(CrossvalResult r) {
    r.confusion = confusion(r.truth, r.predicted);
    r.confusion.check_class_counts(class_counts(r.truth));
    r.metrics = metrics_from_confusion(r.confusion);
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::propagate() {
    if (max_side < 16) throw UsageError("--max-side must be at least 16");
    if (threads < 1) throw UsageError("--threads must be at least 1");
    if (folds < 2) throw UsageError("--folds must be at least 2");
    if (tissue.prior && !(*tissue.prior > 0.0 && *tissue.prior < 1.0)) {
        throw UsageError("fixed prior must lie strictly between 0 and 1");
    }
    tissue.em.seed = seed;
    cls.seed = seed;
    cls.threads = threads;
}

io::Json PipelineConfig::to_json() const {
    io::Json prior = "estimated";
    if (tissue.prior) prior = *tissue.prior;
    return {{"max_side", max_side},
            {"seed", seed},
            {"folds", folds},
            {"reuse_seg_models", reuse_seg_models},
            {"tissue",
             {{"prior", prior},
              {"samples_per_class", tissue.samples_per_class},
              {"em",
               {{"n_components", tissue.em.n_components},
                {"max_iters", tissue.em.max_iters},
                {"rel_tol", tissue.em.rel_tol},
                {"cov_regularizer", tissue.em.cov_regularizer},
                {"min_eigenvalue", tissue.em.min_eigenvalue},
                {"kmeans_iters", tissue.em.kmeans_iters},
                {"seed", tissue.em.seed}}}}},
            {"threshold_svr",
             {{"c", svr.c},
              {"epsilon", svr.epsilon},
              {"gamma", svr.gamma},
              {"smo", svm_config_json(svr.smo)},
              {"grid", grid.values()}}},
            {"classifier",
             {{"c", cls.c},
              {"gamma", cls.gamma},
              {"calibration_folds", cls.calibration_folds},
              {"seed", cls.seed},
              {"smo", svm_config_json(cls.smo)}}}};
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr error;
    auto work = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    error = std::current_exception();
                }
                stop = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

WorkingImage make_working_image(const RgbImage& original, int max_side) {
    return {original.width(), original.height(), resize_area_average(original, max_side)};
}

WorkingImage load_working_image(const fs::path& path, int max_side) {
    return make_working_image(io::read_image(path), max_side);
}

BinaryMask load_working_mask(const fs::path& path, const WorkingImage& img) {
    const BinaryMask m = io::read_mask(path);
    if (m.width() != img.original_width || m.height() != img.original_height) {
        throw DataError("mask " + path.string() + " is " + std::to_string(m.width()) + "x" +
                        std::to_string(m.height()) + " but its image is " +
                        std::to_string(img.original_width) + "x" + std::to_string(img.original_height));
    }
    return resize_mask_nearest(m, img.image.width(), img.image.height());
}

SegmentationModels train_segmentation(std::size_t n, const TrainingLoader& load,
                                      const PipelineConfig& cfg) {
    if (n == 0) throw DataError("no training images");
    std::vector<TissuePixelSample> samples(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        const auto [img, mask] = load(i);
        samples[i] = sample_tissue_pixels(img, mask, i, cfg.tissue);
    });
    SegmentationModels m;
    m.tissue = fit_tissue_model(samples, cfg.tissue);
    samples.clear();

    std::vector<ThresholdTrainingRows> rows(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
        const auto [img, mask] = load(i);
        rows[i] = threshold_training_rows(posterior_map(m.tissue, img), mask, cfg.grid);
    });
    m.threshold = fit_threshold_model(rows, cfg.grid, cfg.svr);
    return m;
}

SegmentationModels train_segmentation(const DatasetIndex& index, const PipelineConfig& cfg) {
    if (index.empty()) throw DataError("no training images");
    index.require_masks();
    return train_segmentation(
        index.size(),
        [&](std::size_t i) {
            const DatasetEntry& e = index.entries[i];
            WorkingImage w = load_working_image(e.image, cfg.max_side);
            BinaryMask m = load_working_mask(*e.mask, w);
            return std::pair{std::move(w.image), std::move(m)};
        },
        cfg);
}

SegmentationOutput segment_image(const SegmentationModels& models, const WorkingImage& img) {
    SegmentationOutput out;
    out.posterior = posterior_map(models.tissue, img.image);
    ThresholdSelection sel = select_threshold(models.threshold, out.posterior);
    out.threshold = sel.threshold;
    out.predicted_jaccard = sel.predicted_jaccard;
    out.working_mask = std::move(sel.mask);
    out.mask = resize_mask_nearest(out.working_mask, img.original_width, img.original_height);
    return out;
}

std::vector<std::string> diagnosis_class_list() {
    const auto& n = diagnosis_names();
    return {n.begin(), n.end()};
}

SvcMulticlass train_classifier(const Samples& x, const std::vector<Diagnosis>& labels,
                               const PipelineConfig& cfg) {
    if (x.size() != labels.size()) throw std::invalid_argument("train_classifier: size mismatch");
    return multiclass_fit(x, to_ints(labels), diagnosis_class_list(), cfg.cls);
}

LabeledFeatures join_labels(const FeatureTable& features, const std::map<std::string, Diagnosis>& labels) {
    LabeledFeatures out;
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < features.ids.size(); ++i) {
        auto it = labels.find(features.ids[i]);
        if (it == labels.end()) {
            missing.push_back(features.ids[i]);
            continue;
        }
        out.ids.push_back(features.ids[i]);
        out.x.push_back(features.rows[i]);
        out.labels.push_back(it->second);
    }
    if (!missing.empty()) throw DataError("no label for feature rows: " + join_ids(missing));
    if (out.ids.empty()) throw DataError("feature table is empty");
    return out;
}

// ---------------------------------------------------------------------------
// Commands

void save_segmentation_models(const SegmentationModels& m, const PipelineConfig& cfg,
                              const fs::path& tissue_path, const fs::path& threshold_path) {
    const std::string created = io::timestamp_now();
    io::save(tissue_path, {io::kFormatVersion, io::kind::tissue, created, cfg.to_json(), io::to_json(m.tissue)});
    io::save(threshold_path,
             {io::kFormatVersion, io::kind::threshold, created, cfg.to_json(), io::to_json(m.threshold)});
}

SegmentationModels load_segmentation_models(const fs::path& tissue_path, const fs::path& threshold_path) {
    const io::ModelContainer t = io::load(tissue_path, io::kind::tissue);
    const io::ModelContainer s = io::load(threshold_path, io::kind::threshold);
    return {io::tissue_from_json(t.payload), io::threshold_from_json(s.payload)};
}

void cmd_train_seg(const DatasetIndex& index, const PipelineConfig& cfg, const fs::path& tissue_out,
                   const fs::path& threshold_out) {
    const SegmentationModels m = train_segmentation(index, cfg);
    save_segmentation_models(m, cfg, tissue_out, threshold_out);
}

CommandStatus cmd_segment(const SegmentationModels& models, const DatasetIndex& index, const fs::path& out_dir,
                          const SegmentEmit& emit, const PipelineConfig& cfg, std::ostream& log) {
    if (emit.overlays && !index.has_masks()) throw UsageError("overlays need truth masks (--masks)");
    fs::create_directories(out_dir);

    struct Result {
        std::optional<SegmentationOutput> seg;
        std::optional<RgbImage> overlay;
        std::string error;
    };

    CommandStatus status;
    const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.threads)) * 4;
    for (std::size_t start = 0; start < index.size(); start += chunk) {
        const std::size_t count = std::min(chunk, index.size() - start);
        std::vector<Result> results(count);
        parallel_for(count, cfg.threads, [&](std::size_t k) {
            const DatasetEntry& e = index.entries[start + k];
            try {
                const RgbImage original = io::read_image(e.image);
                const WorkingImage w = make_working_image(original, cfg.max_side);
                results[k].seg = segment_image(models, w);
                if (emit.overlays) {
                    const BinaryMask truth = io::read_mask(*e.mask);
                    if (truth.width() != original.width() || truth.height() != original.height()) {
                        throw DataError("truth mask dimensions differ from the image");
                    }
                    results[k].overlay = io::render_overlay(original, truth, results[k].seg->mask);
                }
            } catch (const DataError& err) {
                results[k].error = err.what();
            }
        });
        // Single writer, in index order.
        for (std::size_t k = 0; k < count; ++k) {
            const DatasetEntry& e = index.entries[start + k];
            const Result& r = results[k];
            if (!r.seg) {
                log << "error: " << e.id << ": " << r.error << '\n';
                status.failures.push_back(e.id);
                continue;
            }
            io::write_mask_png(out_dir / mask_filename(e.id), r.seg->mask);
            if (emit.posteriors) io::write_gray_png(out_dir / (e.id + "_posterior.png"), r.seg->posterior);
            if (r.overlay) io::write_rgb_png(out_dir / (e.id + "_overlay.png"), *r.overlay);
            ++status.processed;
        }
    }
    return status;
}

std::string cmd_eval_seg(const fs::path& pred_dir, const fs::path& truth_dir, const std::string& out_prefix,
                         const PipelineConfig& cfg) {
    auto list = [](const fs::path& dir) {
        if (!fs::is_directory(dir)) throw DataError("directory not found: " + dir.string());
        std::set<std::string> ids;
        const std::string suffix = "_segmentation.png";
        for (const auto& de : fs::directory_iterator(dir)) {
            const std::string name = de.path().filename().string();
            if (de.is_regular_file() && name.size() > suffix.size() &&
                name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
                ids.insert(name.substr(0, name.size() - suffix.size()));
            }
        }
        return ids;
    };
    const auto pred = list(pred_dir);
    const auto truth = list(truth_dir);
    std::vector<std::string> unmatched;
    std::set_symmetric_difference(pred.begin(), pred.end(), truth.begin(), truth.end(),
                                  std::back_inserter(unmatched));
    if (!unmatched.empty()) throw DataError("unmatched mask ids: " + join_ids(unmatched));
    if (pred.empty()) throw DataError("no masks found in " + pred_dir.string());

    const std::vector<std::string> ids(pred.begin(), pred.end());
    std::vector<std::pair<std::string, double>> scores(ids.size());
    parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
        const BinaryMask p = io::read_mask(pred_dir / mask_filename(ids[i]));
        const BinaryMask t = io::read_mask(truth_dir / mask_filename(ids[i]));
        scores[i] = {ids[i], jaccard(p, t)};
    });
    const OverlapReport report = overlap_report(std::move(scores));
    {
        auto os = open_output(out_prefix + "_report.csv");
        write_overlap_csv(os, report);
    }
    {
        auto os = open_output(out_prefix + "_histogram.csv");
        write_histogram_csv(os, score_histogram(report));
    }
    const std::string summary = overlap_summary(report);
    auto os = open_output(out_prefix + "_summary.txt");
    os << summary << '\n';
    return summary;
}

void cmd_extract(const DatasetIndex& index, const std::optional<fs::path>& pred_dir, const fs::path& out_csv,
                 const PipelineConfig& cfg) {
    if (index.empty()) throw DataError("no images to extract");
    std::vector<fs::path> masks;
    for (const auto& e : index.entries) {
        if (pred_dir) {
            const fs::path p = *pred_dir / mask_filename(e.id);
            if (!fs::is_regular_file(p)) throw DataError("missing mask for " + e.id);
            masks.push_back(p);
        } else {
            if (!e.mask) throw DataError("missing mask for " + e.id);
            masks.push_back(*e.mask);
        }
    }
    std::vector<FeatureVector200> rows(index.size());
    parallel_for(index.size(), cfg.threads, [&](std::size_t i) {
        const WorkingImage w = load_working_image(index.entries[i].image, cfg.max_side);
        rows[i] = extract_features(w.image, load_working_mask(masks[i], w));
    });
    auto os = open_output(out_csv);
    write_features_csv(os, index.ids(), rows);
}

void cmd_train_cls(const fs::path& features_csv, const fs::path& labels_csv, const fs::path& model_out,
                   const PipelineConfig& cfg) {
    const LabeledFeatures data = join_labels(read_features_csv(features_csv), read_labels_csv(labels_csv));
    const SvcMulticlass model = train_classifier(data.x, data.labels, cfg);
    io::save(model_out,
             {io::kFormatVersion, io::kind::diagnosis, io::timestamp_now(), cfg.to_json(), io::to_json(model)});
}

void cmd_classify(const fs::path& model_path, const fs::path& features_csv, const fs::path& out_csv,
                  const PipelineConfig& cfg) {
    const SvcMulticlass model = io::multiclass_from_json(io::load(model_path, io::kind::diagnosis).payload);
    if (model.classes != diagnosis_class_list()) throw DataError("model classes are not the diagnosis classes");
    const FeatureTable t = read_features_csv(features_csv);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (t.rows[i].size() != model.scaler.dim()) {
            throw DataError("feature width " + std::to_string(t.rows[i].size()) + " does not match model width " +
                            std::to_string(model.scaler.dim()));
        }
    }
    std::vector<MulticlassPrediction> preds(t.rows.size());
    parallel_for(t.rows.size(), cfg.threads,
                 [&](std::size_t i) { preds[i] = multiclass_predict(model, t.rows[i]); });
    auto os = open_output(out_csv);
    os << "image";
    for (const auto& n : diagnosis_names()) os << ',' << n;
    os << '\n';
    for (std::size_t i = 0; i < preds.size(); ++i) {
        os << t.ids[i];
        for (double s : preds[i].scores) os << ',' << csv::format_fixed(s, 6);
        os << '\n';
    }
}

CrossvalResult crossval_features(const LabeledFeatures& data, const PipelineConfig& cfg, std::ostream& log) {
    const FoldPlan plan = plan_folds(data.labels, cfg);
    CrossvalResult r;
    r.ids = data.ids;
    r.truth = data.labels;
    r.fold = plan.fold_of;
    r.predicted.assign(data.ids.size(), Diagnosis::MEL);
    for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
        const auto train = training_indices(plan, f);
        check_training_classes(data.labels, train, f);
        log << "fold " << f << ": train " << train.size() << ", test " << plan.folds[f].size() << '\n';
        const auto pred = fit_predict(data.x, data.labels, train, plan.folds[f], cfg);
        for (std::size_t k = 0; k < pred.size(); ++k) r.predicted[plan.folds[f][k]] = pred[k];
    }
    return finish_crossval(std::move(r));
}

CrossvalResult crossval_images(const DatasetIndex& index, const PipelineConfig& cfg, std::ostream& log) {
    if (index.empty()) throw DataError("empty dataset");
    index.require_labels();
    index.require_masks();
    std::vector<Diagnosis> labels;
    for (const auto& e : index.entries) labels.push_back(*e.label);
    const FoldPlan plan = plan_folds(labels, cfg);

    // Features of every image under one set of segmentation models.
    auto features_under = [&](const SegmentationModels& m) {
        Samples x(index.size());
        parallel_for(index.size(), cfg.threads, [&](std::size_t i) {
            const WorkingImage w = load_working_image(index.entries[i].image, cfg.max_side);
            const SegmentationOutput seg = segment_image(m, w);
            const FeatureVector200 f = extract_features(w.image, seg.working_mask);
            x[i].assign(f.begin(), f.end());
        });
        return x;
    };

    std::optional<Samples> shared;
    if (cfg.reuse_seg_models) {
        log << "training one segmenter on all " << index.size() << " images\n";
        shared = features_under(train_segmentation(index, cfg));
    }

    CrossvalResult r;
    r.ids = index.ids();
    r.truth = labels;
    r.fold = plan.fold_of;
    r.predicted.assign(index.size(), Diagnosis::MEL);
    for (int f = 0; f < static_cast<int>(plan.folds.size()); ++f) {
        const auto train = training_indices(plan, f);
        check_training_classes(labels, train, f);
        log << "fold " << f << ": train " << train.size() << ", test " << plan.folds[f].size() << '\n';
        const Samples x = shared ? *shared : features_under(train_segmentation(index.subset(train), cfg));
        const auto pred = fit_predict(x, labels, train, plan.folds[f], cfg);
        for (std::size_t k = 0; k < pred.size(); ++k) r.predicted[plan.folds[f][k]] = pred[k];
    }
    return finish_crossval(std::move(r));
}

void write_crossval_outputs(const CrossvalResult& r, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    {
        auto os = open_output(out_dir / "confusion.csv");
        write_confusion_csv(os, r.confusion);
    }
    {
        auto os = open_output(out_dir / "metrics.csv");
        write_metrics_csv(os, r.metrics);
    }
    auto os = open_output(out_dir / "predictions.csv");
    os << "image,fold,truth,predicted\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        os << r.ids[i] << ',' << r.fold[i] << ',' << to_string(r.truth[i]) << ',' << to_string(r.predicted[i])
           << '\n';
    }
}

void cmd_metrics(const fs::path& confusion_csv, const fs::path& out_csv) {
    auto is = open_input(confusion_csv);
    const ConfusionMatrix cm = read_confusion_csv(is);
    auto os = open_output(out_csv);
    write_metrics_csv(os, metrics_from_confusion(cm));
}

DatasetIndex select_subset(const DatasetIndex& index, Subset which) {
    if (which == Subset::all) return index;
    const IdSplit split = odd_even_split(index.ids());
    const std::set<std::string> keep = which == Subset::odd
                                           ? std::set<std::string>(split.train.begin(), split.train.end())
                                           : std::set<std::string>(split.test.begin(), split.test.end());
    DatasetIndex out;
    for (const auto& e : index.entries) {
        if (keep.count(e.id)) out.entries.push_back(e);
    }
    return out;
}

void cmd_split(const DatasetIndex& index, SplitMode mode, const PipelineConfig& cfg, std::ostream& os) {
    if (index.empty()) throw DataError("empty dataset");
    if (mode == SplitMode::odd_even) {
        const IdSplit split = odd_even_split(index.ids());
        const std::set<std::string> train(split.train.begin(), split.train.end());
        os << "image,subset\n";
        for (const auto& e : index.entries) os << e.id << ',' << (train.count(e.id) ? "train" : "test") << '\n';
        return;
    }
    index.require_labels();
    std::vector<Diagnosis> labels;
    for (const auto& e : index.entries) labels.push_back(*e.label);
    const FoldPlan plan = plan_folds(labels, cfg);
    os << "image,fold\n";
    for (std::size_t i = 0; i < index.size(); ++i) os << index.entries[i].id << ',' << plan.fold_of[i] << '\n';
}

}  // namespace lesion
