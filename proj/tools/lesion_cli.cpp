#include "lesion/bayes_seg.hpp"
#include "lesion/dataset.hpp"
#include "lesion/error.hpp"
#include "lesion/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lesion;

namespace {

struct Args {
    PipelineConfig cfg;
    std::string prior = "estimated";
    std::string subset = "all";
    std::string images, masks, labels, features, pred, truth, out, out_prefix;
    std::string tissue_model, threshold_model, model, confusion, mode = "odd-even";
    bool posteriors = false;
    bool overlays = false;
};

void add_global(CLI::App& app, Args& a) {
    app.add_option("--seed", a.cfg.seed, "random seed")->capture_default_str();
    app.add_option("--threads", a.cfg.threads, "worker threads")->capture_default_str();
    app.add_option("--max-side", a.cfg.max_side, "working resolution (longest side, >= 16)")
        ->capture_default_str();
}

void add_subset(CLI::App* sub, Args& a) {
    sub->add_option("--subset", a.subset, "all, odd (training half) or even")
        ->check(CLI::IsMember({"all", "odd", "even"}))
        ->capture_default_str();
}

void add_seg_params(CLI::App* sub, Args& a) {
    auto& c = a.cfg;
    sub->add_option("--prior", a.prior, "'estimated' or a fixed P(lesion) in (0,1)")->capture_default_str();
    sub->add_option("--components", c.tissue.em.n_components, "mixture components per class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--em-max-iters", c.tissue.em.max_iters)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--samples-per-class", c.tissue.samples_per_class, "pixels sampled per image and class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--svr-c", c.svr.c)->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--svr-epsilon", c.svr.epsilon)->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--svr-gamma", c.svr.gamma, "RBF gamma, <= 0 for the scale heuristic")->capture_default_str();
}

void add_cls_params(CLI::App* sub, Args& a) {
    auto& c = a.cfg;
    sub->add_option("--c", c.cls.c, "SVM box constraint")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--gamma", c.cls.gamma, "RBF gamma, <= 0 for the scale heuristic")->capture_default_str();
    sub->add_option("--calibration-folds", c.cls.calibration_folds)->check(CLI::PositiveNumber)->capture_default_str();
}

Subset parse_subset(const std::string& s) {
    if (s == "odd") return Subset::odd;
    if (s == "even") return Subset::even;
    return Subset::all;
}

void finish_config(Args& a) {
    if (a.prior == "estimated") {
        a.cfg.tissue.prior.reset();
    } else {
        try {
            std::size_t used = 0;
            a.cfg.tissue.prior = std::stod(a.prior, &used);
            if (used != a.prior.size()) throw std::invalid_argument("trailing text");
        } catch (const std::exception&) {
            throw UsageError("--prior must be 'estimated' or a number");
        }
    }
    a.cfg.propagate();
}

std::optional<fs::path> opt_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

// Flat `key = value` lines ('#' comments). Keys are flag names without the
// leading dashes. Values are appended as arguments unless the flag already
// appears on the command line.
std::vector<std::string> config_args(const fs::path& path, const std::vector<std::string>& argv,
                                     const CLI::App& app, const CLI::App* sub) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read config file " + path.string());
    std::set<std::string> given;
    for (const auto& arg : argv) {
        if (arg.rfind("--", 0) == 0) given.insert(arg.substr(2, arg.find('=') - 2));
    }
    std::vector<std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + " is not key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (given.count(key)) continue;
        const CLI::Option* opt = app.get_option_no_throw("--" + key);
        if (!opt && sub) opt = sub->get_option_no_throw("--" + key);
        if (!opt) {
            bool known = false;
            for (const CLI::App* s : app.get_subcommands({})) known = known || s->get_option_no_throw("--" + key);
            if (!known) throw UsageError("unknown config key '" + key + "'");
            continue;  // belongs to another verb
        }
        if (opt->get_expected_min() == 0) {
            if (value == "true" || value == "1") out.push_back("--" + key);
            continue;
        }
        out.push_back("--" + key);
        out.push_back(value);
    }
    return out;
}

int run(int argc, char** argv) {
    Args a;
    CLI::App app{"Dermoscopic lesion segmentation and diagnosis", "lesion"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "flat key = value file; flags override it");
    add_global(app, a);

    auto* train_seg = app.add_subcommand("train-seg", "fit color mixtures and the threshold regressor");
    train_seg->add_option("--images", a.images)->required();
    train_seg->add_option("--masks", a.masks)->required();
    train_seg->add_option("--tissue-model", a.tissue_model, "output path")->required();
    train_seg->add_option("--threshold-model", a.threshold_model, "output path")->required();
    add_subset(train_seg, a);
    add_seg_params(train_seg, a);

    auto* segment = app.add_subcommand("segment", "predict lesion masks");
    segment->add_option("--images", a.images)->required();
    segment->add_option("--masks", a.masks, "truth masks (for overlays)");
    segment->add_option("--tissue-model", a.tissue_model)->required();
    segment->add_option("--threshold-model", a.threshold_model)->required();
    segment->add_option("--out", a.out, "output directory")->required();
    segment->add_flag("--posteriors", a.posteriors, "also write posterior maps");
    segment->add_flag("--overlays", a.overlays, "also write contour overlays (needs --masks)");
    add_subset(segment, a);

    auto* eval_seg = app.add_subcommand("eval-seg", "score predicted masks against truth");
    eval_seg->add_option("--pred", a.pred)->required();
    eval_seg->add_option("--truth", a.truth)->required();
    eval_seg->add_option("--out-prefix", a.out_prefix)->required();

    auto* extract = app.add_subcommand("extract-features", "write the 200-feature table");
    extract->add_option("--images", a.images)->required();
    auto* truth_opt = extract->add_option("--masks", a.masks, "truth masks");
    auto* pred_opt = extract->add_option("--pred-masks", a.pred, "predicted masks");
    truth_opt->excludes(pred_opt);
    extract->add_option("--out", a.out)->required();
    add_subset(extract, a);

    auto* train_cls = app.add_subcommand("train-cls", "fit the diagnosis classifier");
    train_cls->add_option("--features", a.features)->required();
    train_cls->add_option("--labels", a.labels)->required();
    train_cls->add_option("--model", a.model, "output path")->required();
    add_cls_params(train_cls, a);

    auto* classify = app.add_subcommand("classify", "score feature rows");
    classify->add_option("--model", a.model)->required();
    classify->add_option("--features", a.features)->required();
    classify->add_option("--out", a.out)->required();

    auto* crossval = app.add_subcommand("crossval", "stratified k-fold evaluation");
    crossval->add_option("--images", a.images);
    crossval->add_option("--masks", a.masks);
    crossval->add_option("--labels", a.labels)->required();
    crossval->add_option("--features", a.features, "precomputed features; skips segmentation");
    crossval->add_option("--folds", a.cfg.folds)->capture_default_str();
    crossval->add_flag("--reuse-seg-models", a.cfg.reuse_seg_models,
                       "train one segmenter on all images instead of per fold");
    crossval->add_option("--out", a.out, "output directory")->required();
    add_seg_params(crossval, a);
    add_cls_params(crossval, a);

    auto* metrics = app.add_subcommand("metrics", "derive per-class metrics from a confusion matrix");
    metrics->add_option("--confusion", a.confusion)->required();
    metrics->add_option("--out", a.out)->required();

    auto* split = app.add_subcommand("split", "list an odd/even or k-fold partition");
    split->add_option("--images", a.images)->required();
    split->add_option("--labels", a.labels, "needed for kfold");
    split->add_option("--mode", a.mode)->check(CLI::IsMember({"odd-even", "kfold"}))->capture_default_str();
    split->add_option("--folds", a.cfg.folds)->capture_default_str();
    split->add_option("--out", a.out, "output file (default stdout)");

    for (CLI::App* sub : app.get_subcommands({})) add_global(*sub, a);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        std::string probe_config;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) probe_config = args[i + 1];
            if (args[i].rfind("--config=", 0) == 0) probe_config = args[i].substr(9);
        }
        if (!probe_config.empty()) {
            const CLI::App* chosen = nullptr;
            for (const auto& s : args) {
                for (const CLI::App* sub : app.get_subcommands({})) {
                    if (sub->get_name() == s) chosen = sub;
                }
                if (chosen) break;
            }
            const auto extra = config_args(probe_config, args, app, chosen);
            args.insert(args.end(), extra.begin(), extra.end());
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    finish_config(a);
    const Subset subset = parse_subset(a.subset);

    if (train_seg->parsed()) {
        const DatasetIndex idx = select_subset(ingest(a.images, fs::path(a.masks)), subset);
        cmd_train_seg(idx, a.cfg, a.tissue_model, a.threshold_model);
        std::cerr << "trained on " << idx.size() << " images\n";
    } else if (segment->parsed()) {
        if (a.overlays && a.masks.empty()) throw UsageError("--overlays needs --masks");
        const SegmentationModels models = load_segmentation_models(a.tissue_model, a.threshold_model);
        const DatasetIndex idx = select_subset(ingest(a.images, opt_path(a.masks)), subset);
        const CommandStatus st = cmd_segment(models, idx, a.out, {a.posteriors, a.overlays}, a.cfg, std::cerr);
        std::cerr << "segmented " << st.processed << " images, " << st.failures.size() << " failed\n";
        if (!st.failures.empty()) return 3;
    } else if (eval_seg->parsed()) {
        std::cout << cmd_eval_seg(a.pred, a.truth, a.out_prefix, a.cfg) << '\n';
    } else if (extract->parsed()) {
        if (a.masks.empty() && a.pred.empty()) throw UsageError("give --masks or --pred-masks");
        const DatasetIndex idx = select_subset(ingest(a.images, opt_path(a.masks)), subset);
        cmd_extract(idx, opt_path(a.pred), a.out, a.cfg);
    } else if (train_cls->parsed()) {
        cmd_train_cls(a.features, a.labels, a.model, a.cfg);
    } else if (classify->parsed()) {
        cmd_classify(a.model, a.features, a.out, a.cfg);
    } else if (crossval->parsed()) {
        CrossvalResult r;
        if (!a.features.empty()) {
            r = crossval_features(join_labels(read_features_csv(a.features), read_labels_csv(a.labels)), a.cfg,
                                  std::cerr);
        } else {
            if (a.images.empty() || a.masks.empty()) throw UsageError("crossval needs --features or --images and --masks");
            r = crossval_images(ingest(a.images, fs::path(a.masks), fs::path(a.labels)), a.cfg, std::cerr);
        }
        write_crossval_outputs(r, a.out);
        std::cout << "class-averaged recall " << r.metrics.class_averaged_recall << '\n';
    } else if (metrics->parsed()) {
        cmd_metrics(a.confusion, a.out);
    } else if (split->parsed()) {
        const DatasetIndex idx = ingest(a.images, std::nullopt, opt_path(a.labels));
        const SplitMode mode = a.mode == "kfold" ? SplitMode::kfold : SplitMode::odd_even;
        if (a.out.empty()) {
            cmd_split(idx, mode, a.cfg, std::cout);
        } else {
            std::ofstream os(a.out, std::ios::binary);
            if (!os) throw DataError("cannot write " + a.out);
            cmd_split(idx, mode, a.cfg, os);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
