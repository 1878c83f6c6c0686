#include "lesion/bayes_seg.hpp"

#include "lesion/error.hpp"

#include <cmath>
#include <string>

namespace lesion {

namespace {

std::uint64_t sample_seed(std::uint64_t base, std::size_t image, bool lesion) {
    // splitmix64 finalizer over (base, image, class)
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (2 * image + (lesion ? 1 : 0) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::vector<Vec3> to_vec3(const std::vector<Rgb>& px) {
    std::vector<Vec3> out;
    out.reserve(px.size());
    for (const Rgb& p : px) out.emplace_back(p[0], p[1], p[2]);
    return out;
}

}  // namespace

double lesion_posterior(double log_lik_lesion, double log_lik_skin, double prior_lesion,
                        double prior_skin) {
    const double d =
        (log_lik_lesion + std::log(prior_lesion)) - (log_lik_skin + std::log(prior_skin));
    if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
    const double e = std::exp(d);
    return e / (1.0 + e);
}

TissuePixelSample sample_tissue_pixels(const RgbImage& img, const BinaryMask& truth,
                                       std::size_t image_index, const TissueTrainingConfig& cfg) {
    if (img.width() != truth.width() || img.height() != truth.height()) {
        throw std::invalid_argument("sample_tissue_pixels: mask " + std::to_string(image_index) +
                                    " does not match its image dimensions");
    }
    TissuePixelSample out;
    out.lesion_count = truth.count();
    out.total_count = truth.size();
    if (out.lesion_count > 0) {
        out.lesion = to_vec3(sample_pixels(img, truth, true, cfg.samples_per_class,
                                           sample_seed(cfg.em.seed, image_index, true)));
    }
    if (out.lesion_count < out.total_count) {
        out.skin = to_vec3(sample_pixels(img, truth, false, cfg.samples_per_class,
                                         sample_seed(cfg.em.seed, image_index, false)));
    }
    return out;
}

TissueColorModel fit_tissue_model(const std::vector<TissuePixelSample>& samples,
                                  const TissueTrainingConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("fit_tissue_model: no images");
    if (cfg.prior && !(*cfg.prior > 0.0 && *cfg.prior < 1.0)) {
        throw std::invalid_argument("fit_tissue_model: fixed prior must lie in (0,1)");
    }
    std::vector<Vec3> lesion_px;
    std::vector<Vec3> skin_px;
    std::size_t lesion_count = 0;
    std::size_t total_count = 0;
    for (const TissuePixelSample& s : samples) {
        lesion_px.insert(lesion_px.end(), s.lesion.begin(), s.lesion.end());
        skin_px.insert(skin_px.end(), s.skin.begin(), s.skin.end());
        lesion_count += s.lesion_count;
        total_count += s.total_count;
    }
    if (lesion_px.empty()) throw DataError("train_tissue_model: lesion class has no pixels");
    if (skin_px.empty()) throw DataError("train_tissue_model: skin class has no pixels");

    TissueColorModel model;
    model.lesion_gmm = fit_em(lesion_px, cfg.em);
    model.skin_gmm = fit_em(skin_px, cfg.em);
    if (cfg.prior) {
        model.prior_lesion = *cfg.prior;
    } else {
        model.prior_lesion = static_cast<double>(lesion_count) / static_cast<double>(total_count);
    }
    model.prior_skin = 1.0 - model.prior_lesion;
    return model;
}

TissueColorModel train_tissue_model(const std::vector<RgbImage>& images,
                                    const std::vector<BinaryMask>& truth_masks,
                                    const TissueTrainingConfig& cfg) {
    if (images.empty()) throw std::invalid_argument("train_tissue_model: no images");
    if (images.size() != truth_masks.size()) {
        throw std::invalid_argument("train_tissue_model: image and mask counts differ");
    }
    if (cfg.prior && !(*cfg.prior > 0.0 && *cfg.prior < 1.0)) {
        throw std::invalid_argument("train_tissue_model: fixed prior must lie in (0,1)");
    }
    std::vector<TissuePixelSample> samples;
    samples.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        samples.push_back(sample_tissue_pixels(images[i], truth_masks[i], i, cfg));
    }
    return fit_tissue_model(samples, cfg);
}

ScalarMap posterior_map(const TissueColorModel& model, const RgbImage& img, Tissue which) {
    if (!(model.prior_lesion > 0.0 && model.prior_lesion < 1.0) ||
        std::abs(model.prior_lesion + model.prior_skin - 1.0) > 1e-12) {
        throw std::invalid_argument("posterior_map: priors must lie in (0,1) and sum to 1");
    }
    std::vector<double> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const Rgb& p = img[i];
        const Vec3 x(p[0], p[1], p[2]);
        const double ll = model.lesion_gmm.log_pdf(x);
        const double ls = model.skin_gmm.log_pdf(x);
        out[i] = which == Tissue::lesion
                     ? lesion_posterior(ll, ls, model.prior_lesion, model.prior_skin)
                     : lesion_posterior(ls, ll, model.prior_skin, model.prior_lesion);
    }
    return ScalarMap(img.width(), img.height(), std::move(out));
}

}  // namespace lesion
