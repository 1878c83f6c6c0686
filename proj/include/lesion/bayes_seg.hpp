#pragma once

#include "lesion/gmm.hpp"
#include "lesion/raster.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace lesion {

/// Class-conditional color densities for lesion and skin plus class priors.
struct TissueColorModel {
    Gmm lesion_gmm;
    Gmm skin_gmm;
    double prior_lesion = 0.5;
    double prior_skin = 0.5;

    bool operator==(const TissueColorModel&) const = default;
};

/// Prior handling: nullopt estimates P(lesion) from pooled truth-pixel
/// fractions, a value fixes it.
using PriorMode = std::optional<double>;

struct TissueTrainingConfig {
    EmConfig em;
    PriorMode prior;
    /// Per-image, per-class pixel subsample fed to EM.
    std::size_t samples_per_class = 2000;
};

/// Fit the lesion GMM on mask==1 pixels and the skin GMM on mask==0 pixels,
/// pooled across all images. Images lacking one class contribute only to the
/// other. Throws DataError("class has no pixels") when a pooled class is empty.
TissueColorModel train_tissue_model(const std::vector<RgbImage>& images,
                                    const std::vector<BinaryMask>& truth_masks,
                                    const TissueTrainingConfig& cfg);

/// Training pixels drawn from one image; lets callers stream images through
/// sampling instead of holding them all in memory.
struct TissuePixelSample {
    std::vector<Vec3> lesion;
    std::vector<Vec3> skin;
    std::size_t lesion_count = 0;  // full truth-mask counts, before subsampling
    std::size_t total_count = 0;
};

/// Subsample one image; `image_index` keys the per-image sampling seed.
TissuePixelSample sample_tissue_pixels(const RgbImage& img, const BinaryMask& truth,
                                       std::size_t image_index, const TissueTrainingConfig& cfg);

/// Pools the samples in order and fits both GMMs and the prior.
TissueColorModel fit_tissue_model(const std::vector<TissuePixelSample>& samples,
                                  const TissueTrainingConfig& cfg);

enum class Tissue { lesion, skin };

/// Per-pixel P(tissue | color) via Bayes rule, evaluated in log space.
ScalarMap posterior_map(const TissueColorModel& model, const RgbImage& img,
                        Tissue which = Tissue::lesion);

/// P(lesion | x) from the two class log-likelihoods and priors.
double lesion_posterior(double log_lik_lesion, double log_lik_skin, double prior_lesion,
                        double prior_skin);

}  // namespace lesion
