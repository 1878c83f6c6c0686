#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace lesion {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct GaussianComponent {
    double weight = 1.0;
    Vec3 mean = Vec3::Zero();
    Mat3 covariance = Mat3::Identity();
};

/// Full-covariance Gaussian mixture over 3-D color vectors.
///
/// Construction validates the weights (positive, summing to 1 within 1e-9) and
/// factors every covariance once. A component whose covariance is not
/// symmetric positive definite is kept, but any density evaluation on the
/// model then throws NumericalError("degenerate component").
class Gmm {
public:
    Gmm() = default;
    explicit Gmm(std::vector<GaussianComponent> components);

    const std::vector<GaussianComponent>& components() const { return components_; }
    std::size_t size() const { return components_.size(); }

    /// log sum_k w_k N(x; mu_k, Sigma_k), via log-sum-exp.
    double log_pdf(const Vec3& x) const;

    /// Posterior component memberships for x; sums to 1.
    std::vector<double> responsibilities(const Vec3& x) const;

    /// Per-component log(w_k) + log N(x; mu_k, Sigma_k) written into `out`.
    void component_log_densities(const Vec3& x, std::span<double> out) const;

    bool operator==(const Gmm& o) const;

private:
    struct Factor {
        Mat3 inv_chol;  // L^{-1} with Sigma = L L^T
        double log_norm = 0.0;  // log w - 1.5 log(2 pi) - 0.5 log det Sigma
    };

    void require_valid() const;

    std::vector<GaussianComponent> components_;
    std::vector<Factor> factors_;
    bool degenerate_ = false;
};

struct EmConfig {
    int n_components = 5;
    int max_iters = 200;
    double rel_tol = 1e-6;
    double cov_regularizer = 1e-6;
    /// Eigenvalue floor applied after the ridge; only active for collapsed
    /// components (a cluster sitting on one quantized color).
    double min_eigenvalue = 1e-9;
    std::uint64_t seed = 42;
    int kmeans_iters = 10;
};

struct EmResult {
    Gmm model;
    /// Mean log-likelihood of the data under the model entering each E-step.
    std::vector<double> mean_log_likelihood;
    int iterations = 0;
    bool converged = false;
};

/// EM for a full-covariance mixture. k-means++ seeding plus Lloyd refinement
/// fixes the initial means, covariances start at the regularized sample
/// covariance and weights are uniform. After every M-step each covariance
/// receives a ridge of cov_regularizer * trace(Sigma) / 3 on its diagonal.
///
/// Throws DataError("insufficient data") when there are fewer distinct points
/// than components and NumericalError("numerical failure") on a non-finite
/// likelihood.
EmResult fit_em_detailed(std::span<const Vec3> data, const EmConfig& cfg);

Gmm fit_em(std::span<const Vec3> data, const EmConfig& cfg);

}  // namespace lesion
