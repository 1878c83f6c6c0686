#include "lesion/gmm.hpp"

#include "lesion/error.hpp"
#include "lesion/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace lesion {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(std::span<const double> v) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : v) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

double squared_distance(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

bool lex_less(const Vec3& a, const Vec3& b) {
    if (a[0] != b[0]) return a[0] < b[0];
    if (a[1] != b[1]) return a[1] < b[1];
    return a[2] < b[2];
}

std::size_t count_distinct(std::span<const Vec3> data) {
    std::vector<Vec3> sorted(data.begin(), data.end());
    std::sort(sorted.begin(), sorted.end(), lex_less);
    auto last = std::unique(sorted.begin(), sorted.end(),
                            [](const Vec3& a, const Vec3& b) { return a == b; });
    return static_cast<std::size_t>(last - sorted.begin());
}

Mat3 regularize(Mat3 cov, const EmConfig& cfg) {
    cov = (0.5 * (cov + cov.transpose())).eval();
    cov.diagonal().array() += cfg.cov_regularizer * cov.trace() / 3.0;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();
    if (ev.minCoeff() < cfg.min_eigenvalue) {
        const Vec3 clamped = ev.cwiseMax(cfg.min_eigenvalue);
        cov = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
        cov = (0.5 * (cov + cov.transpose())).eval();
    }
    return cov;
}

std::vector<Vec3> kmeans_pp(std::span<const Vec3> data, int k, int lloyd_iters, Rng& rng) {
    const std::size_t n = data.size();
    std::vector<Vec3> centers;
    centers.push_back(data[rng.index(n)]);

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(data[i], centers[0]);

    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        const double target = rng.uniform() * total;
        std::size_t pick = n - 1;
        double running = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            running += d2[i];
            if (d2[i] > 0.0 && running > target) {
                pick = i;
                break;
            }
        }
        // Guard against landing on an existing center through rounding.
        if (d2[pick] == 0.0) {
            pick = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
        }
        centers.push_back(data[pick]);
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(data[i], centers.back()));
        }
    }

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < lloyd_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(data[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(data[i], centers[static_cast<std::size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
        std::vector<Vec3> sums(static_cast<std::size_t>(k), Vec3::Zero());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[static_cast<std::size_t>(assign[i])] += data[i];
            ++counts[static_cast<std::size_t>(assign[i])];
        }
        for (int c = 0; c < k; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            if (counts[cu] > 0) centers[cu] = sums[cu] / static_cast<double>(counts[cu]);
        }
    }
    return centers;
}

}  // namespace

Gmm::Gmm(std::vector<GaussianComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("Gmm: no components");
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.weight > 0.0)) throw std::invalid_argument("Gmm: component weight must be > 0");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("Gmm: weights must sum to 1");

    factors_.reserve(components_.size());
    for (const auto& c : components_) {
        Factor f;
        const Mat3& s = c.covariance;
        const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
        Eigen::LLT<Mat3> llt(s);
        if (!s.allFinite() || asym > 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff()) ||
            llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)) {
            degenerate_ = true;
            factors_.push_back(f);
            continue;
        }
        const Mat3 lower = llt.matrixL();
        f.inv_chol = lower.triangularView<Eigen::Lower>().solve(Mat3::Identity());
        const double log_det = 2.0 * lower.diagonal().array().log().sum();
        f.log_norm = std::log(c.weight) - 1.5 * kLog2Pi - 0.5 * log_det;
        factors_.push_back(f);
    }
}

void Gmm::require_valid() const {
    if (components_.empty()) throw std::invalid_argument("Gmm: empty model");
    if (degenerate_) throw NumericalError("Gmm: degenerate component (covariance not SPD)");
}

void Gmm::component_log_densities(const Vec3& x, std::span<double> out) const {
    require_valid();
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const Vec3 z = factors_[k].inv_chol * (x - components_[k].mean);
        out[k] = factors_[k].log_norm - 0.5 * z.squaredNorm();
    }
}

double Gmm::log_pdf(const Vec3& x) const {
    if (!x.allFinite()) throw std::invalid_argument("Gmm::log_pdf: non-finite input");
    std::array<double, 16> small{};
    std::vector<double> large;
    std::span<double> buf;
    if (components_.size() <= small.size()) {
        buf = std::span<double>(small.data(), components_.size());
    } else {
        large.resize(components_.size());
        buf = large;
    }
    component_log_densities(x, buf);
    return log_sum_exp(buf);
}

std::vector<double> Gmm::responsibilities(const Vec3& x) const {
    if (!x.allFinite()) throw std::invalid_argument("Gmm::responsibilities: non-finite input");
    std::vector<double> r(components_.size());
    component_log_densities(x, r);
    const double lse = log_sum_exp(r);
    if (!std::isfinite(lse)) throw NumericalError("Gmm::responsibilities: numerical failure");
    double total = 0.0;
    for (double& v : r) {
        v = std::exp(v - lse);
        total += v;
    }
    for (double& v : r) v /= total;
    return r;
}

bool Gmm::operator==(const Gmm& o) const {
    if (components_.size() != o.components_.size()) return false;
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& a = components_[k];
        const auto& b = o.components_[k];
        if (a.weight != b.weight || a.mean != b.mean || a.covariance != b.covariance) return false;
    }
    return true;
}

EmResult fit_em_detailed(std::span<const Vec3> data, const EmConfig& cfg) {
    if (cfg.n_components < 1) throw std::invalid_argument("fit_em: n_components must be >= 1");
    if (!(cfg.rel_tol > 0.0)) throw std::invalid_argument("fit_em: rel_tol must be > 0");
    if (cfg.cov_regularizer < 0.0) throw std::invalid_argument("fit_em: cov_regularizer must be >= 0");
    const auto k = static_cast<std::size_t>(cfg.n_components);
    const std::size_t n = data.size();
    for (const Vec3& x : data) {
        if (!x.allFinite()) throw std::invalid_argument("fit_em: non-finite data");
    }
    if (n < k || count_distinct(data) < k) {
        throw DataError("fit_em: insufficient data (fewer distinct points than components)");
    }

    Rng rng(cfg.seed);
    const std::vector<Vec3> centers = kmeans_pp(data, cfg.n_components, cfg.kmeans_iters, rng);

    Vec3 global_mean = Vec3::Zero();
    for (const Vec3& x : data) global_mean += x;
    global_mean /= static_cast<double>(n);
    Mat3 global_cov = Mat3::Zero();
    for (const Vec3& x : data) {
        const Vec3 d = x - global_mean;
        global_cov += d * d.transpose();
    }
    global_cov /= static_cast<double>(n);
    const Mat3 init_cov = regularize(global_cov, cfg);

    std::vector<GaussianComponent> comps(k);
    for (std::size_t c = 0; c < k; ++c) {
        comps[c].weight = 1.0 / static_cast<double>(k);
        comps[c].mean = centers[c];
        comps[c].covariance = init_cov;
    }

    EmResult result;
    std::vector<double> resp(n * k);
    std::vector<double> row(k);
    double previous = 0.0;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        Gmm model(comps);

        // E-step
        double total_ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            model.component_log_densities(data[i], row);
            const double lse = log_sum_exp(row);
            total_ll += lse;
            for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(row[c] - lse);
        }
        const double mean_ll = total_ll / static_cast<double>(n);
        if (!std::isfinite(mean_ll)) throw NumericalError("fit_em: numerical failure (non-finite likelihood)");
        result.mean_log_likelihood.push_back(mean_ll);

        if (iter > 0 && (mean_ll - previous) < cfg.rel_tol * std::max(std::abs(previous), 1e-12)) {
            result.model = std::move(model);
            result.converged = true;
            return result;
        }
        previous = mean_ll;

        // M-step
        std::vector<double> nk(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < k; ++c) nk[c] += resp[i * k + c];
        }
        const double min_mass = 1e-12 * static_cast<double>(n);
        for (std::size_t c = 0; c < k; ++c) {
            if (nk[c] < min_mass) continue;  // collapsed: keep previous mean and covariance
            Vec3 mean = Vec3::Zero();
            for (std::size_t i = 0; i < n; ++i) mean += resp[i * k + c] * data[i];
            mean /= nk[c];
            Mat3 cov = Mat3::Zero();
            for (std::size_t i = 0; i < n; ++i) {
                const Vec3 d = data[i] - mean;
                cov += resp[i * k + c] * (d * d.transpose());
            }
            cov /= nk[c];
            comps[c].mean = mean;
            comps[c].covariance = regularize(cov, cfg);
        }
        double wsum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            comps[c].weight = std::max(nk[c] / static_cast<double>(n), 1e-12);
            wsum += comps[c].weight;
        }
        for (auto& c : comps) c.weight /= wsum;
        result.iterations = iter + 1;
    }

    result.model = Gmm(comps);
    return result;
}

Gmm fit_em(std::span<const Vec3> data, const EmConfig& cfg) {
    return fit_em_detailed(data, cfg).model;
}

}  // namespace lesion
