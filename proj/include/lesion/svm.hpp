#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lesion {

using Sample = std::vector<double>;
using Samples = std::vector<Sample>;

struct Kernel {
    enum class Kind { linear, rbf };
    Kind kind = Kind::rbf;
    double gamma = 1.0;

    static Kernel linear() { return {Kind::linear, 0.0}; }
    static Kernel rbf(double gamma);

    double operator()(std::span<const double> a, std::span<const double> b) const;

    bool operator==(const Kernel&) const = default;
};

/// "scale" heuristic: 1 / (d * Var(X)) over all entries of X.
double scale_gamma(const Samples& x);

/// Per-dimension z-score. Dimensions with std < 1e-12 use std = 1.
struct Scaler {
    std::vector<double> means;
    std::vector<double> stds;

    Sample apply(std::span<const double> x) const;
    Samples apply(const Samples& xs) const;
    std::size_t dim() const { return means.size(); }

    bool operator==(const Scaler&) const = default;
};

Scaler fit_scaler(const Samples& data);

struct SmoConfig {
    /// Maximal-violating-pair gap at which the dual is accepted.
    double tol = 1e-3;
    long max_iter = 100000;
    /// Kernel row cache budget.
    std::size_t cache_bytes = std::size_t{256} << 20;
};

/// Support vector expansion f(x) = sum_i coef_i K(sv_i, x) + bias.
struct KernelExpansion {
    Samples support_vectors;
    std::vector<double> dual_coefs;
    double bias = 0.0;
    Kernel kernel;

    double evaluate(std::span<const double> x) const;
    std::size_t dim() const { return support_vectors.empty() ? 0 : support_vectors.front().size(); }

    bool operator==(const KernelExpansion&) const = default;
};

/// Soft-margin binary classifier; dual_coefs hold alpha_i * y_i.
struct SvcBinary {
    KernelExpansion expansion;
    double c_pos = 1.0;
    double c_neg = 1.0;
    /// Dimension of the training data (kept for models with no support vectors).
    std::size_t input_dim = 0;
    long iterations = 0;
    bool converged = true;

    bool operator==(const SvcBinary& o) const {
        return expansion == o.expansion && c_pos == o.c_pos && c_neg == o.c_neg &&
               input_dim == o.input_dim;
    }
};

/// epsilon-insensitive regressor; dual_coefs hold alpha_i - alpha_i^*.
struct SvrModel {
    KernelExpansion expansion;
    double c = 1.0;
    double epsilon = 0.0;
    std::size_t input_dim = 0;
    long iterations = 0;
    bool converged = true;

    bool operator==(const SvrModel& o) const {
        return expansion == o.expansion && c == o.c && epsilon == o.epsilon &&
               input_dim == o.input_dim;
    }
};

struct ClassWeights {
    double positive = 1.0;
    double negative = 1.0;
};

/// Labels must be +1/-1 with both present (DataError "degenerate labels").
/// Box constraints are C * weights.positive and C * weights.negative.
SvcBinary svc_fit(const Samples& x, std::span<const int> y, const Kernel& kernel, double c,
                  ClassWeights weights = {}, const SmoConfig& smo = {});

double svc_decision(const SvcBinary& model, std::span<const double> x);

SvrModel svr_fit(const Samples& x, std::span<const double> y, const Kernel& kernel, double c,
                 double epsilon, const SmoConfig& smo = {});

double svr_predict(const SvrModel& model, std::span<const double> x);

/// Sigmoid P(y = 1 | d) = 1 / (1 + exp(a * d + b)).
struct PlattSigmoid {
    double a = 0.0;
    double b = 0.0;

    double operator()(double decision) const;
    bool operator==(const PlattSigmoid&) const = default;
};

/// Newton fit with regularized targets. Labels are +1/-1 with both present.
/// Throws NumericalError when 100 iterations do not converge.
PlattSigmoid platt_calibrate(std::span<const double> decisions, std::span<const int> labels);

struct MulticlassConfig {
    double c = 10.0;
    /// <= 0 selects scale_gamma on the standardized training data.
    double gamma = 0.0;
    SmoConfig smo;
    int calibration_folds = 3;
    std::uint64_t seed = 42;
    int threads = 1;
};

struct OvrMachine {
    /// False when the class had no training samples; its score is then 0.
    bool trained = false;
    SvcBinary svc;
    PlattSigmoid platt;

    bool operator==(const OvrMachine&) const = default;
};

/// One-vs-rest classifier over a fixed, ordered class list.
struct SvcMulticlass {
    std::vector<std::string> classes;
    std::vector<OvrMachine> machines;
    Scaler scaler;
    Kernel kernel;

    bool operator==(const SvcMulticlass&) const = default;
};

struct MulticlassPrediction {
    int label = 0;
    /// Calibrated scores normalized to sum 1, in class order.
    std::vector<double> scores;
};

/// labels[i] indexes into `classes`. Needs at least two distinct classes.
/// Machine k uses weights w+ = N / (2 N+) and w- = N / (2 N-) and is
/// Platt-calibrated on out-of-fold decisions.
SvcMulticlass multiclass_fit(const Samples& x, std::span<const int> labels,
                             std::vector<std::string> classes, const MulticlassConfig& cfg = {});

MulticlassPrediction multiclass_predict(const SvcMulticlass& model, std::span<const double> x);

}  // namespace lesion
