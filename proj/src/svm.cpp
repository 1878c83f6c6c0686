#include "lesion/svm.hpp"

#include "lesion/error.hpp"
#include "lesion/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>
#include <numeric>
#include <thread>

namespace lesion {

namespace {

constexpr double kTau = 1e-12;

void require_rectangular(const Samples& x, const char* who) {
    if (x.empty()) throw std::invalid_argument(std::string(who) + ": no samples");
    const std::size_t d = x.front().size();
    for (const Sample& s : x) {
        if (s.size() != d) throw std::invalid_argument(std::string(who) + ": ragged sample matrix");
        for (double v : s) {
            if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite feature");
        }
    }
}

// LRU cache of kernel rows K(i, .) over the base sample set.
class KernelRows {
public:
    KernelRows(const Samples& x, const Kernel& kernel, std::size_t cache_bytes)
        : x_(x), kernel_(kernel), slot_of_(x.size(), -1) {
        const std::size_t row_bytes = std::max<std::size_t>(1, x.size() * sizeof(double));
        capacity_ = std::max<std::size_t>(2, cache_bytes / row_bytes);
        capacity_ = std::min(capacity_, x.size());
        diag_.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) diag_[i] = kernel_(x_[i], x_[i]);
    }

    double diag(std::size_t i) const { return diag_[i]; }

    const double* row(std::size_t i) {
        if (slot_of_[i] >= 0) {
            auto& slot = slots_[static_cast<std::size_t>(slot_of_[i])];
            lru_.splice(lru_.begin(), lru_, slot.pos);
            return slot.values.data();
        }
        std::size_t s;
        if (slots_.size() < capacity_) {
            s = slots_.size();
            slots_.push_back({});
            slots_[s].values.resize(x_.size());
            lru_.push_front(s);
            slots_[s].pos = lru_.begin();
        } else {
            s = lru_.back();
            slot_of_[slots_[s].owner] = -1;
            lru_.splice(lru_.begin(), lru_, slots_[s].pos);
        }
        Slot& slot = slots_[s];
        slot.owner = i;
        slot_of_[i] = static_cast<long>(s);
        for (std::size_t j = 0; j < x_.size(); ++j) slot.values[j] = kernel_(x_[i], x_[j]);
        return slot.values.data();
    }

private:
    struct Slot {
        std::vector<double> values;
        std::size_t owner = 0;
        std::list<std::size_t>::iterator pos;
    };

    const Samples& x_;
    Kernel kernel_;
    std::size_t capacity_ = 2;
    std::vector<double> diag_;
    std::vector<long> slot_of_;
    std::vector<Slot> slots_;
    std::list<std::size_t> lru_;
};

// min 0.5 a'Qa + p'a  s.t.  y'a = 0, 0 <= a_t <= c_t,
// with Q_st = y_s y_t K(base_s, base_t).
struct DualProblem {
    std::vector<std::size_t> base;
    std::vector<int> y;
    std::vector<double> p;
    std::vector<double> cbox;
};

struct DualSolution {
    std::vector<double> alpha;
    double rho = 0.0;
    long iterations = 0;
    bool converged = false;
};

DualSolution solve_dual(const DualProblem& prob, KernelRows& rows, const SmoConfig& cfg) {
    const std::size_t l = prob.y.size();
    DualSolution sol;
    sol.alpha.assign(l, 0.0);
    std::vector<double> grad = prob.p;
    std::vector<double>& alpha = sol.alpha;

    auto at_upper = [&](std::size_t t) { return alpha[t] >= prob.cbox[t]; };
    auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    for (;;) {
        // Maximal violating pair.
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::size_t i = l;
        std::size_t j = l;
        for (std::size_t t = 0; t < l; ++t) {
            if (prob.y[t] == 1) {
                if (!at_upper(t) && -grad[t] > gmax) {
                    gmax = -grad[t];
                    i = t;
                }
                if (!at_lower(t) && grad[t] > gmax2) {
                    gmax2 = grad[t];
                    j = t;
                }
            } else {
                if (!at_lower(t) && grad[t] > gmax) {
                    gmax = grad[t];
                    i = t;
                }
                if (!at_upper(t) && -grad[t] > gmax2) {
                    gmax2 = -grad[t];
                    j = t;
                }
            }
        }
        if (i == l || j == l || gmax + gmax2 < cfg.tol) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= cfg.max_iter) break;
        ++sol.iterations;

        const std::size_t bi = prob.base[i];
        const std::size_t bj = prob.base[j];
        const double* ki = rows.row(bi);
        const double* kj = rows.row(bj);
        const double yi = prob.y[i];
        const double yj = prob.y[j];
        const double qij = yi * yj * ki[bj];
        const double qii = rows.diag(bi);
        const double qjj = rows.diag(bj);
        const double ci = prob.cbox[i];
        const double cj = prob.cbox[j];
        const double old_i = alpha[i];
        const double old_j = alpha[j];

        if (prob.y[i] != prob.y[j]) {
            double quad = qii + qjj + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > ci - cj) {
                if (alpha[i] > ci) {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if (alpha[j] > cj) {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            double quad = qii + qjj - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > ci) {
                if (alpha[i] > ci) {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > cj) {
                if (alpha[j] > cj) {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < l; ++t) {
            const std::size_t b = prob.base[t];
            grad[t] += prob.y[t] * (yi * ki[b] * di + yj * kj[b] * dj);
        }
    }

    // Bias from free variables, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < l; ++t) {
        const double yg = prob.y[t] * grad[t];
        if (at_upper(t)) {
            if (prob.y[t] == -1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (at_lower(t)) {
            if (prob.y[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    return sol;
}

}  // namespace

Kernel Kernel::rbf(double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("Kernel::rbf: gamma must be > 0");
    return {Kind::rbf, gamma};
}

double Kernel::operator()(std::span<const double> a, std::span<const double> b) const {
    if (kind == Kind::linear) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
        return dot;
    }
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

double scale_gamma(const Samples& x) {
    require_rectangular(x, "scale_gamma");
    const std::size_t d = x.front().size();
    double sum = 0.0;
    double sum2 = 0.0;
    for (const Sample& s : x) {
        for (double v : s) sum += v;
    }
    const double count = static_cast<double>(x.size() * d);
    const double mean = sum / count;
    for (const Sample& s : x) {
        for (double v : s) sum2 += (v - mean) * (v - mean);
    }
    const double var = sum2 / count;
    if (!(var > 0.0) || d == 0) return 1.0;
    return 1.0 / (static_cast<double>(d) * var);
}

Scaler fit_scaler(const Samples& data) {
    require_rectangular(data, "fit_scaler");
    const std::size_t d = data.front().size();
    const double n = static_cast<double>(data.size());
    Scaler s;
    s.means.assign(d, 0.0);
    s.stds.assign(d, 0.0);
    for (const Sample& row : data) {
        for (std::size_t k = 0; k < d; ++k) s.means[k] += row[k];
    }
    for (double& m : s.means) m /= n;
    for (const Sample& row : data) {
        for (std::size_t k = 0; k < d; ++k) {
            const double dv = row[k] - s.means[k];
            s.stds[k] += dv * dv;
        }
    }
    for (double& v : s.stds) {
        v = std::sqrt(v / n);
        if (v < 1e-12) v = 1.0;
    }
    return s;
}

Sample Scaler::apply(std::span<const double> x) const {
    if (x.size() != means.size()) throw std::invalid_argument("Scaler::apply: dimension mismatch");
    Sample out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - means[k]) / stds[k];
    return out;
}

Samples Scaler::apply(const Samples& xs) const {
    Samples out;
    out.reserve(xs.size());
    for (const Sample& x : xs) out.push_back(apply(x));
    return out;
}

double KernelExpansion::evaluate(std::span<const double> x) const {
    double acc = bias;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) {
        acc += dual_coefs[i] * kernel(support_vectors[i], x);
    }
    return acc;
}

SvcBinary svc_fit(const Samples& x, std::span<const int> y, const Kernel& kernel, double c,
                  ClassWeights weights, const SmoConfig& smo) {
    require_rectangular(x, "svc_fit");
    if (x.size() != y.size()) throw std::invalid_argument("svc_fit: label count mismatch");
    if (x.size() < 2) throw DataError("svc_fit: need at least two samples");
    if (!(c > 0.0) || !(weights.positive > 0.0) || !(weights.negative > 0.0)) {
        throw std::invalid_argument("svc_fit: C and class weights must be > 0");
    }
    bool has_pos = false;
    bool has_neg = false;
    for (int v : y) {
        if (v == 1) has_pos = true;
        else if (v == -1) has_neg = true;
        else throw std::invalid_argument("svc_fit: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw DataError("svc_fit: degenerate labels (single class)");

    const std::size_t n = x.size();
    DualProblem prob;
    prob.base.resize(n);
    std::iota(prob.base.begin(), prob.base.end(), std::size_t{0});
    prob.y.assign(y.begin(), y.end());
    prob.p.assign(n, -1.0);
    prob.cbox.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        prob.cbox[i] = c * (y[i] == 1 ? weights.positive : weights.negative);
    }

    KernelRows rows(x, kernel, smo.cache_bytes);
    const DualSolution sol = solve_dual(prob, rows, smo);

    SvcBinary model;
    model.c_pos = c * weights.positive;
    model.c_neg = c * weights.negative;
    model.input_dim = x.front().size();
    model.iterations = sol.iterations;
    model.converged = sol.converged;
    model.expansion.kernel = kernel;
    model.expansion.bias = -sol.rho;
    for (std::size_t i = 0; i < n; ++i) {
        if (sol.alpha[i] > 0.0) {
            model.expansion.support_vectors.push_back(x[i]);
            model.expansion.dual_coefs.push_back(sol.alpha[i] * y[i]);
        }
    }
    return model;
}

double svc_decision(const SvcBinary& model, std::span<const double> x) {
    if (x.size() != model.input_dim) throw std::invalid_argument("svc_decision: dimension mismatch");
    return model.expansion.evaluate(x);
}

SvrModel svr_fit(const Samples& x, std::span<const double> y, const Kernel& kernel, double c,
                 double epsilon, const SmoConfig& smo) {
    require_rectangular(x, "svr_fit");
    if (x.size() != y.size()) throw std::invalid_argument("svr_fit: target count mismatch");
    if (!(c > 0.0) || epsilon < 0.0) throw std::invalid_argument("svr_fit: need C > 0, epsilon >= 0");
    for (double v : y) {
        if (!std::isfinite(v)) throw std::invalid_argument("svr_fit: non-finite target");
    }

    const std::size_t n = x.size();
    DualProblem prob;
    prob.base.resize(2 * n);
    prob.y.resize(2 * n);
    prob.p.resize(2 * n);
    prob.cbox.assign(2 * n, c);
    for (std::size_t i = 0; i < n; ++i) {
        prob.base[i] = i;
        prob.y[i] = 1;
        prob.p[i] = epsilon - y[i];
        prob.base[i + n] = i;
        prob.y[i + n] = -1;
        prob.p[i + n] = epsilon + y[i];
    }

    KernelRows rows(x, kernel, smo.cache_bytes);
    const DualSolution sol = solve_dual(prob, rows, smo);

    SvrModel model;
    model.c = c;
    model.epsilon = epsilon;
    model.input_dim = x.front().size();
    model.iterations = sol.iterations;
    model.converged = sol.converged;
    model.expansion.kernel = kernel;
    model.expansion.bias = -sol.rho;
    for (std::size_t i = 0; i < n; ++i) {
        const double beta = sol.alpha[i] - sol.alpha[i + n];
        if (beta != 0.0) {
            model.expansion.support_vectors.push_back(x[i]);
            model.expansion.dual_coefs.push_back(beta);
        }
    }
    return model;
}

double svr_predict(const SvrModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim) throw std::invalid_argument("svr_predict: dimension mismatch");
    return model.expansion.evaluate(x);
}

double PlattSigmoid::operator()(double decision) const {
    const double f = a * decision + b;
    // Evaluated on the side that cannot overflow.
    if (f >= 0.0) return std::exp(-f) / (1.0 + std::exp(-f));
    return 1.0 / (1.0 + std::exp(f));
}

PlattSigmoid platt_calibrate(std::span<const double> decisions, std::span<const int> labels) {
    if (decisions.size() != labels.size()) {
        throw std::invalid_argument("platt_calibrate: size mismatch");
    }
    double prior1 = 0.0;
    double prior0 = 0.0;
    for (int v : labels) {
        if (v == 1) prior1 += 1.0;
        else if (v == -1) prior0 += 1.0;
        else throw std::invalid_argument("platt_calibrate: labels must be +1 or -1");
    }
    if (prior1 == 0.0 || prior0 == 0.0) throw DataError("platt_calibrate: degenerate labels");

    constexpr int kMaxIter = 100;
    constexpr double kMinStep = 1e-10;
    constexpr double kSigma = 1e-12;
    constexpr double kEps = 1e-5;
    const double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo_target = 1.0 / (prior0 + 2.0);
    const std::size_t n = decisions.size();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] == 1 ? hi_target : lo_target;

    auto objective = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fa = decisions[i] * a + b;
            f += fa >= 0.0 ? t[i] * fa + std::log1p(std::exp(-fa))
                           : (t[i] - 1.0) * fa + std::log1p(std::exp(fa));
        }
        return f;
    };

    double a = 0.0;
    double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = objective(a, b);

    for (int iter = 0; iter < kMaxIter; ++iter) {
        double h11 = kSigma;
        double h22 = kSigma;
        double h21 = 0.0;
        double g1 = 0.0;
        double g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fa = decisions[i] * a + b;
            double p;
            double q;
            if (fa >= 0.0) {
                p = std::exp(-fa) / (1.0 + std::exp(-fa));
                q = 1.0 / (1.0 + std::exp(-fa));
            } else {
                p = 1.0 / (1.0 + std::exp(fa));
                q = std::exp(fa) / (1.0 + std::exp(fa));
            }
            const double d2 = p * q;
            h11 += decisions[i] * decisions[i] * d2;
            h22 += d2;
            h21 += decisions[i] * d2;
            const double d1 = t[i] - p;
            g1 += decisions[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < kEps && std::abs(g2) < kEps) return {a, b};

        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;

        double step = 1.0;
        bool moved = false;
        while (step >= kMinStep) {
            const double na = a + step * da;
            const double nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 0.0001 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        // No descent possible along the Newton direction: at the optimum to
        // working precision.
        if (!moved) return {a, b};
    }
    throw NumericalError("platt_calibrate: no convergence within 100 iterations");
}

namespace {

// Stratified assignment of binary-labelled samples into `folds` folds.
std::vector<int> binary_folds(std::span<const int> y, int folds, std::uint64_t seed) {
    std::vector<int> fold(y.size(), 0);
    Rng rng(seed);
    int next = 0;
    for (int label : {1, -1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == label) idx.push_back(i);
        }
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.index(i))]);
        }
        for (std::size_t i : idx) {
            fold[i] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

OvrMachine fit_one_vs_rest(const Samples& xs, std::span<const int> labels, int cls,
                           const Kernel& kernel, const MulticlassConfig& cfg) {
    OvrMachine m;
    std::vector<int> y(labels.size());
    double n_pos = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        y[i] = labels[i] == cls ? 1 : -1;
        if (y[i] == 1) n_pos += 1.0;
    }
    if (n_pos == 0.0) return m;
    const double n = static_cast<double>(labels.size());
    const double n_neg = n - n_pos;
    const ClassWeights w{n / (2.0 * n_pos), n / (2.0 * n_neg)};

    m.svc = svc_fit(xs, y, kernel, cfg.c, w, cfg.smo);
    m.trained = true;

    std::vector<double> decisions(xs.size());
    const int k = cfg.calibration_folds;
    if (k >= 2 && n_pos >= k && n_neg >= k) {
        const std::vector<int> fold = binary_folds(y, k, cfg.seed + 7919u * static_cast<std::uint64_t>(cls + 1));
        for (int f = 0; f < k; ++f) {
            Samples train_x;
            std::vector<int> train_y;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (fold[i] != f) {
                    train_x.push_back(xs[i]);
                    train_y.push_back(y[i]);
                }
            }
            const SvcBinary inner = svc_fit(train_x, train_y, kernel, cfg.c, w, cfg.smo);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (fold[i] == f) decisions[i] = svc_decision(inner, xs[i]);
            }
        }
    } else {
        // Too few samples for held-out calibration: in-sample decisions.
        for (std::size_t i = 0; i < xs.size(); ++i) decisions[i] = svc_decision(m.svc, xs[i]);
    }
    m.platt = platt_calibrate(decisions, y);
    return m;
}

}  // namespace

SvcMulticlass multiclass_fit(const Samples& x, std::span<const int> labels,
                             std::vector<std::string> classes, const MulticlassConfig& cfg) {
    require_rectangular(x, "multiclass_fit");
    if (x.size() != labels.size()) throw std::invalid_argument("multiclass_fit: label count mismatch");
    if (classes.size() < 2) throw std::invalid_argument("multiclass_fit: need at least two classes");
    std::vector<std::size_t> counts(classes.size(), 0);
    for (int v : labels) {
        if (v < 0 || static_cast<std::size_t>(v) >= classes.size()) {
            throw std::invalid_argument("multiclass_fit: label index out of range");
        }
        ++counts[static_cast<std::size_t>(v)];
    }
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
        throw DataError("multiclass_fit: fewer than two classes present");
    }

    SvcMulticlass model;
    model.classes = std::move(classes);
    model.scaler = fit_scaler(x);
    const Samples xs = model.scaler.apply(x);
    model.kernel = Kernel::rbf(cfg.gamma > 0.0 ? cfg.gamma : scale_gamma(xs));
    model.machines.resize(model.classes.size());

    const int n_classes = static_cast<int>(model.classes.size());
    const int threads = std::clamp(cfg.threads, 1, n_classes);
    std::vector<std::exception_ptr> errors(model.classes.size());
    auto work = [&](int worker) {
        for (int c = worker; c < n_classes; c += threads) {
            try {
                model.machines[static_cast<std::size_t>(c)] =
                    fit_one_vs_rest(xs, labels, c, model.kernel, cfg);
            } catch (...) {
                errors[static_cast<std::size_t>(c)] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return model;
}

MulticlassPrediction multiclass_predict(const SvcMulticlass& model, std::span<const double> x) {
    if (x.size() != model.scaler.dim()) {
        throw std::invalid_argument("multiclass_predict: feature dimension mismatch");
    }
    const Sample xs = model.scaler.apply(x);
    MulticlassPrediction out;
    out.scores.assign(model.classes.size(), 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < model.machines.size(); ++c) {
        const OvrMachine& m = model.machines[c];
        if (!m.trained) continue;
        out.scores[c] = m.platt(svc_decision(m.svc, xs));
        total += out.scores[c];
    }
    if (total > 0.0) {
        for (double& s : out.scores) s /= total;
    } else {
        std::size_t trained = 0;
        for (const auto& m : model.machines) trained += m.trained ? 1 : 0;
        for (std::size_t c = 0; c < model.machines.size(); ++c) {
            out.scores[c] = model.machines[c].trained ? 1.0 / static_cast<double>(trained) : 0.0;
        }
    }
    out.label = static_cast<int>(std::max_element(out.scores.begin(), out.scores.end()) -
                                 out.scores.begin());
    return out;
}

}  // namespace lesion
