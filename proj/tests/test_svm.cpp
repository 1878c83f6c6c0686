#include "lesion/error.hpp"
#include "lesion/rng.hpp"
#include "lesion/svm.hpp"

#include "svm_oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

using namespace lesion;
using namespace lesion::testing;

namespace {

void check_svc_feasible(const SvcBinary& m) {
    double sum = 0.0;
    for (double c : m.expansion.dual_coefs) {
        sum += c;
        if (c > 0) CHECK(c <= m.c_pos + 1e-12);
        if (c < 0) CHECK(-c <= m.c_neg + 1e-12);
    }
    CHECK(std::abs(sum) < 1e-6);
}

void check_svr_feasible(const SvrModel& m) {
    double sum = 0.0;
    for (double c : m.expansion.dual_coefs) {
        sum += c;
        CHECK(std::abs(c) <= m.c + 1e-12);
    }
    CHECK(std::abs(sum) < 1e-6);
}

Samples random_points(Rng& rng, std::size_t n, std::size_t d) {
    Samples x(n, Sample(d));
    for (auto& s : x) {
        for (double& v : s) v = rng.normal();
    }
    return x;
}

}  // namespace

TEST_CASE("scaler") {
    const Scaler one = fit_scaler({{3.0, -2.0}});
    CHECK(one.apply(Sample{3.0, -2.0}) == Sample{0.0, 0.0});

    const Samples constant_col{{1.0, 5.0}, {2.0, 5.0}, {3.0, 5.0}};
    const Scaler s = fit_scaler(constant_col);
    CHECK(s.stds[1] == 1.0);
    for (const Sample& r : s.apply(constant_col)) CHECK(r[1] == 0.0);

    Rng rng(1);
    Samples x(200, Sample(4));
    for (auto& r : x) {
        for (std::size_t k = 0; k < 4; ++k) r[k] = rng.normal(k * 3.0, 1.0 + k);
    }
    const Samples z = fit_scaler(x).apply(x);
    for (std::size_t k = 0; k < 4; ++k) {
        double m = 0.0;
        double v = 0.0;
        for (const auto& r : z) m += r[k];
        m /= z.size();
        for (const auto& r : z) v += (r[k] - m) * (r[k] - m);
        v /= z.size();
        CHECK(std::abs(m) < 1e-9);
        CHECK(std::abs(std::sqrt(v) - 1.0) < 1e-9);
    }
    CHECK_THROWS_AS(s.apply(Sample{1.0}), std::invalid_argument);
}

TEST_CASE("svc basics") {
    const Samples x{{-1.0}, {1.0}};
    const std::vector<int> y{-1, 1};
    const SvcBinary m = svc_fit(x, y, Kernel::linear(), 10.0);
    CHECK(svc_decision(m, Sample{-1.0}) < 0);
    CHECK(svc_decision(m, Sample{1.0}) > 0);
    CHECK(std::abs(svc_decision(m, Sample{0.0})) < 1e-9);
    check_svc_feasible(m);

    CHECK_THROWS_AS(svc_fit(x, std::vector<int>{1, 1}, Kernel::linear(), 1.0), DataError);
    CHECK_THROWS_AS(svc_decision(m, Sample{1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(Kernel::rbf(0.0), std::invalid_argument);
}

TEST_CASE("svc XOR with rbf") {
    const Samples x{{0, 0}, {1, 1}, {0, 1}, {1, 0}};
    const std::vector<int> y{-1, -1, 1, 1};
    const Kernel k = Kernel::rbf(1.0);
    const SvcBinary m = svc_fit(x, y, k, 10.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(svc_decision(m, x[i]) * y[i] > 0);
    check_svc_feasible(m);

    const Eigen::MatrixXd g = gram(x, k);
    Eigen::MatrixXd q(4, 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) q(i, j) = y[i] * y[j] * g(i, j);
    }
    const double oracle = qp_oracle(q, -Eigen::VectorXd::Ones(4), Eigen::Map<const Eigen::VectorXi>(y.data(), 4).cast<double>(),
                                    Eigen::VectorXd::Constant(4, 10.0));
    CHECK(svc_objective(m) == doctest::Approx(oracle).epsilon(1e-3));
}

TEST_CASE("SMO matches the active-set oracle on 50 random problems") {
    Rng rng(2718);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.index(6);
        const std::size_t d = 1 + rng.index(2);
        const Samples x = random_points(rng, n, d);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 1 : -1;
        const Kernel k = trial % 4 == 0 ? Kernel::linear() : Kernel::rbf(rng.uniform(0.2, 2.0));
        const double c = rng.uniform(0.5, 5.0);
        const ClassWeights w{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        const SvcBinary m = svc_fit(x, y, k, c, w);
        check_svc_feasible(m);

        const Eigen::MatrixXd g = gram(x, k);
        Eigen::MatrixXd q(n, n);
        Eigen::VectorXd a(n);
        Eigen::VectorXd u(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = y[i];
            u[i] = c * (y[i] > 0 ? w.positive : w.negative);
            for (std::size_t j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * g(i, j);
        }
        const double oracle = qp_oracle(q, -Eigen::VectorXd::Ones(n), a, u);
        const double got = svc_objective(m);
        INFO("trial " << trial);
        CHECK(std::abs(got - oracle) <= 1e-3 * std::max(1.0, std::abs(oracle)));
    }
}

TEST_CASE("SVR matches the active-set oracle on small problems") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.index(3);
        const Samples x = random_points(rng, n, 1);
        std::vector<double> y(n);
        for (auto& v : y) v = rng.uniform();
        const Kernel k = Kernel::rbf(rng.uniform(0.3, 1.5));
        const double c = rng.uniform(0.5, 5.0);
        const double eps = rng.uniform(0.0, 0.1);
        const SvrModel m = svr_fit(x, y, k, c, eps);
        check_svr_feasible(m);

        const Eigen::MatrixXd g = gram(x, k);
        const int nn = static_cast<int>(n);
        Eigen::MatrixXd q(2 * nn, 2 * nn);
        Eigen::VectorXd p(2 * nn);
        Eigen::VectorXd a(2 * nn);
        for (int i = 0; i < nn; ++i) {
            p[i] = eps - y[i];
            p[nn + i] = eps + y[i];
            a[i] = 1.0;
            a[nn + i] = -1.0;
            for (int j = 0; j < nn; ++j) {
                q(i, j) = g(i, j);
                q(nn + i, nn + j) = g(i, j);
                q(i, nn + j) = -g(i, j);
                q(nn + i, j) = -g(i, j);
            }
        }
        const double oracle = qp_oracle(q, p, a, Eigen::VectorXd::Constant(2 * nn, c));
        INFO("trial " << trial);
        CHECK(std::abs(svr_objective(m, x, y) - oracle) <= 1e-3 * std::max(1.0, std::abs(oracle)));
    }
}

TEST_CASE("margin condition on a separable fit") {
    Rng rng(5);
    Samples x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
        x.push_back({rng.normal(-2, 0.5), rng.normal(0, 0.5)});
        y.push_back(-1);
        x.push_back({rng.normal(2, 0.5), rng.normal(0, 0.5)});
        y.push_back(1);
    }
    const SvcBinary m = svc_fit(x, y, Kernel::linear(), 100.0);
    check_svc_feasible(m);
    for (std::size_t i = 0; i < m.expansion.support_vectors.size(); ++i) {
        CHECK(std::abs(svc_decision(m, m.expansion.support_vectors[i])) >= 1.0 - 1e-3);
    }
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(svc_decision(m, x[i]) * y[i] > 0);
}

TEST_CASE("SVR examples") {
    SUBCASE("constant target") {
        const Samples x{{0.0}, {0.3}, {0.7}, {1.0}};
        const std::vector<double> y(4, 0.42);
        const SvrModel m = svr_fit(x, y, Kernel::rbf(1.0), 10.0, 0.02);
        CHECK(m.expansion.support_vectors.empty());
        CHECK(m.expansion.bias == 0.42);
        for (double v : {-3.0, 0.5, 9.0}) CHECK(svr_predict(m, Sample{v}) == 0.42);
    }
    SUBCASE("linear tube") {
        Samples x;
        std::vector<double> y;
        for (int i = 0; i <= 10; ++i) {
            x.push_back({i / 10.0});
            y.push_back(i / 10.0);
        }
        const SvrModel m = svr_fit(x, y, Kernel::linear(), 10.0, 0.05);
        check_svr_feasible(m);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(svr_predict(m, x[i]) - y[i]) <= 0.06);
        CHECK_THROWS_AS(svr_predict(m, Sample{1.0, 2.0}), std::invalid_argument);
    }
}

TEST_CASE("prediction is invariant to support vector order") {
    Rng rng(6);
    const Samples x = random_points(rng, 30, 3);
    std::vector<int> y(30);
    for (std::size_t i = 0; i < 30; ++i) y[i] = x[i][0] + 0.3 * x[i][1] > 0 ? 1 : -1;
    SvcBinary m = svc_fit(x, y, Kernel::rbf(0.5), 2.0);
    SvcBinary r = m;
    std::reverse(r.expansion.support_vectors.begin(), r.expansion.support_vectors.end());
    std::reverse(r.expansion.dual_coefs.begin(), r.expansion.dual_coefs.end());
    for (const Sample& q : random_points(rng, 10, 3)) {
        CHECK(svc_decision(m, q) == doctest::Approx(svc_decision(r, q)).epsilon(1e-12));
    }
}

TEST_CASE("class weighting equals duplication") {
    Rng rng(12);
    Samples x;
    std::vector<int> y;
    for (int i = 0; i < 14; ++i) {
        x.push_back({rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)});
        y.push_back(-1);
    }
    for (int i = 0; i < 5; ++i) {
        x.push_back({rng.normal(1.2, 1.0), rng.normal(0.8, 1.0)});
        y.push_back(1);
    }
    const Kernel k = Kernel::rbf(0.7);
    SmoConfig tight;
    tight.tol = 1e-10;
    tight.max_iter = 10000000;
    const double c = 3.0;
    const SvcBinary weighted = svc_fit(x, y, k, c, {2.0, 1.0}, tight);

    Samples xd = x;
    std::vector<int> yd = y;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] == 1) {
            xd.push_back(x[i]);
            yd.push_back(1);
        }
    }
    const SvcBinary duplicated = svc_fit(xd, yd, k, c, {1.0, 1.0}, tight);
    for (const Sample& q : random_points(rng, 25, 2)) {
        CHECK(std::abs(svc_decision(weighted, q) - svc_decision(duplicated, q)) < 1e-6);
    }
}

TEST_CASE("Platt calibration") {
    SUBCASE("separated decisions give a negative slope") {
        std::vector<double> d;
        std::vector<int> y;
        for (int i = 0; i < 50; ++i) {
            d.push_back(-2.0);
            y.push_back(-1);
            d.push_back(2.0);
            y.push_back(1);
        }
        const PlattSigmoid s = platt_calibrate(d, y);
        CHECK(s.a < 0);
        CHECK(s(2.0) > s(-2.0));
    }
    SUBCASE("symmetric data is centered") {
        std::vector<double> d;
        std::vector<int> y;
        Rng rng(3);
        for (int i = 0; i < 200; ++i) {
            const double v = rng.uniform(-3, 3);
            const int lab = rng.uniform() < 1.0 / (1.0 + std::exp(-v)) ? 1 : -1;
            d.push_back(v);
            y.push_back(lab);
            d.push_back(-v);
            y.push_back(-lab);
        }
        const PlattSigmoid s = platt_calibrate(d, y);
        CHECK(std::abs(s(0.0) - 0.5) < 1e-6);
    }
    SUBCASE("recovers a known sigmoid") {
        const double a = -2.0;
        const double b = 0.5;
        Rng rng(44);
        std::vector<double> d;
        std::vector<int> y;
        for (int i = 0; i < 20000; ++i) {
            const double v = rng.uniform(-3, 3);
            d.push_back(v);
            y.push_back(rng.uniform() < 1.0 / (1.0 + std::exp(a * v + b)) ? 1 : -1);
        }
        const PlattSigmoid s = platt_calibrate(d, y);
        CHECK(std::abs(s.a - a) < 0.1);
        CHECK(std::abs(s.b - b) < 0.1);
    }
    SUBCASE("single class is rejected") {
        CHECK_THROWS_AS(platt_calibrate(std::vector<double>{1.0}, std::vector<int>{1}), DataError);
    }
}

TEST_CASE("multiclass one-vs-rest") {
    Rng rng(21);
    Samples x;
    std::vector<int> labels;
    const double centers[3][2] = {{0, 0}, {5, 0}, {0, 5}};
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 20; ++i) {
            x.push_back({rng.normal(centers[c][0], 0.5), rng.normal(centers[c][1], 0.5)});
            labels.push_back(c);
        }
    }
    const std::vector<std::string> names{"A", "B", "C"};
    const SvcMulticlass m = multiclass_fit(x, labels, names);
    REQUIRE(m.machines.size() == 3);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto p = multiclass_predict(m, x[i]);
        CHECK(p.label == labels[i]);
        double sum = 0.0;
        for (double s : p.scores) {
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
            sum += s;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    const auto p1 = multiclass_predict(m, Sample{2.0, 2.0});
    const auto p2 = multiclass_predict(m, Sample{2.0, 2.0});
    CHECK(p1.scores == p2.scores);

    MulticlassConfig threaded;
    threaded.threads = 3;
    CHECK(multiclass_fit(x, labels, names, threaded) == m);

    // Class 3 has no samples: its machine is untrained and scores 0.
    const SvcMulticlass with_absent = multiclass_fit(x, labels, {"A", "B", "C", "D"});
    CHECK_FALSE(with_absent.machines[3].trained);
    CHECK(multiclass_predict(with_absent, x[0]).scores[3] == 0.0);

    CHECK_THROWS_AS(multiclass_fit(x, std::vector<int>(x.size(), 0), names), DataError);
    CHECK_THROWS_AS(multiclass_predict(m, Sample{1.0}), std::invalid_argument);
}
