#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "igm/distributions.hpp"
#include "igm/rng.hpp"

using namespace igm;
using namespace igm::dist;

namespace {

// Adaptive Simpson quadrature, independent oracle for density normalization.
double simpson(const std::function<double(double)>& f, double a, double b) {
    double c = 0.5 * (a + b);
    return (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double whole, double tol, int depth) {
    double c = 0.5 * (a + b);
    double left = simpson(f, a, c);
    double right = simpson(f, c, b);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, c, left, tol / 2.0, depth - 1) +
           adaptive_simpson(f, c, b, right, tol / 2.0, depth - 1);
}

double integrate01(const std::function<double(double)>& f, double tol = 1e-10) {
    return adaptive_simpson(f, 0.0, 1.0, simpson(f, 0.0, 1.0), tol, 30);
}

double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("cb_log_norm_const known values") {
    CHECK(cb_log_norm_const(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // 2*atanh(-0.8)/(-0.8) = 2.74653, log = 1.01034
    CHECK(cb_log_norm_const(0.9) == doctest::Approx(1.0103385594908541).epsilon(1e-6));
    CHECK_THROWS_AS(cb_log_norm_const(0.0), std::domain_error);
    CHECK_THROWS_AS(cb_log_norm_const(1.0), std::domain_error);
    CHECK_THROWS_AS(cb_log_norm_const(-0.2), std::domain_error);
}

TEST_CASE("cb_log_norm_const symmetry C(l) == C(1-l)") {
    for (double l : {0.01, 0.1, 0.25, 0.49, 0.4995, 0.3}) {
        CHECK(std::abs(cb_log_norm_const(l) - cb_log_norm_const(1.0 - l)) < 1e-12);
    }
}

TEST_CASE("cb_log_norm_const continuous across the branch point") {
    double d = 1e-7;
    CHECK(std::abs(cb_log_norm_const(0.5 + d) - cb_log_norm_const(0.5 - d)) < 1e-8);
    // series value agrees with the direct formula just outside the window
    for (double l : {0.5 + 1.1e-3, 0.5 - 1.1e-3, 0.5 + 0.9e-3, 0.5 - 0.9e-3}) {
        double t = 1.0 - 2.0 * l;
        double direct = std::log(2.0 * std::atanh(t) / t);
        CHECK(cb_log_norm_const(l) == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("cb_log_norm_const slope matches finite differences at the window edge") {
    for (double l : {0.5 + 5e-4, 0.5 - 5e-4, 0.5005, 0.6, 0.1}) {
        double fd = central_diff([](double x) { return cb_log_norm_const(x); }, l, 1e-6);
        double an = cb_log_norm_const_dlam(l);
        CHECK(std::abs(fd - an) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
}

TEST_CASE("cb_log_prob known values") {
    CHECK(cb_log_prob(0.5, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cb_log_prob(1.0, 0.9) == doctest::Approx(1.0103385594908541 + std::log(0.9)).epsilon(1e-6));
    CHECK_THROWS_AS(cb_log_prob(1.5, 0.5), std::domain_error);
    CHECK_THROWS_AS(cb_log_prob(0.5, 1.5), std::domain_error);
}

TEST_CASE("exp(cb_log_prob) integrates to 1 over [0,1]") {
    for (double lam : {0.1, 0.3, 0.5, 0.7, 0.99, 0.4999, 0.5001}) {
        double integral =
            integrate01([lam](double x) { return std::exp(cb_log_prob(x, lam)); });
        CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("cb_log_prob derivative w.r.t. lambda matches finite differences") {
    Rng rng(17);
    for (int i = 0; i < 50; ++i) {
        double x = rng.uniform();
        double lam = rng.uniform(0.02, 0.98);
        auto f = [x](double l) { return cb_log_prob(x, l); };
        double fd = central_diff(f, lam, 1e-6);
        double an = cb_log_norm_const_dlam(lam) + x / lam - (1.0 - x) / (1.0 - lam);
        CHECK(std::abs(fd - an) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
}

TEST_CASE("kl_diag_gauss_stdnormal closed form") {
    CHECK(kl_diag_gauss_stdnormal({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_diag_gauss_stdnormal({{1.0}, {1.0}}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(kl_diag_gauss_stdnormal({{0.0}, {4.0}}) ==
          doctest::Approx(0.5 * (4.0 - std::log(4.0) - 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(kl_diag_gauss_stdnormal({{0.0}, {0.0}}), std::domain_error);
}

TEST_CASE("kl_diag_gauss_stdnormal vs Monte-Carlo") {
    // KL = E_q[log q(z) - log p(z)], q = N(0, 4)
    Rng rng(99);
    DiagGaussian g{{0.0}, {4.0}};
    double mu = g.mu[0], var = g.var[0], sd = std::sqrt(var);
    double acc = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        double z = mu + sd * rng.normal();
        double logq = -0.5 * std::log(2.0 * M_PI * var) - (z - mu) * (z - mu) / (2.0 * var);
        double logp = -0.5 * std::log(2.0 * M_PI) - z * z / 2.0;
        acc += logq - logp;
    }
    CHECK(std::abs(acc / n - kl_diag_gauss_stdnormal(g)) < 1e-2);
}

TEST_CASE("kl_cat_uniform known values") {
    CHECK(kl_cat_uniform({{0.25, 0.25, 0.25, 0.25}}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_cat_uniform({{1.0, 0.0, 0.0, 0.0}}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(kl_cat_uniform({{0.5, 0.5, 0.0, 0.0}}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(kl_cat_uniform({{0.5, 0.2}}), std::domain_error);
}

TEST_CASE("KL nonnegativity over random draws, zero iff at the prior") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        std::size_t d = 1 + rng.below(6);
        DiagGaussian g;
        for (std::size_t j = 0; j < d; ++j) {
            g.mu.push_back(rng.normal());
            g.var.push_back(std::exp(rng.uniform(-2.0, 2.0)));
        }
        CHECK(kl_diag_gauss_stdnormal(g) >= 0.0);

        std::size_t k = 2 + rng.below(8);
        CategoricalParam c;
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            c.rho.push_back(rng.uniform(0.001, 1.0));
            z += c.rho.back();
        }
        for (double& p : c.rho) p /= z;
        double kl = kl_cat_uniform(c);
        CHECK(kl >= 0.0);
        CHECK(kl <= std::log(static_cast<double>(k)) + 1e-12);
    }
}

TEST_CASE("categorical_nll known values") {
    CHECK(categorical_nll({{0.0, 1.0}}, {0.0, 1.0}) <= 1e-6);
    std::vector<double> u10(10, 0.1);
    std::vector<double> lab10(10, 0.0);
    lab10[3] = 1.0;
    CHECK(categorical_nll({u10}, lab10) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(categorical_nll({{0.7, 0.3}}, {0.0, 1.0}) ==
          doctest::Approx(-std::log(0.3)).epsilon(1e-10));
    CHECK_THROWS_AS(categorical_nll({{0.5, 0.5}}, {1.0, 0.0, 0.0}),
                    std::invalid_argument);
}
