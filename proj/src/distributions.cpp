#include "igm/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace igm::dist {

void CBParam::validate() const {
    for (double l : lam)
        if (!(l > 0.0 && l < 1.0))
            throw std::domain_error("CBParam: lambda must lie in (0,1)");
}

void DiagGaussian::validate() const {
    if (mu.size() != var.size())
        throw std::invalid_argument("DiagGaussian: mu/var length mismatch");
    for (double s2 : var)
        if (!(s2 > 0.0)) throw std::domain_error("DiagGaussian: variance must be positive");
}

void CategoricalParam::validate() const {
    double sum = 0.0;
    for (double p : rho) {
        if (p < 0.0) throw std::domain_error("CategoricalParam: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::domain_error("CategoricalParam: probabilities must sum to 1");
}

namespace {

void check_lam(double lam) {
    if (!(lam > 0.0 && lam < 1.0))
        throw std::domain_error("continuous Bernoulli: lambda outside (0,1)");
}

// log(atanh(t)/t) = t^2/3 + 13 t^4/90 + 251 t^6/2835 + O(t^8).
// For |t| < 2e-3 the truncation error is below 1e-16.
double log_atanh_ratio_series(double t) {
    double t2 = t * t;
    return t2 * (1.0 / 3.0 + t2 * (13.0 / 90.0 + t2 * (251.0 / 2835.0)));
}

// d/dt of the above.
double dlog_atanh_ratio_series(double t) {
    double t2 = t * t;
    return t * (2.0 / 3.0 + t2 * (4.0 * 13.0 / 90.0 + t2 * (6.0 * 251.0 / 2835.0)));
}

}  // namespace

double cb_log_norm_const(double lam) {
    check_lam(lam);
    double t = 1.0 - 2.0 * lam;
    if (std::abs(lam - 0.5) < kTaylorWin)
        return std::log(2.0) + log_atanh_ratio_series(t);
    return std::log(2.0 * std::atanh(t) / t);
}

double cb_log_norm_const_dlam(double lam) {
    check_lam(lam);
    double t = 1.0 - 2.0 * lam;
    if (std::abs(lam - 0.5) < kTaylorWin) return -2.0 * dlog_atanh_ratio_series(t);
    // d/dt log(atanh(t)/t) = 1/((1-t^2) atanh(t)) - 1/t, chain dt/dlam = -2
    return -2.0 * (1.0 / ((1.0 - t * t) * std::atanh(t)) - 1.0 / t);
}

double cb_log_prob(double x, double lam) {
    if (!(x >= 0.0 && x <= 1.0))
        throw std::domain_error("continuous Bernoulli: x outside [0,1]");
    check_lam(lam);
    return cb_log_norm_const(lam) + x * std::log(lam) + (1.0 - x) * std::log(1.0 - lam);
}

double cb_log_prob_sum(const std::vector<double>& x, const CBParam& p) {
    if (x.size() != p.lam.size())
        throw std::invalid_argument("cb_log_prob_sum: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += cb_log_prob(x[i], p.lam[i]);
    return acc;
}

double kl_diag_gauss_stdnormal(const DiagGaussian& g) {
    g.validate();
    double acc = 0.0;
    for (std::size_t j = 0; j < g.mu.size(); ++j)
        acc += g.mu[j] * g.mu[j] + g.var[j] - std::log(g.var[j]) - 1.0;
    return 0.5 * acc;
}

double kl_cat_uniform(const CategoricalParam& c) {
    c.validate();
    double k = static_cast<double>(c.rho.size());
    double acc = 0.0;
    for (double p : c.rho)
        if (p > 0.0) acc += p * std::log(k * p);
    return acc;
}

double categorical_nll(const CategoricalParam& c, const std::vector<double>& onehot) {
    if (onehot.size() != c.rho.size())
        throw std::invalid_argument("categorical_nll: label length mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < onehot.size(); ++k) {
        double p = c.rho[k] < kRhoEps ? kRhoEps : c.rho[k];
        acc -= onehot[k] * std::log(p);
    }
    return acc;
}

}  // namespace igm::dist
