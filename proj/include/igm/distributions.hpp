#pragma once

#include <vector>

#include "igm/tensor.hpp"

namespace igm::dist {

inline constexpr double kLamEps = 1e-6;   // CB parameter clamp
inline constexpr double kRhoEps = 1e-7;   // categorical log clamp
inline constexpr double kTaylorWin = 1e-3;  // |lam - 0.5| switch to series

// Continuous Bernoulli parameter, one lambda per pixel, each strictly in (0,1).
struct CBParam {
    std::vector<double> lam;
    void validate() const;
};

// Diagonal Gaussian q(Z|.) = N(mu, diag(var)).
struct DiagGaussian {
    std::vector<double> mu;
    std::vector<double> var;
    void validate() const;
};

// Categorical over K classes.
struct CategoricalParam {
    std::vector<double> rho;
    void validate() const;
};

// log C(lambda) where C is the continuous Bernoulli normalizing constant:
// C(l) = 2*atanh(1-2l)/(1-2l) for l != 0.5, C(0.5) = 2. Near 0.5 the direct
// formula is 0/0, so inside |l-0.5| < kTaylorWin we evaluate the power series
// of log C in t = 1-2l, which keeps the value and slope continuous across the
// removable singularity.
double cb_log_norm_const(double lam);

// d/dlam of cb_log_norm_const, same branch structure.
double cb_log_norm_const_dlam(double lam);

// log p(x | lam) = log C(lam) + x log lam + (1-x) log(1-lam), x in [0,1].
double cb_log_prob(double x, double lam);

// Elementwise sum over an array pair of equal length.
double cb_log_prob_sum(const std::vector<double>& x, const CBParam& p);

// KL[N(mu, diag(var)) || N(0, I)] = 1/2 sum(mu^2 + var - log var - 1).
double kl_diag_gauss_stdnormal(const DiagGaussian& g);

// KL[Cat(rho) || Uniform(K)] = sum rho_k log(K rho_k), with 0 log 0 := 0.
double kl_cat_uniform(const CategoricalParam& c);

// -log rho[argmax(label)] with rho clamped at kRhoEps before the log.
double categorical_nll(const CategoricalParam& c, const std::vector<double>& onehot);

}  // namespace igm::dist
