#pragma once

#include <cstdint>

#include "igm/distributions.hpp"
#include "igm/networks.hpp"
#include "igm/tensor.hpp"

namespace igm::vi {

struct ViOptions {
    bool hard_label = false;  // argmax one-hot, gradients blocked (ablation)
    bool cb_recon = true;     // false: plain MSE reconstruction (ablation)
};

// The four objective terms, batch means. total == recon_nll + noisy_nll +
// kl_y + kl_z with unit coefficients; there is no KL weighting knob.
struct ViTerms {
    double recon_nll = 0.0;
    double noisy_nll = 0.0;
    double kl_y = 0.0;
    double kl_z = 0.0;
    double total = 0.0;
};

struct ViLoss {
    ad::Var total;
    ViTerms terms;
};

// Expected one-hot under q(Y|X): the distribution itself (soft relaxation),
// or its argmax in hard mode.
std::vector<double> relaxed_label(const dist::CategoricalParam& c, bool hard = false);

// Variational free energy over a batch: x (N,C,H,W) with entries in [0,1],
// yhat one-hot rows (N,K). Reparameterization noise is drawn per example from
// (seed, tag), so identical seeds give identical noise regardless of
// parameter values and the batch mean does not depend on example order.
// `tags` defaults to 0..N-1; callers that batch a subset of a dataset pass
// the dataset indices.
ViLoss variational_free_energy(const Tensor& x_nchw, const Tensor& yhat_rows,
                               const net::PeerNet& net, std::uint64_t seed,
                               const ViOptions& opt = {},
                               const std::vector<std::uint64_t>* tags = nullptr);

// L = L(vi) + L(dm), unweighted.
ad::Var total_loss(ad::Var vi_mean, ad::Var dm);

}  // namespace igm::vi
