#pragma once

#include <vector>

#include "igm/networks.hpp"
#include "igm/rng.hpp"
#include "igm/tensor.hpp"

namespace igm::semisup {

// Temperature sharpening: p^(1/T) renormalized.
std::vector<double> sharpen(const std::vector<double>& p, double t);

// Label co-refinement: sharpen(w*y + (1-w)*p_avg, T).
std::vector<double> co_refine(const std::vector<double>& onehot, double w,
                              const std::vector<double>& p_avg, double t);

// Label co-guessing for unlabelled samples: average both nets' predictions
// over the augmented views (each view is an (N,C,H,W) batch of the same N
// samples), then sharpen row-wise. Returns (N,K).
Tensor co_guess(const std::vector<Tensor>& views, const net::PeerNet& net1,
                const net::PeerNet& net2, double t);

// Random horizontal flip + random shift of up to `max_shift` pixels (zero
// padded), per sample.
Tensor augment_batch(const Tensor& x_nchw, Rng& rng, std::size_t max_shift = 2);

struct MixedBatch {
    Tensor x;          // mixed inputs
    Tensor targets;    // mixed probability rows
    double lam_prime;  // max(lam, 1-lam), always >= 0.5
};

// Mixup of two batches of equal size with lam ~ Beta(alpha, alpha), one draw
// shared across the pair (DivideMix convention).
MixedBatch mixup_pair(const Tensor& xa, const Tensor& ta, const Tensor& xb,
                      const Tensor& tb, double alpha, Rng& rng);

// Linear ramp from 0 to lambda_u over `rampup` epochs.
double lambda_u_at(std::size_t epoch, double lambda_u, std::size_t rampup);

struct DmConfig {
    double t_sharpen = 0.5;
    double alpha = 4.0;
    double lambda_u = 25.0;
    double lambda_r = 1.0;
    std::size_t rampup = 16;
    std::size_t n_aug = 2;
    std::size_t max_shift = 2;
};

struct DmBatchInput {
    Tensor x_l;               // labelled originals (Nl,C,H,W)
    Tensor y_l;               // noisy one-hot rows (Nl,K)
    std::vector<double> w_l;  // clean probabilities, length Nl
    Tensor x_u;               // unlabelled originals (Nu,C,H,W); Nu may be 0
};

struct DmLoss {
    ad::Var total;
    double l_x = 0.0, l_u = 0.0, l_reg = 0.0, lambda_u = 0.0;
};

// The full DivideMix batch loss for model k: refinement/guessing targets are
// detached, mixup over the combined augmented batch, L = Lx + lambda_u(e)*Lu
// + lambda_r*Lreg. Gradients flow through net_k only. Throws if the labelled
// part is empty. `target_net` (defaults to net_k) is used only to synthesize
// the detached targets; passing a frozen copy keeps finite-difference probes
// of the differentiable path honest.
DmLoss dividemix_loss(const net::PeerNet& net_k, const net::PeerNet& net_peer,
                      const DmBatchInput& in, std::size_t epoch, const DmConfig& cfg,
                      Rng& rng, const net::PeerNet* target_net = nullptr);

}  // namespace igm::semisup
