#pragma once

#include <cstdint>
#include <vector>

#include "igm/dataset.hpp"
#include "igm/networks.hpp"

namespace igm::codivide {

// Two-component 1-D Gaussian mixture, components ordered by mean.
struct Gmm2 {
    double mean_lo = 0.0, mean_hi = 1.0;
    double var_lo = 1.0, var_hi = 1.0;
    double weight_lo = 0.5, weight_hi = 0.5;
    double log_likelihood = 0.0;
    std::vector<double> ll_trace;  // per-iteration, non-decreasing
};

struct CoDividePartition {
    std::vector<double> w;  // clean probability per example
    std::vector<std::size_t> labelled_idx;
    std::vector<std::size_t> unlabelled_idx;
};

// Per-example cross-entropy of q(Y|X) against the noisy label, min-max
// normalized to [0,1] (left untouched when all losses are equal).
std::vector<double> per_sample_ce(const net::PeerNet& net, const data::NoisyDataset& ds,
                                  std::size_t batch_size = 128);

// EM with percentile-based initialization (means at the 10th/90th percentile),
// variance floor 1e-6. The seed parameter is part of the contract but unused:
// initialization is deterministic.
Gmm2 fit_gmm2(const std::vector<double>& losses, std::size_t max_iter, double tol,
              std::uint64_t seed);

// Posterior probability of the lower-mean component at each loss value.
std::vector<double> clean_posterior(const Gmm2& g, const std::vector<double>& losses);

CoDividePartition partition(const std::vector<double>& w, double tau);

// Ranking AUC of scores for the positive class (label true). Used for the
// clean-probability-vs-flip-mask diagnostic.
double auc(const std::vector<double>& scores, const std::vector<bool>& positive);

}  // namespace igm::codivide
