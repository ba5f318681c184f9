#include "igm/codivide.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "igm/batch.hpp"

namespace igm::codivide {

namespace {
constexpr double kVarFloor = 1e-6;

double gauss_pdf(double x, double mean, double var) {
    double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

double percentile(std::vector<double> sorted, double p) {
    double pos = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace

std::vector<double> per_sample_ce(const net::PeerNet& net, const data::NoisyDataset& ds,
                                  std::size_t batch_size) {
    if (ds.images.empty()) throw std::invalid_argument("per_sample_ce: empty dataset");
    const auto& im = ds.images[0];
    if (im.height != net.arch.height || im.width != net.arch.width ||
        im.channels != net.arch.channels || ds.num_classes != net.arch.num_classes)
        throw std::invalid_argument("per_sample_ce: dataset/net shape mismatch");

    std::vector<double> losses(ds.size());
    const std::size_t k = ds.num_classes;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        std::size_t end = std::min(start + batch_size, ds.size());
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        ad::Var p = net.classify(ad::constant(batch::to_nchw(ds, idx)));
        for (std::size_t n = 0; n < idx.size(); ++n) {
            double rho = p.val().v[n * k + ds.noisy_labels[idx[n]]];
            losses[idx[n]] = -std::log(std::max(rho, dist::kRhoEps));
        }
    }

    double lo = *std::min_element(losses.begin(), losses.end());
    double hi = *std::max_element(losses.begin(), losses.end());
    if (hi > lo)
        for (double& l : losses) l = (l - lo) / (hi - lo);
    return losses;
}

Gmm2 fit_gmm2(const std::vector<double>& losses, std::size_t max_iter, double tol,
              std::uint64_t /*seed*/) {
    const std::size_t n = losses.size();
    if (n < 4) throw std::invalid_argument("fit_gmm2: need at least 4 samples");
    double lo = *std::min_element(losses.begin(), losses.end());
    double hi = *std::max_element(losses.begin(), losses.end());
    if (!(hi > lo)) throw std::runtime_error("fit_gmm2: degenerate input, all values equal");

    std::vector<double> sorted = losses;
    std::sort(sorted.begin(), sorted.end());

    Gmm2 g;
    g.mean_lo = percentile(sorted, 0.10);
    g.mean_hi = percentile(sorted, 0.90);
    double mean = 0.0;
    for (double x : losses) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : losses) var += (x - mean) * (x - mean);
    var = std::max(var / static_cast<double>(n), kVarFloor);
    g.var_lo = g.var_hi = var;
    g.weight_lo = g.weight_hi = 0.5;

    std::vector<double> r(n);  // responsibility of the low component
    double prev_ll = -1e300;
    for (std::size_t it = 0; it < max_iter; ++it) {
        // E step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double a = g.weight_lo * gauss_pdf(losses[i], g.mean_lo, g.var_lo);
            double b = g.weight_hi * gauss_pdf(losses[i], g.mean_hi, g.var_hi);
            double s = a + b;
            if (s <= 0.0 || !std::isfinite(s)) {
                a = b = 0.5;
                s = 1.0;
            }
            r[i] = a / s;
            ll += std::log(std::max(s, 1e-300));
        }
        g.ll_trace.push_back(ll);
        g.log_likelihood = ll;
        if (ll - prev_ll < tol && it > 0) break;
        prev_ll = ll;

        // M step
        double n_lo = 0.0, n_hi = 0.0, m_lo = 0.0, m_hi = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            n_lo += r[i];
            n_hi += 1.0 - r[i];
            m_lo += r[i] * losses[i];
            m_hi += (1.0 - r[i]) * losses[i];
        }
        n_lo = std::max(n_lo, 1e-10);
        n_hi = std::max(n_hi, 1e-10);
        g.mean_lo = m_lo / n_lo;
        g.mean_hi = m_hi / n_hi;
        double v_lo = 0.0, v_hi = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double dl = losses[i] - g.mean_lo;
            double dh = losses[i] - g.mean_hi;
            v_lo += r[i] * dl * dl;
            v_hi += (1.0 - r[i]) * dh * dh;
        }
        g.var_lo = std::max(v_lo / n_lo, kVarFloor);
        g.var_hi = std::max(v_hi / n_hi, kVarFloor);
        g.weight_lo = n_lo / static_cast<double>(n);
        g.weight_hi = n_hi / static_cast<double>(n);

        if (g.mean_lo > g.mean_hi) {
            std::swap(g.mean_lo, g.mean_hi);
            std::swap(g.var_lo, g.var_hi);
            std::swap(g.weight_lo, g.weight_hi);
            for (double& ri : r) ri = 1.0 - ri;
        }
    }
    return g;
}

std::vector<double> clean_posterior(const Gmm2& g, const std::vector<double>& losses) {
    std::vector<double> w(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        double a = g.weight_lo * gauss_pdf(losses[i], g.mean_lo, g.var_lo);
        double b = g.weight_hi * gauss_pdf(losses[i], g.mean_hi, g.var_hi);
        double s = a + b;
        w[i] = s > 0.0 ? a / s : (losses[i] <= 0.5 * (g.mean_lo + g.mean_hi) ? 1.0 : 0.0);
    }
    return w;
}

CoDividePartition partition(const std::vector<double>& w, double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("partition: tau must be in (0,1)");
    CoDividePartition p;
    p.w = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] >= tau)
            p.labelled_idx.push_back(i);
        else
            p.unlabelled_idx.push_back(i);
    }
    return p;
}

double auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size())
        throw std::invalid_argument("auc: length mismatch");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks for ties
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t q = i; q <= j; ++q) rank[order[q]] = mid;
        i = j + 1;
    }

    double pos_ranks = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t q = 0; q < scores.size(); ++q)
        if (positive[q]) {
            pos_ranks += rank[q];
            ++n_pos;
        }
    std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc: need both classes present");
    return (pos_ranks - 0.5 * n_pos * (n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace igm::codivide
