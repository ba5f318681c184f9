#include "igm/vi.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "igm/rng.hpp"

namespace igm::vi {

using ad::Var;

std::vector<double> relaxed_label(const dist::CategoricalParam& c, bool hard) {
    c.validate();
    if (!hard) return c.rho;
    std::vector<double> y(c.rho.size(), 0.0);
    y[std::max_element(c.rho.begin(), c.rho.end()) - c.rho.begin()] = 1.0;
    return y;
}

ViLoss variational_free_energy(const Tensor& x_nchw, const Tensor& yhat_rows,
                               const net::PeerNet& net, std::uint64_t seed,
                               const ViOptions& opt,
                               const std::vector<std::uint64_t>* tags) {
    if (x_nchw.ndim() != 4) throw std::invalid_argument("vi: x must be NCHW");
    const std::size_t n = x_nchw.shape[0];
    const std::size_t k = net.arch.num_classes;
    if (yhat_rows.ndim() != 2 || yhat_rows.rows() != n || yhat_rows.cols() != k)
        throw std::invalid_argument("vi: yhat shape mismatch");
    const double nn = static_cast<double>(n);

    Var x = ad::constant(x_nchw);
    Var rho = net.classify(x);

    Var y;
    if (opt.hard_label) {
        Tensor hard({n, k});
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (rho.val().v[r * k + c] > rho.val().v[r * k + best]) best = c;
            hard.v[r * k + best] = 1.0;
        }
        y = ad::constant(hard);
    } else {
        y = rho;
    }

    auto [mu, logvar] = net.encode(x, y);

    if (tags && tags->size() != n)
        throw std::invalid_argument("vi: tags length mismatch");
    const std::uint64_t base = Rng::derive(seed, 0xc1);
    const std::size_t dz = net.arch.d_z;
    Tensor eps(mu.val().shape);
    for (std::size_t r = 0; r < n; ++r) {
        Rng rng(Rng::derive(base, tags ? (*tags)[r] : r));
        for (std::size_t j = 0; j < dz; ++j) eps.v[r * dz + j] = rng.normal();
    }
    Var z = net::reparam_sample(mu, logvar, eps);

    Var lam = net.decode(z, y);
    Var recon;
    if (opt.cb_recon) {
        recon = ad::scale(ad::cb_log_prob_sum(x_nchw, lam), -1.0 / nn);
    } else {
        Var diff = ad::sub(lam, x);
        recon = ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / nn);
    }

    Var gamma = net.noisy_classify(x, y);
    Var noisy = ad::scale(
        ad::sum(ad::mul(ad::constant(yhat_rows),
                        ad::log_(ad::clamp_min(gamma, dist::kRhoEps)))),
        -1.0 / nn);

    // KL[q(Y|X) || uniform] = mean_rows( sum_k rho log rho ) + log K
    Var kl_y = ad::add_scalar(
        ad::scale(ad::sum(ad::mul(rho, ad::log_(ad::clamp_min(rho, 1e-300)))), 1.0 / nn),
        std::log(static_cast<double>(k)));

    // KL[q(Z|X,Y) || N(0,I)] = 1/2 (mu^2 + var - logvar - 1), batch mean
    Var var = ad::exp_(logvar);
    Var kl_z = ad::scale(
        ad::add_scalar(ad::sub(ad::add(ad::sum(ad::mul(mu, mu)), ad::sum(var)),
                               ad::sum(logvar)),
                       -nn * static_cast<double>(net.arch.d_z)),
        0.5 / nn);

    ViLoss out;
    out.total = ad::add(ad::add(recon, noisy), ad::add(kl_y, kl_z));
    out.terms.recon_nll = recon.val().v[0];
    out.terms.noisy_nll = noisy.val().v[0];
    out.terms.kl_y = kl_y.val().v[0];
    out.terms.kl_z = kl_z.val().v[0];
    out.terms.total = out.total.val().v[0];
    return out;
}

Var total_loss(Var vi_mean, Var dm) { return ad::add(vi_mean, dm); }

}  // namespace igm::vi
