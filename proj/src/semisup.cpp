#include "igm/semisup.hpp"

#include <cmath>
#include <stdexcept>

namespace igm::semisup {

using ad::Var;

namespace {

void check_simplex(const std::vector<double>& p) {
    double s = 0.0;
    for (double x : p) {
        if (x < 0.0) throw std::invalid_argument("probability vector has negative entry");
        s += x;
    }
    if (std::abs(s - 1.0) > 1e-6)
        throw std::invalid_argument("probability vector does not sum to 1");
}

}  // namespace

std::vector<double> sharpen(const std::vector<double>& p, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("sharpen: T must be positive");
    check_simplex(p);
    std::vector<double> out(p.size());
    double z = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        out[k] = std::pow(p[k], 1.0 / t);
        z += out[k];
    }
    for (double& x : out) x /= z;
    return out;
}

std::vector<double> co_refine(const std::vector<double>& onehot, double w,
                              const std::vector<double>& p_avg, double t) {
    if (onehot.size() != p_avg.size())
        throw std::invalid_argument("co_refine: length mismatch");
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("co_refine: w outside [0,1]");
    check_simplex(onehot);
    check_simplex(p_avg);
    std::vector<double> mix(onehot.size());
    for (std::size_t k = 0; k < mix.size(); ++k)
        mix[k] = w * onehot[k] + (1.0 - w) * p_avg[k];
    return sharpen(mix, t);
}

Tensor co_guess(const std::vector<Tensor>& views, const net::PeerNet& net1,
                const net::PeerNet& net2, double t) {
    if (views.empty()) throw std::invalid_argument("co_guess: no views");
    std::size_t n = views[0].shape[0], k = net1.arch.num_classes;
    Tensor avg({n, k});
    for (const auto& v : views) {
        Var p1 = net1.classify(ad::constant(v));
        Var p2 = net2.classify(ad::constant(v));
        for (std::size_t i = 0; i < n * k; ++i)
            avg.v[i] += p1.val().v[i] + p2.val().v[i];
    }
    double norm = 2.0 * static_cast<double>(views.size());
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> row(k);
        for (std::size_t c = 0; c < k; ++c) row[c] = avg.v[r * k + c] / norm;
        row = sharpen(row, t);
        for (std::size_t c = 0; c < k; ++c) avg.v[r * k + c] = row[c];
    }
    return avg;
}

Tensor augment_batch(const Tensor& x, Rng& rng, std::size_t max_shift) {
    if (x.ndim() != 4) throw std::invalid_argument("augment_batch: expects NCHW");
    std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor out({n, c, h, w});
    long ms = static_cast<long>(max_shift);
    for (std::size_t i = 0; i < n; ++i) {
        bool flip = rng.uniform() < 0.5;
        long dy = static_cast<long>(rng.below(2 * max_shift + 1)) - ms;
        long dx = static_cast<long>(rng.below(2 * max_shift + 1)) - ms;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    long sy = static_cast<long>(y) + dy;
                    long sx = static_cast<long>(xx) + dx;
                    if (flip) sx = static_cast<long>(w) - 1 - sx;
                    double val = 0.0;
                    if (sy >= 0 && sy < static_cast<long>(h) && sx >= 0 &&
                        sx < static_cast<long>(w))
                        val = x.v[((i * c + ch) * h + sy) * w + sx];
                    out.v[((i * c + ch) * h + y) * w + xx] = val;
                }
    }
    return out;
}

MixedBatch mixup_pair(const Tensor& xa, const Tensor& ta, const Tensor& xb,
                      const Tensor& tb, double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw std::invalid_argument("mixup_pair: alpha must be positive");
    if (!xa.same_shape(xb) || !ta.same_shape(tb))
        throw std::invalid_argument("mixup_pair: shape mismatch");
    double lam = rng.beta(alpha, alpha);
    double lp = std::max(lam, 1.0 - lam);
    MixedBatch mb;
    mb.lam_prime = lp;
    mb.x = xa;
    for (std::size_t i = 0; i < mb.x.numel(); ++i)
        mb.x.v[i] = lp * xa.v[i] + (1.0 - lp) * xb.v[i];
    mb.targets = ta;
    for (std::size_t i = 0; i < mb.targets.numel(); ++i)
        mb.targets.v[i] = lp * ta.v[i] + (1.0 - lp) * tb.v[i];
    return mb;
}

double lambda_u_at(std::size_t epoch, double lambda_u, std::size_t rampup) {
    if (rampup == 0) return lambda_u;
    double f = static_cast<double>(epoch) / static_cast<double>(rampup);
    return lambda_u * std::min(1.0, f);
}

namespace {

// rows of a (N,K) tensor
std::vector<double> row_of(const Tensor& t, std::size_t r) {
    std::size_t k = t.cols();
    return {t.v.begin() + r * k, t.v.begin() + (r + 1) * k};
}

Tensor stack_rows(const std::vector<Tensor>& parts) {
    std::size_t total = 0, k = parts.at(0).cols();
    for (const auto& p : parts) total += p.rows();
    Tensor out({total, k});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.v.begin(), p.v.end(), out.v.begin() + off);
        off += p.v.size();
    }
    return out;
}

Tensor stack_nchw(const std::vector<Tensor>& parts) {
    std::size_t total = 0;
    auto sh = parts.at(0).shape;
    for (const auto& p : parts) total += p.shape[0];
    Tensor out({total, sh[1], sh[2], sh[3]});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.v.begin(), p.v.end(), out.v.begin() + off);
        off += p.v.size();
    }
    return out;
}

Tensor take_rows_nchw(const Tensor& x, const std::vector<std::size_t>& idx) {
    std::size_t per = x.numel() / x.shape[0];
    Tensor out({idx.size(), x.shape[1], x.shape[2], x.shape[3]});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(x.v.begin() + idx[i] * per, x.v.begin() + (idx[i] + 1) * per,
                  out.v.begin() + i * per);
    return out;
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
    std::size_t k = t.cols();
    Tensor out({idx.size(), k});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(t.v.begin() + idx[i] * k, t.v.begin() + (idx[i] + 1) * k,
                  out.v.begin() + i * k);
    return out;
}

}  // namespace

DmLoss dividemix_loss(const net::PeerNet& net_k, const net::PeerNet& net_peer,
                      const DmBatchInput& in, std::size_t epoch, const DmConfig& cfg,
                      Rng& rng, const net::PeerNet* target_net) {
    const net::PeerNet& tnet = target_net ? *target_net : net_k;
    const std::size_t nl = in.x_l.numel() ? in.x_l.shape[0] : 0;
    const std::size_t nu = in.x_u.numel() ? in.x_u.shape[0] : 0;
    const std::size_t k = net_k.arch.num_classes;
    if (nl == 0)
        throw std::runtime_error(
            "dividemix_loss: empty labelled set (widen tau or rerun co-divide)");

    // augmented views of the labelled batch; predictions for refinement are
    // averaged over the views and detached
    std::vector<Tensor> l_views;
    for (std::size_t a = 0; a < cfg.n_aug; ++a)
        l_views.push_back(augment_batch(in.x_l, rng, cfg.max_shift));
    Tensor p_avg({nl, k});
    for (const auto& v : l_views) {
        Var p = tnet.classify(ad::constant(v));
        for (std::size_t i = 0; i < nl * k; ++i) p_avg.v[i] += p.val().v[i];
    }
    for (double& x : p_avg.v) x /= static_cast<double>(cfg.n_aug);

    Tensor l_targets({nl, k});
    for (std::size_t r = 0; r < nl; ++r) {
        auto refined =
            co_refine(row_of(in.y_l, r), in.w_l.at(r), row_of(p_avg, r), cfg.t_sharpen);
        std::copy(refined.begin(), refined.end(), l_targets.v.begin() + r * k);
    }

    // unlabelled: co-guess across both nets
    std::vector<Tensor> u_views;
    Tensor u_targets;
    if (nu > 0) {
        for (std::size_t a = 0; a < cfg.n_aug; ++a)
            u_views.push_back(augment_batch(in.x_u, rng, cfg.max_shift));
        u_targets = co_guess(u_views, tnet, net_peer, cfg.t_sharpen);
    }

    // combined pool of all augmented copies, mixed against a shuffled partner
    std::vector<Tensor> all_x_parts = l_views;
    std::vector<Tensor> all_t_parts;
    for (std::size_t a = 0; a < cfg.n_aug; ++a) all_t_parts.push_back(l_targets);
    for (std::size_t a = 0; a < cfg.n_aug; ++a) {
        if (nu == 0) break;
        all_x_parts.push_back(u_views[a]);
        all_t_parts.push_back(u_targets);
    }
    Tensor all_x = stack_nchw(all_x_parts);
    Tensor all_t = stack_rows(all_t_parts);

    std::size_t total = all_x.shape[0];
    std::vector<std::size_t> perm(total);
    for (std::size_t i = 0; i < total; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());

    MixedBatch mixed = mixup_pair(all_x, all_t, take_rows_nchw(all_x, perm),
                                  take_rows(all_t, perm), cfg.alpha, rng);

    Var pred = net_k.classify(ad::constant(mixed.x));

    const std::size_t n_lab = nl * cfg.n_aug;
    const std::size_t n_unl = total - n_lab;

    // Lx: cross-entropy on the labelled part
    Tensor mask_l({total, k});
    for (std::size_t r = 0; r < n_lab; ++r)
        for (std::size_t c = 0; c < k; ++c)
            mask_l.v[r * k + c] = mixed.targets.v[r * k + c];
    Var lx = ad::scale(
        ad::sum(ad::mul(ad::constant(mask_l), ad::log_(ad::clamp_min(pred, dist::kRhoEps)))),
        -1.0 / static_cast<double>(n_lab));

    // Lu: mean squared error on the unlabelled part
    Var lu;
    if (n_unl > 0) {
        Tensor mask_u({total, k});
        Tensor tgt_u({total, k});
        for (std::size_t r = n_lab; r < total; ++r)
            for (std::size_t c = 0; c < k; ++c) {
                mask_u.v[r * k + c] = 1.0;
                tgt_u.v[r * k + c] = mixed.targets.v[r * k + c];
            }
        Var diff = ad::mul(ad::constant(mask_u), ad::sub(pred, ad::constant(tgt_u)));
        lu = ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(n_unl));
    } else {
        lu = ad::constant(Tensor::scalar(0.0));
    }

    // Lreg: KL(uniform || batch-mean prediction)
    Var pbar = ad::scale(ad::sum_rows_to_row(pred), 1.0 / static_cast<double>(total));
    double pi = 1.0 / static_cast<double>(k);
    Var lreg = ad::scale(
        ad::sum(ad::log_(ad::clamp_min(pbar, dist::kRhoEps))), -pi);
    lreg = ad::add_scalar(lreg, std::log(pi) /* sum_k pi*log(pi) == log(pi) */);

    double lam_u = lambda_u_at(epoch, cfg.lambda_u, cfg.rampup);
    Var total_loss =
        ad::add(lx, ad::add(ad::scale(lu, lam_u), ad::scale(lreg, cfg.lambda_r)));

    DmLoss out;
    out.total = total_loss;
    out.l_x = lx.val().v[0];
    out.l_u = lu.val().v[0];
    out.l_reg = lreg.val().v[0];
    out.lambda_u = lam_u;
    return out;
}

}  // namespace igm::semisup
