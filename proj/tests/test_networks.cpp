#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "igm/networks.hpp"
#include "igm/rng.hpp"

using namespace igm;
using namespace igm::net;
using ad::Var;

namespace {

Tensor random_images(std::size_t n, const ArchConfig& a, Rng& rng) {
    Tensor x({n, a.channels, a.height, a.width});
    for (double& v : x.v) v = rng.uniform();
    return x;
}

Tensor random_onehot(std::size_t n, std::size_t k, Rng& rng) {
    Tensor y({n, k});
    for (std::size_t i = 0; i < n; ++i) y.v[i * k + rng.below(k)] = 1.0;
    return y;
}

}  // namespace

TEST_CASE("build_peer is deterministic and seeds differ") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p1 = build_peer(a, 42);
    PeerNet p2 = build_peer(a, 42);
    PeerNet p3 = build_peer(a, 43);
    auto v1 = p1.all_params(), v2 = p2.all_params(), v3 = p3.all_params();
    REQUIRE(v1.size() == v2.size());
    REQUIRE(v1.size() == v3.size());
    bool all_equal = true, any_diff_seed = false;
    for (std::size_t i = 0; i < v1.size(); ++i) {
        if (v1[i].val().v != v2[i].val().v) all_equal = false;
        if (v1[i].val().v != v3[i].val().v) any_diff_seed = true;
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);
}

TEST_CASE("dual model peers are independently initialized") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    DualModel d = build_dual(a, 7);
    auto v1 = d.net1.all_params(), v2 = d.net2.all_params();
    REQUIRE(v1.size() == v2.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < v1.size(); ++i)
        if (v1[i].val().v != v2[i].val().v) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("classifier outputs lie on the simplex") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p = build_peer(a, 5);
    Rng rng(3);
    Tensor x = random_images(6, a, rng);
    Var rho = p.classify(ad::constant(x));
    REQUIRE(rho.val().shape == std::vector<std::size_t>({6, 4}));
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            double v = rho.val().v[i * 4 + k];
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    Tensor y = random_onehot(6, 4, rng);
    Var gamma = p.noisy_classify(ad::constant(x), ad::constant(y));
    REQUIRE(gamma.val().shape == std::vector<std::size_t>({6, 4}));
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += gamma.val().v[i * 4 + k];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("decoder output matches image shape with entries inside (0,1)") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p = build_peer(a, 11);
    Rng rng(4);
    Tensor z({5, 8});
    for (double& v : z.v) v = rng.normal();
    Tensor y = random_onehot(5, 4, rng);
    Var lam = p.decode(ad::constant(z), ad::constant(y));
    REQUIRE(lam.val().shape == std::vector<std::size_t>({5, 3, 16, 16}));
    for (double v : lam.val().v) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("encoder returns mu and logvar of latent width") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p = build_peer(a, 13);
    Rng rng(6);
    Tensor x = random_images(3, a, rng);
    Tensor y = random_onehot(3, 4, rng);
    auto [mu, logvar] = p.encode(ad::constant(x), ad::constant(y));
    CHECK(mu.val().shape == std::vector<std::size_t>({3, 8}));
    CHECK(logvar.val().shape == std::vector<std::size_t>({3, 8}));
    for (double v : logvar.val().v) CHECK(std::isfinite(v));
}

TEST_CASE("label conditioning changes encoder, decoder and noisy head outputs") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p = build_peer(a, 17);
    Rng rng(8);
    Tensor x = random_images(2, a, rng);
    Tensor y0({2, 4}), y1({2, 4});
    y0.v[0] = 1.0; y0.v[4] = 1.0;   // class 0 both rows
    y1.v[1] = 1.0; y1.v[7] = 1.0;   // classes 1 and 3
    auto [mu_a, lv_a] = p.encode(ad::constant(x), ad::constant(y0));
    auto [mu_b, lv_b] = p.encode(ad::constant(x), ad::constant(y1));
    CHECK(mu_a.val().v != mu_b.val().v);
    Tensor z({2, 8});
    for (double& v : z.v) v = rng.normal();
    CHECK(p.decode(ad::constant(z), ad::constant(y0)).val().v !=
          p.decode(ad::constant(z), ad::constant(y1)).val().v);
    CHECK(p.noisy_classify(ad::constant(x), ad::constant(y0)).val().v !=
          p.noisy_classify(ad::constant(x), ad::constant(y1)).val().v);
}

TEST_CASE("forward passes are deterministic given parameters and inputs") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p = build_peer(a, 19);
    Rng rng(9);
    Tensor x = random_images(2, a, rng);
    Var a1 = p.classify(ad::constant(x));
    Var a2 = p.classify(ad::constant(x));
    CHECK(a1.val().v == a2.val().v);
}

TEST_CASE("parameter groups split cleanly") {
    ArchConfig a = ArchConfig::small_profile(16, 16, 3, 4, 8);
    PeerNet p = build_peer(a, 23);
    auto disc = p.disc_params(), gen = p.gen_params(), all = p.all_params();
    CHECK(disc.size() + gen.size() == all.size());
    // groups are disjoint
    for (const auto& d : disc)
        for (const auto& g : gen) CHECK(d.node != g.node);
}

TEST_CASE("arch config validation and profiles") {
    CHECK_THROWS(ArchConfig::small_profile(15, 16, 3, 4, 8).validate());
    ArchConfig small = ArchConfig::small_profile(16, 16, 3, 4, 8);
    small.validate();
    ArchConfig ref = ArchConfig::reference_profile(16, 16, 3, 4, 8);
    ref.validate();
    CHECK(ref.enc_widths == std::vector<std::size_t>({32, 64, 128, 256}));
    CHECK(ref.dec_widths == std::vector<std::size_t>({256, 128, 64, 32}));
    ArchConfig back = ArchConfig::from_json(ref.to_json());
    CHECK(back == ref);
}

TEST_CASE("reparam_sample degenerate variance collapses to the mean") {
    dist::DiagGaussian g{{1.5, -0.25, 0.0}, {1e-12, 1e-12, 1e-12}};
    std::vector<double> z = reparam_sample(g, 31);
    REQUIRE(z.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(z[i] - g.mu[i]) < 1e-5);
}

TEST_CASE("reparam_sample empirical moments match the Gaussian (Monte Carlo)") {
    dist::DiagGaussian g{{0.7, -1.2}, {4.0, 0.25}};
    const int n = 100000;
    std::vector<double> mean(2, 0.0), m2(2, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> z = reparam_sample(g, 1000 + static_cast<std::uint64_t>(i));
        for (std::size_t d = 0; d < 2; ++d) {
            mean[d] += z[d];
            m2[d] += z[d] * z[d];
        }
    }
    for (std::size_t d = 0; d < 2; ++d) {
        mean[d] /= n;
        double var = m2[d] / n - mean[d] * mean[d];
        double tol = 3.0 * std::sqrt(g.var[d]) / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mean[d] - g.mu[d]) < tol);
        CHECK(std::abs(var - g.var[d]) / g.var[d] < 0.05);
    }
}

TEST_CASE("reparam_sample graph version: dz/dmu is the identity (finite differences)") {
    Rng rng(12);
    Tensor mu_t({1, 4}), lv_t({1, 4}), eps({1, 4});
    for (double& v : mu_t.v) v = rng.normal();
    for (double& v : lv_t.v) v = rng.uniform(-1.0, 1.0);
    for (double& v : eps.v) v = rng.normal();
    Var mu = ad::param(mu_t), logvar = ad::param(lv_t);

    // d(sum z)/dmu_j = 1 and d(sum z)/dlogvar_j = 0.5*exp(0.5*lv_j)*eps_j
    Var z = reparam_sample(mu, logvar, eps);
    ad::backward(ad::sum(z));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(mu.grad().v[j] == doctest::Approx(1.0).epsilon(1e-10));
        double h = 1e-6;
        Tensor lv_hi = lv_t, lv_lo = lv_t;
        lv_hi.v[j] += h;
        lv_lo.v[j] -= h;
        auto sum_z = [&](const Tensor& lv) {
            Var zz = reparam_sample(ad::constant(mu_t), ad::constant(lv), eps);
            double s = 0.0;
            for (double v : zz.val().v) s += v;
            return s;
        };
        double fd = (sum_z(lv_hi) - sum_z(lv_lo)) / (2.0 * h);
        CHECK(logvar.grad().v[j] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("scalar loss gradients through all four nets match finite differences") {
    ArchConfig a = ArchConfig::small_profile(8, 8, 1, 3, 2);
    a.cls_widths = {2, 3};
    a.enc_widths = {2, 3};
    a.dec_widths = {3, 2};
    PeerNet p = build_peer(a, 29);
    Rng rng(14);
    // Zero-initialized biases put dead receptive fields exactly on the relu
    // kink, where finite differences are meaningless; jitter off it.
    for (auto& pv : p.all_params())
        for (double& v : pv.node->value.v) v += rng.uniform(-0.05, 0.05);
    Tensor x({2, 1, 8, 8});
    for (double& v : x.v) v = rng.uniform();
    Tensor y = random_onehot(2, 3, rng);
    Tensor eps({2, 2});
    for (double& v : eps.v) v = rng.normal();

    auto loss_graph = [&]() {
        Var xc = ad::constant(x), yc = ad::constant(y);
        Var rho = p.classify(xc);
        auto [mu, lv] = p.encode(xc, yc);
        Var z = reparam_sample(mu, lv, eps);
        Var lam = p.decode(z, yc);
        Var gamma = p.noisy_classify(xc, yc);
        Var l1 = ad::sum(ad::mul(ad::sub(lam, xc), ad::sub(lam, xc)));
        Var l2 = ad::sum(ad::mul(rho, rho));
        Var l3 = ad::sum(ad::mul(gamma, yc));
        return ad::add(ad::add(l1, l2), l3);
    };

    auto params = p.all_params();
    Var loss = loss_graph();
    ad::backward(loss);

    Rng pick(15);
    for (int trial = 0; trial < 60; ++trial) {
        auto& pv = params[pick.below(params.size())];
        std::size_t j = pick.below(pv.val().numel());
        double orig = pv.node->value.v[j], h = 1e-6;
        pv.node->value.v[j] = orig + h;
        double hi = loss_graph().val().v[0];
        pv.node->value.v[j] = orig - h;
        double lo = loss_graph().val().v[0];
        pv.node->value.v[j] = orig;
        double fd = (hi - lo) / (2.0 * h);
        double an = pv.grad().v[j];
        CHECK(std::abs(fd - an) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
}
