#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igm/autodiff.hpp"
#include "igm/distributions.hpp"
#include "igm/rng.hpp"
#include "igm/tensor.hpp"

namespace igm::net {

// Backbone geometry. Conv layers are 3x3 stride-2 pad-1 (halving), decoder
// layers 4x4 stride-2 pad-1 transposed convs (doubling), so height/width must
// be divisible by 2^depth.
struct ArchConfig {
    std::size_t height = 16, width = 16, channels = 3;
    std::size_t num_classes = 4;
    std::size_t d_z = 8;
    std::vector<std::size_t> cls_widths = {8, 16};   // clean + noisy classifiers
    std::vector<std::size_t> enc_widths = {8, 16};
    std::vector<std::size_t> dec_widths = {16, 8};

    static ArchConfig small_profile(std::size_t h, std::size_t w, std::size_t c,
                                    std::size_t k, std::size_t dz);
    static ArchConfig reference_profile(std::size_t h, std::size_t w, std::size_t c,
                                    std::size_t k, std::size_t dz);
    void validate() const;
    bool operator==(const ArchConfig&) const = default;

    std::string to_json() const;
    static ArchConfig from_json(const std::string& s);
};

struct ConvLayer {
    ad::Var w, b;
    ad::ConvSpec spec;
};

struct LinearLayer {
    ad::Var w, b;  // (in, out), (out)
    ad::Var forward(ad::Var x) const { return ad::add_rowvec(ad::matmul(x, w), b); }
};

// Conv stack + linear head; used for the clean classifier (input C channels)
// and the noisy-label head (input C+K channels).
struct ConvClassifier {
    std::vector<ConvLayer> convs;
    LinearLayer head;
    // x: (N, C_in, H, W) -> probability rows (N, K)
    ad::Var forward(ad::Var x) const;
};

struct Encoder {
    std::vector<ConvLayer> convs;
    LinearLayer head;  // -> (N, 2*d_z): mu then logvar
    std::size_t d_z = 0;
    // returns {mu, logvar}
    std::pair<ad::Var, ad::Var> forward(ad::Var x_with_label_channels) const;
};

struct Decoder {
    LinearLayer stem;  // (d_z+K) -> widths[0]*h0*w0
    std::vector<ConvLayer> deconvs;
    std::size_t h0 = 0, w0 = 0, c0 = 0;
    // z_and_y: (N, d_z+K) -> lambda (N, C, H, W), entries in (eps, 1-eps)
    ad::Var forward(ad::Var z_and_y) const;
};

// One of the two peer models: q(Y|X), q(Z|X,Y), p(X|Z,Y), p(Yhat|X,Y).
struct PeerNet {
    ArchConfig arch;
    ConvClassifier clean_classifier;
    Encoder encoder;
    Decoder decoder;
    ConvClassifier noisy_head;

    // q(Y|X): x (N,C,H,W) -> (N,K)
    ad::Var classify(ad::Var x) const;
    // q(Z|X,Y): y is (N,K), possibly soft -> {mu, logvar}
    std::pair<ad::Var, ad::Var> encode(ad::Var x, ad::Var y) const;
    // p(X|Z,Y): z (N,d_z), y (N,K) -> lambda (N,C,H,W)
    ad::Var decode(ad::Var z, ad::Var y) const;
    // p(Yhat|X,Y): -> (N,K)
    ad::Var noisy_classify(ad::Var x, ad::Var y) const;

    std::vector<ad::Var> disc_params() const;  // clean classifier
    std::vector<ad::Var> gen_params() const;   // encoder + decoder + noisy head
    std::vector<ad::Var> all_params() const;
};

struct DualModel {
    PeerNet net1, net2;
};

PeerNet build_peer(const ArchConfig& arch, std::uint64_t seed);
DualModel build_dual(const ArchConfig& arch, std::uint64_t seed);

// z = mu + sigma .* eps with eps ~ N(0, I); the graph version used in training.
ad::Var reparam_sample(ad::Var mu, ad::Var logvar, const Tensor& eps);

// Plain closed-form version on a DiagGaussian, for callers outside the graph.
std::vector<double> reparam_sample(const dist::DiagGaussian& g, std::uint64_t noise_seed);

}  // namespace igm::net
