#include "igm/networks.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace igm::net {

using ad::Var;

void ArchConfig::validate() const {
    if (height == 0 || width == 0 || channels == 0 || num_classes < 2 || d_z == 0)
        throw std::invalid_argument("ArchConfig: bad dimensions");
    if (cls_widths.empty() || enc_widths.empty() || dec_widths.empty())
        throw std::invalid_argument("ArchConfig: empty width list");
    std::size_t depth = dec_widths.size();
    std::size_t div = std::size_t{1} << depth;
    if (height % div != 0 || width % div != 0)
        throw std::invalid_argument("ArchConfig: image size not divisible by 2^depth");
    std::size_t ediv = std::size_t{1} << enc_widths.size();
    std::size_t cdiv = std::size_t{1} << cls_widths.size();
    if (height % ediv != 0 || width % ediv != 0 || height % cdiv != 0 || width % cdiv != 0)
        throw std::invalid_argument("ArchConfig: image size not divisible by 2^depth");
}

ArchConfig ArchConfig::small_profile(std::size_t h, std::size_t w, std::size_t c,
                                     std::size_t k, std::size_t dz) {
    ArchConfig a;
    a.height = h; a.width = w; a.channels = c; a.num_classes = k; a.d_z = dz;
    a.cls_widths = {8, 16};
    a.enc_widths = {8, 16};
    a.dec_widths = {16, 8};
    a.validate();
    return a;
}

ArchConfig ArchConfig::reference_profile(std::size_t h, std::size_t w, std::size_t c,
                                     std::size_t k, std::size_t dz) {
    ArchConfig a;
    a.height = h; a.width = w; a.channels = c; a.num_classes = k; a.d_z = dz;
    a.cls_widths = {32, 64, 128, 256};
    a.enc_widths = {32, 64, 128, 256};
    a.dec_widths = {256, 128, 64, 32};
    a.validate();
    return a;
}

std::string ArchConfig::to_json() const {
    nlohmann::ordered_json j;
    j["height"] = height;
    j["width"] = width;
    j["channels"] = channels;
    j["num_classes"] = num_classes;
    j["d_z"] = d_z;
    j["cls_widths"] = cls_widths;
    j["enc_widths"] = enc_widths;
    j["dec_widths"] = dec_widths;
    return j.dump();
}

ArchConfig ArchConfig::from_json(const std::string& s) {
    nlohmann::json j = nlohmann::json::parse(s);
    ArchConfig a;
    a.height = j.at("height").get<std::size_t>();
    a.width = j.at("width").get<std::size_t>();
    a.channels = j.at("channels").get<std::size_t>();
    a.num_classes = j.at("num_classes").get<std::size_t>();
    a.d_z = j.at("d_z").get<std::size_t>();
    a.cls_widths = j.at("cls_widths").get<std::vector<std::size_t>>();
    a.enc_widths = j.at("enc_widths").get<std::vector<std::size_t>>();
    a.dec_widths = j.at("dec_widths").get<std::vector<std::size_t>>();
    a.validate();
    return a;
}

namespace {

Tensor he_init(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& x : t.v) x = std * rng.normal();
    return t;
}

ConvLayer make_conv(std::size_t in_c, std::size_t out_c, Rng& rng) {
    ConvLayer l;
    l.spec = ad::ConvSpec{3, 2, 1};
    l.w = ad::param(he_init({out_c, in_c, 3, 3}, in_c * 9, rng));
    l.b = ad::param(Tensor::zeros({out_c}));
    return l;
}

ConvLayer make_deconv(std::size_t in_c, std::size_t out_c, Rng& rng) {
    ConvLayer l;
    l.spec = ad::ConvSpec{4, 2, 1};
    l.w = ad::param(he_init({in_c, out_c, 4, 4}, in_c * 16, rng));
    l.b = ad::param(Tensor::zeros({out_c}));
    return l;
}

LinearLayer make_linear(std::size_t in_d, std::size_t out_d, Rng& rng) {
    LinearLayer l;
    l.w = ad::param(he_init({in_d, out_d}, in_d, rng));
    l.b = ad::param(Tensor::zeros({out_d}));
    return l;
}

Var flatten(Var x) {
    const Tensor& v = x.val();
    std::size_t n = v.shape[0];
    return ad::reshape(x, {n, v.numel() / n});
}

Var conv_stack(const std::vector<ConvLayer>& convs, Var x) {
    for (const auto& l : convs) x = ad::relu(ad::conv2d(x, l.w, l.b, l.spec));
    return x;
}

Var with_label_channels(Var x, Var y) {
    const Tensor& v = x.val();
    std::size_t n = v.shape[0], c = v.shape[1], h = v.shape[2], w = v.shape[3];
    std::size_t k = y.val().cols();
    Var yc = ad::broadcast_channels(y, h, w);
    Var flat = ad::concat_cols(ad::reshape(x, {n, c * h * w}),
                               ad::reshape(yc, {n, k * h * w}));
    return ad::reshape(flat, {n, c + k, h, w});
}

}  // namespace

Var ConvClassifier::forward(Var x) const {
    Var f = flatten(conv_stack(convs, x));
    return ad::softmax_rows(head.forward(f));
}

std::pair<Var, Var> Encoder::forward(Var x) const {
    Var f = flatten(conv_stack(convs, x));
    Var out = head.forward(f);
    return {ad::slice_cols(out, 0, d_z), ad::slice_cols(out, d_z, 2 * d_z)};
}

Var Decoder::forward(Var z_and_y) const {
    std::size_t n = z_and_y.val().rows();
    Var h = ad::relu(stem.forward(z_and_y));
    Var x = ad::reshape(h, {n, c0, h0, w0});
    for (std::size_t i = 0; i < deconvs.size(); ++i) {
        const auto& l = deconvs[i];
        x = ad::conv_transpose2d(x, l.w, l.b, l.spec);
        if (i + 1 < deconvs.size()) x = ad::relu(x);
    }
    // squash into (0,1), then shrink to (eps, 1-eps) to respect the CB domain.
    // The clamp is much wider than the numerical floor in the distribution
    // code: near-saturated lambdas make the continuous-Bernoulli log-density
    // and its gradients through the label-conditioning channel arbitrarily
    // large, which destabilizes the joint objective on small datasets.
    const double eps = 1e-2;
    return ad::add_scalar(ad::scale(ad::sigmoid(x), 1.0 - 2.0 * eps), eps);
}

Var PeerNet::classify(Var x) const { return clean_classifier.forward(x); }

std::pair<Var, Var> PeerNet::encode(Var x, Var y) const {
    return encoder.forward(with_label_channels(x, y));
}

Var PeerNet::decode(Var z, Var y) const {
    return decoder.forward(ad::concat_cols(z, y));
}

Var PeerNet::noisy_classify(Var x, Var y) const {
    return noisy_head.forward(with_label_channels(x, y));
}

std::vector<Var> PeerNet::disc_params() const {
    std::vector<Var> ps;
    for (const auto& l : clean_classifier.convs) { ps.push_back(l.w); ps.push_back(l.b); }
    ps.push_back(clean_classifier.head.w);
    ps.push_back(clean_classifier.head.b);
    return ps;
}

std::vector<Var> PeerNet::gen_params() const {
    std::vector<Var> ps;
    for (const auto& l : encoder.convs) { ps.push_back(l.w); ps.push_back(l.b); }
    ps.push_back(encoder.head.w);
    ps.push_back(encoder.head.b);
    ps.push_back(decoder.stem.w);
    ps.push_back(decoder.stem.b);
    for (const auto& l : decoder.deconvs) { ps.push_back(l.w); ps.push_back(l.b); }
    for (const auto& l : noisy_head.convs) { ps.push_back(l.w); ps.push_back(l.b); }
    ps.push_back(noisy_head.head.w);
    ps.push_back(noisy_head.head.b);
    return ps;
}

std::vector<Var> PeerNet::all_params() const {
    auto ps = disc_params();
    auto gs = gen_params();
    ps.insert(ps.end(), gs.begin(), gs.end());
    return ps;
}

PeerNet build_peer(const ArchConfig& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(Rng::derive(seed, 0x7e));
    PeerNet p;
    p.arch = arch;
    const std::size_t h = arch.height, w = arch.width, c = arch.channels;
    const std::size_t k = arch.num_classes;

    auto build_cls = [&](std::size_t in_c) {
        ConvClassifier cls;
        std::size_t ch = in_c, sh = h, sw = w;
        for (std::size_t width : arch.cls_widths) {
            cls.convs.push_back(make_conv(ch, width, rng));
            ch = width; sh /= 2; sw /= 2;
        }
        cls.head = make_linear(ch * sh * sw, k, rng);
        return cls;
    };

    p.clean_classifier = build_cls(c);

    {
        std::size_t ch = c + k, sh = h, sw = w;
        for (std::size_t width : arch.enc_widths) {
            p.encoder.convs.push_back(make_conv(ch, width, rng));
            ch = width; sh /= 2; sw /= 2;
        }
        p.encoder.head = make_linear(ch * sh * sw, 2 * arch.d_z, rng);
        p.encoder.d_z = arch.d_z;
    }

    {
        std::size_t depth = arch.dec_widths.size();
        p.decoder.h0 = h >> depth;
        p.decoder.w0 = w >> depth;
        p.decoder.c0 = arch.dec_widths[0];
        p.decoder.stem =
            make_linear(arch.d_z + k, p.decoder.c0 * p.decoder.h0 * p.decoder.w0, rng);
        for (std::size_t i = 0; i < depth; ++i) {
            std::size_t out_c = (i + 1 < depth) ? arch.dec_widths[i + 1] : c;
            p.decoder.deconvs.push_back(make_deconv(arch.dec_widths[i], out_c, rng));
        }
    }

    p.noisy_head = build_cls(c + k);
    return p;
}

DualModel build_dual(const ArchConfig& arch, std::uint64_t seed) {
    DualModel d;
    d.net1 = build_peer(arch, Rng::derive(seed, 0xa1));
    d.net2 = build_peer(arch, Rng::derive(seed, 0xa2));
    return d;
}

Var reparam_sample(Var mu, Var logvar, const Tensor& eps) {
    if (!mu.val().same_shape(logvar.val()) || !mu.val().same_shape(eps))
        throw std::invalid_argument("reparam_sample: shape mismatch");
    Var sigma = ad::exp_(ad::scale(logvar, 0.5));
    return ad::add(mu, ad::mul(sigma, ad::constant(eps)));
}

std::vector<double> reparam_sample(const dist::DiagGaussian& g, std::uint64_t noise_seed) {
    g.validate();
    Rng rng(Rng::derive(noise_seed, 0xee));
    std::vector<double> z(g.mu.size());
    for (std::size_t j = 0; j < z.size(); ++j)
        z[j] = g.mu[j] + std::sqrt(g.var[j]) * rng.normal();
    return z;
}

}  // namespace igm::net
