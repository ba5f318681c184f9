#include "igm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "igm/rng.hpp"

namespace igm::data {

namespace fs = std::filesystem;

void ImageTensor::validate() const {
    if (height == 0 || width == 0 || channels == 0)
        throw std::invalid_argument("ImageTensor: dimensions must be positive");
    if (pixels.size() != height * width * channels)
        throw std::invalid_argument("ImageTensor: pixel count mismatch");
    for (double p : pixels)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::domain_error("ImageTensor: pixel outside [0,1]");
}

std::vector<double> NoisyDataset::one_hot(std::uint16_t label) const {
    if (label >= num_classes) throw std::invalid_argument("one_hot: label out of range");
    std::vector<double> y(num_classes, 0.0);
    y[label] = 1.0;
    return y;
}

void NoisyDataset::validate() const {
    if (images.size() != noisy_labels.size())
        throw std::invalid_argument("NoisyDataset: image/label count mismatch");
    if (clean_labels && clean_labels->size() != images.size())
        throw std::invalid_argument("NoisyDataset: clean label count mismatch");
    for (std::uint16_t l : noisy_labels)
        if (l >= num_classes) throw std::invalid_argument("NoisyDataset: label out of range");
    if (clean_labels)
        for (std::uint16_t l : *clean_labels)
            if (l >= num_classes)
                throw std::invalid_argument("NoisyDataset: clean label out of range");
    for (const auto& im : images) im.validate();
}

namespace {

double quantize(double x) {
    double q = std::round(std::clamp(x, 0.0, 1.0) * 255.0) / 255.0;
    return q;
}

// Shape stencils on a small grid centered at (cy, cx) with half-size r.
bool in_shape(int kind, int y, int x, int cy, int cx, int r) {
    int dy = y - cy, dx = x - cx;
    switch (kind % 4) {
        case 0:  // disk
            return dy * dy + dx * dx <= r * r;
        case 1:  // square
            return std::abs(dy) <= r && std::abs(dx) <= r;
        case 2:  // triangle (upward)
            return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2;
        default:  // cross
            return (std::abs(dy) <= r / 2 && std::abs(dx) <= r) ||
                   (std::abs(dx) <= r / 2 && std::abs(dy) <= r);
    }
}

}  // namespace

NoisyDataset synth_shapes(std::size_t num_classes, std::size_t n_per_class,
                          std::size_t side, std::uint64_t seed) {
    if (num_classes < 2 || num_classes > 16)
        throw std::invalid_argument("synth_shapes: num_classes must be in [2,16]");
    if (side < 8) throw std::invalid_argument("synth_shapes: side must be >= 8");
    if (n_per_class == 0) throw std::invalid_argument("synth_shapes: n_per_class must be positive");

    const std::size_t C = 3;
    NoisyDataset ds;
    ds.num_classes = num_classes;
    Rng rng(Rng::derive(seed, 0x5));

    // Classes combine shape identity with a vertical band. Shapes are centered
    // horizontally and symmetric under x-mirroring, so horizontal-flip
    // augmentation is label-preserving.
    const int bands = static_cast<int>((num_classes + 3) / 4);
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
        int band = static_cast<int>(cls / 4);
        int shape = static_cast<int>(cls % 4);
        int half = static_cast<int>(side) / 2;
        int qcy = static_cast<int>((2 * band + 1) * side / (2 * bands));
        int qcx = half;
        for (std::size_t i = 0; i < n_per_class; ++i) {
            ImageTensor im;
            im.height = side;
            im.width = side;
            im.channels = C;
            im.pixels.assign(side * side * C, 0.0);

            int cy = qcy + static_cast<int>(rng.below(3)) - 1;
            int cx = qcx + static_cast<int>(rng.below(3)) - 1;
            int r = half / 2 - 1 + static_cast<int>(rng.below(2));
            double fg = rng.uniform(0.65, 1.0);
            // tint is independent of class so color carries no label signal
            double tint[3] = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                              rng.uniform(-0.1, 0.1)};
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    bool inside = in_shape(shape, static_cast<int>(y),
                                           static_cast<int>(x), cy, cx, r);
                    for (std::size_t c = 0; c < C; ++c) {
                        double bg = rng.uniform(0.0, 0.25);
                        double val = inside ? fg + tint[c] : bg;
                        im.pixels[(y * side + x) * C + c] = quantize(val);
                    }
                }
            ds.images.push_back(std::move(im));
            ds.noisy_labels.push_back(static_cast<std::uint16_t>(cls));
        }
    }
    ds.clean_labels = ds.noisy_labels;

    ds.manifest = DatasetManifest{ds.size(), side, side, C, num_classes, "none", 0.0, seed};
    return ds;
}

NoisyDataset inject_idn(const NoisyDataset& ds, double rate, std::uint64_t seed,
                        double idn_std) {
    if (!ds.clean_labels)
        throw std::logic_error("inject_idn: dataset has no clean labels");
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("inject_idn: rate must be in [0,1)");

    NoisyDataset out = ds;
    out.noisy_labels = *ds.clean_labels;
    out.manifest.noise_kind = "idn";
    out.manifest.noise_rate = rate;
    out.manifest.seed = seed;
    if (rate == 0.0) return out;

    const std::size_t K = ds.num_classes;
    const std::size_t D = ds.images.empty() ? 0 : ds.images[0].pixels.size();

    // fixed random projection, drawn before any per-example randomness
    Rng rng(Rng::derive(seed, 0x1d));
    std::vector<double> proj(K * D);
    for (double& w : proj) w = rng.normal();

    for (std::size_t i = 0; i < ds.size(); ++i) {
        double qi = rng.truncated_normal(rate, idn_std, 0.0, 1.0);
        std::uint16_t truec = (*ds.clean_labels)[i];

        // 1/sqrt(D) keeps the scores O(1) so the softmax stays stochastic;
        // unscaled scores would make the flip target a deterministic (and
        // easily learnable) function of the image
        std::vector<double> score(K, 0.0);
        const auto& px = ds.images[i].pixels;
        const double inv = 1.0 / std::sqrt(static_cast<double>(D));
        for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            const double* w = proj.data() + k * D;
            for (std::size_t d = 0; d < D; ++d) s += w[d] * px[d];
            score[k] = s * inv;
        }

        // masked softmax over the wrong classes, scaled by the flip rate
        double mx = -1e300;
        for (std::size_t k = 0; k < K; ++k)
            if (k != truec) mx = std::max(mx, score[k]);
        double z = 0.0;
        std::vector<double> p(K, 0.0);
        for (std::size_t k = 0; k < K; ++k)
            if (k != truec) {
                p[k] = std::exp(score[k] - mx);
                z += p[k];
            }
        for (std::size_t k = 0; k < K; ++k)
            p[k] = (k == truec) ? 1.0 - qi : qi * p[k] / z;

        double u = rng.uniform();
        double acc = 0.0;
        std::uint16_t pick = truec;
        for (std::size_t k = 0; k < K; ++k) {
            acc += p[k];
            if (u < acc) {
                pick = static_cast<std::uint16_t>(k);
                break;
            }
        }
        out.noisy_labels[i] = pick;
    }
    return out;
}

NoisyDataset inject_symmetric(const NoisyDataset& ds, double rate, std::uint64_t seed) {
    if (!ds.clean_labels)
        throw std::logic_error("inject_symmetric: dataset has no clean labels");
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("inject_symmetric: rate must be in [0,1)");

    NoisyDataset out = ds;
    out.noisy_labels = *ds.clean_labels;
    out.manifest.noise_kind = "symmetric";
    out.manifest.noise_rate = rate;
    out.manifest.seed = seed;

    Rng rng(Rng::derive(seed, 0x2e));
    const std::size_t K = ds.num_classes;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (rng.uniform() >= rate) continue;
        std::uint16_t truec = (*ds.clean_labels)[i];
        auto off = static_cast<std::uint16_t>(rng.below(K - 1));
        out.noisy_labels[i] = off < truec ? off : static_cast<std::uint16_t>(off + 1);
    }
    return out;
}

double flip_fraction(const NoisyDataset& ds) {
    if (!ds.clean_labels)
        throw std::logic_error("flip_fraction: dataset has no clean labels");
    std::size_t flips = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.noisy_labels[i] != (*ds.clean_labels)[i]) ++flips;
    return ds.size() ? static_cast<double>(flips) / ds.size() : 0.0;
}

namespace {

void write_file(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + p.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + p.string());
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot open: " + p.string());
    auto sz = static_cast<std::size_t>(f.tellg());
    std::vector<std::uint8_t> bytes(sz);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(sz));
    if (!f) throw std::runtime_error("read failed: " + p.string());
    return bytes;
}

std::vector<std::uint8_t> labels_to_le(const std::vector<std::uint16_t>& labels) {
    std::vector<std::uint8_t> out(labels.size() * 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[2 * i] = static_cast<std::uint8_t>(labels[i] & 0xff);
        out[2 * i + 1] = static_cast<std::uint8_t>(labels[i] >> 8);
    }
    return out;
}

std::vector<std::uint16_t> labels_from_le(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 2 != 0) throw std::runtime_error("label file has odd size");
    std::vector<std::uint16_t> out(bytes.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    return out;
}

}  // namespace

void save_dataset(const NoisyDataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);

    nlohmann::ordered_json m;
    m["num_examples"] = ds.manifest.num_examples;
    m["height"] = ds.manifest.height;
    m["width"] = ds.manifest.width;
    m["channels"] = ds.manifest.channels;
    m["num_classes"] = ds.manifest.num_classes;
    m["noise_kind"] = ds.manifest.noise_kind;
    m["noise_rate"] = ds.manifest.noise_rate;
    m["seed"] = ds.manifest.seed;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest.json in " + dir);
    mf << m.dump(2) << "\n";

    std::vector<std::uint8_t> img;
    img.reserve(ds.size() * (ds.images.empty() ? 0 : ds.images[0].pixels.size()));
    for (const auto& im : ds.images)
        for (double p : im.pixels)
            img.push_back(static_cast<std::uint8_t>(std::lround(p * 255.0)));
    write_file(fs::path(dir) / "images.bin", img);
    write_file(fs::path(dir) / "labels_noisy.bin", labels_to_le(ds.noisy_labels));
    if (ds.clean_labels)
        write_file(fs::path(dir) / "labels_clean.bin", labels_to_le(*ds.clean_labels));
}

NoisyDataset load_dataset(const std::string& dir) {
    fs::path base(dir);
    std::ifstream mf(base / "manifest.json");
    if (!mf) throw std::runtime_error("missing manifest.json in " + dir);
    nlohmann::json m;
    try {
        mf >> m;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest.json: " + std::string(e.what()));
    }

    NoisyDataset ds;
    try {
        ds.manifest.num_examples = m.at("num_examples").get<std::size_t>();
        ds.manifest.height = m.at("height").get<std::size_t>();
        ds.manifest.width = m.at("width").get<std::size_t>();
        ds.manifest.channels = m.at("channels").get<std::size_t>();
        ds.manifest.num_classes = m.at("num_classes").get<std::size_t>();
        ds.manifest.noise_kind = m.at("noise_kind").get<std::string>();
        ds.manifest.noise_rate = m.at("noise_rate").get<double>();
        ds.manifest.seed = m.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest.json missing field: " + std::string(e.what()));
    }
    ds.num_classes = ds.manifest.num_classes;

    const std::size_t n = ds.manifest.num_examples;
    const std::size_t hwc =
        ds.manifest.height * ds.manifest.width * ds.manifest.channels;

    auto img = read_file(base / "images.bin");
    if (img.size() != n * hwc)
        throw std::runtime_error("images.bin size does not match manifest");
    ds.images.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& im = ds.images[i];
        im.height = ds.manifest.height;
        im.width = ds.manifest.width;
        im.channels = ds.manifest.channels;
        im.pixels.resize(hwc);
        for (std::size_t j = 0; j < hwc; ++j)
            im.pixels[j] = static_cast<double>(img[i * hwc + j]) / 255.0;
    }

    ds.noisy_labels = labels_from_le(read_file(base / "labels_noisy.bin"));
    if (ds.noisy_labels.size() != n)
        throw std::runtime_error("labels_noisy.bin size does not match manifest");
    if (fs::exists(base / "labels_clean.bin")) {
        ds.clean_labels = labels_from_le(read_file(base / "labels_clean.bin"));
        if (ds.clean_labels->size() != n)
            throw std::runtime_error("labels_clean.bin size does not match manifest");
    }
    ds.validate();
    return ds;
}

}  // namespace igm::data
