#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "igm/dataset.hpp"
#include "igm/rng.hpp"

using namespace igm;
using namespace igm::data;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
    fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

std::vector<bool> flip_mask(const NoisyDataset& ds) {
    std::vector<bool> m(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        m[i] = ds.noisy_labels[i] != (*ds.clean_labels)[i];
    return m;
}

}  // namespace

TEST_CASE("synth_shapes cardinality, balance, determinism") {
    NoisyDataset ds = synth_shapes(4, 10, 16, 7);
    CHECK(ds.size() == 40);
    CHECK(ds.num_classes == 4);
    std::vector<int> counts(4, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& im = ds.images[i];
        CHECK(im.height == 16);
        CHECK(im.width == 16);
        CHECK(im.channels == 3);
        ++counts[ds.noisy_labels[i]];
        CHECK(ds.noisy_labels[i] == (*ds.clean_labels)[i]);
    }
    for (int c : counts) CHECK(c == 10);

    NoisyDataset ds2 = synth_shapes(4, 10, 16, 7);
    REQUIRE(ds2.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds2.images[i].pixels == ds.images[i].pixels);
        CHECK(ds2.noisy_labels[i] == ds.noisy_labels[i]);
    }

    NoisyDataset ds3 = synth_shapes(4, 10, 16, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < ds.size() && !any_diff; ++i)
        any_diff = ds3.images[i].pixels != ds.images[i].pixels;
    CHECK(any_diff);
}

TEST_CASE("synth_shapes pixels are in [0,1] and 8-bit representable") {
    NoisyDataset ds = synth_shapes(3, 5, 16, 11);
    for (const auto& im : ds.images)
        for (double p : im.pixels) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            double q = p * 255.0;
            CHECK(std::abs(q - std::round(q)) < 1e-9);
        }
}

TEST_CASE("synth_shapes rejects invalid sizes") {
    CHECK_THROWS_AS(synth_shapes(1, 10, 16, 0), std::invalid_argument);
    CHECK_THROWS_AS(synth_shapes(17, 10, 16, 0), std::invalid_argument);
    CHECK_THROWS_AS(synth_shapes(4, 10, 7, 0), std::invalid_argument);
}

TEST_CASE("linear probe on raw pixels separates two classes (least-squares oracle)") {
    NoisyDataset ds = synth_shapes(2, 500, 16, 1);
    const std::size_t n = ds.size(), d = ds.images[0].pixels.size();
    Eigen::MatrixXd X(n, d + 1);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) X(i, j) = ds.images[i].pixels[j];
        X(i, d) = 1.0;
        y(i) = ds.noisy_labels[i] == 0 ? -1.0 : 1.0;
    }
    Eigen::VectorXd w = (X.transpose() * X +
                         1e-6 * Eigen::MatrixXd::Identity(d + 1, d + 1))
                            .ldlt()
                            .solve(X.transpose() * y);
    Eigen::VectorXd pred = X * w;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
        if ((pred(i) > 0) == (y(i) > 0)) ++correct;
    CHECK(static_cast<double>(correct) / n > 0.90);
}

TEST_CASE("inject_idn zero rate is the identity") {
    NoisyDataset ds = synth_shapes(4, 25, 16, 3);
    NoisyDataset noisy = inject_idn(ds, 0.0, 5);
    CHECK(noisy.noisy_labels == *ds.clean_labels);
    CHECK(noisy.manifest.noise_kind == "idn");
}

TEST_CASE("inject_idn empirical flip fraction near the target rate") {
    NoisyDataset ds = synth_shapes(4, 2500, 16, 2);
    NoisyDataset noisy = inject_idn(ds, 0.4, 9);
    double f = flip_fraction(noisy);
    CHECK(f > 0.38);
    CHECK(f < 0.42);
    // images and clean labels are untouched
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(noisy.images[i].pixels == ds.images[i].pixels);
    CHECK(*noisy.clean_labels == *ds.clean_labels);
}

TEST_CASE("inject_idn requires clean labels and a valid rate") {
    NoisyDataset ds = synth_shapes(4, 5, 16, 3);
    ds.clean_labels.reset();
    CHECK_THROWS_AS(inject_idn(ds, 0.2, 1), std::logic_error);
    NoisyDataset ok = synth_shapes(4, 5, 16, 3);
    CHECK_THROWS_AS(inject_idn(ok, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(inject_idn(ok, -0.1, 1), std::invalid_argument);
}

TEST_CASE("IDN flips move with the images, symmetric flips do not") {
    // Re-pair images with labels by reversing the image order while keeping the
    // labels in place. Instance-dependent flips must change; symmetric must not.
    NoisyDataset ds = synth_shapes(4, 100, 16, 6);
    NoisyDataset swapped = ds;
    std::reverse(swapped.images.begin(), swapped.images.end());

    NoisyDataset a = inject_idn(ds, 0.4, 21);
    NoisyDataset b = inject_idn(swapped, 0.4, 21);
    std::size_t idn_diff = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (a.noisy_labels[i] != b.noisy_labels[i]) ++idn_diff;
    CHECK(idn_diff > 0);

    NoisyDataset c = inject_symmetric(ds, 0.4, 21);
    NoisyDataset d = inject_symmetric(swapped, 0.4, 21);
    CHECK(c.noisy_labels == d.noisy_labels);
}

TEST_CASE("IDN flip targets depend on image content (permutation null)") {
    // Reconstruct the projection scores from the generator seed and compare the
    // mutual information between flip target and score argmax against a
    // label-permutation null distribution.
    NoisyDataset ds = synth_shapes(4, 500, 16, 4);
    const std::uint64_t seed = 33;
    NoisyDataset noisy = inject_idn(ds, 0.5, seed);

    const std::size_t K = 4, D = ds.images[0].pixels.size();
    Rng rng(Rng::derive(seed, 0x1d));
    std::vector<double> proj(K * D);
    for (double& w : proj) w = rng.normal();

    std::vector<int> target, guess;  // over flipped examples only
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::uint16_t truec = (*ds.clean_labels)[i];
        if (noisy.noisy_labels[i] == truec) continue;
        double best = -1e300;
        int arg = -1;
        for (std::size_t k = 0; k < K; ++k) {
            if (k == truec) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j)
                s += proj[k * D + j] * ds.images[i].pixels[j];
            if (s > best) { best = s; arg = static_cast<int>(k); }
        }
        target.push_back(noisy.noisy_labels[i]);
        guess.push_back(arg);
    }
    REQUIRE(target.size() > 100);

    auto mi = [&](const std::vector<int>& t, const std::vector<int>& g) {
        std::map<std::pair<int, int>, double> joint;
        std::map<int, double> pt, pg;
        double n = static_cast<double>(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            joint[{t[i], g[i]}] += 1.0 / n;
            pt[t[i]] += 1.0 / n;
            pg[g[i]] += 1.0 / n;
        }
        double m = 0.0;
        for (const auto& [k, p] : joint)
            m += p * std::log(p / (pt[k.first] * pg[k.second]));
        return m;
    };

    double observed = mi(target, guess);
    Rng perm_rng(77);
    std::vector<int> shuffled = guess;
    int exceed = 0;
    const int trials = 200;
    for (int r = 0; r < trials; ++r) {
        perm_rng.shuffle(shuffled.begin(), shuffled.end());
        if (mi(target, shuffled) >= observed) ++exceed;
    }
    CHECK(exceed == 0);  // p < 1/200: dependence is unmistakable
}

TEST_CASE("inject_symmetric rate, uniform target histogram (chi-square)") {
    NoisyDataset ds = synth_shapes(10, 1000, 16, 12);
    NoisyDataset zero = inject_symmetric(ds, 0.0, 4);
    CHECK(zero.noisy_labels == *ds.clean_labels);

    NoisyDataset noisy = inject_symmetric(ds, 0.5, 4);
    double f = flip_fraction(noisy);
    CHECK(f > 0.48);
    CHECK(f < 0.52);

    // among flipped examples, the target rank among the 9 wrong classes is
    // uniform: chi-square with 8 dof, critical value 20.09 at p = 0.01
    std::vector<double> counts(9, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::uint16_t truec = (*ds.clean_labels)[i], pick = noisy.noisy_labels[i];
        if (pick == truec) continue;
        counts[pick < truec ? pick : pick - 1] += 1.0;
        total += 1.0;
    }
    double expect = total / 9.0, chi2 = 0.0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < 20.09);
}

TEST_CASE("save/load round-trip is bit-exact") {
    fs::path dir = fresh_dir("igm_ds_roundtrip");
    NoisyDataset ds = inject_idn(synth_shapes(4, 12, 16, 9), 0.3, 13);
    save_dataset(ds, dir.string());
    NoisyDataset back = load_dataset(dir.string());
    CHECK(back.size() == ds.size());
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.noisy_labels == ds.noisy_labels);
    REQUIRE(back.clean_labels.has_value());
    CHECK(*back.clean_labels == *ds.clean_labels);
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(back.images[i].pixels == ds.images[i].pixels);
    CHECK(back.manifest.noise_kind == "idn");
    CHECK(back.manifest.noise_rate == ds.manifest.noise_rate);
    fs::remove_all(dir);
}

TEST_CASE("load rejects a manifest that disagrees with the payload") {
    fs::path dir = fresh_dir("igm_ds_tamper");
    NoisyDataset ds = synth_shapes(3, 4, 16, 2);
    save_dataset(ds, dir.string());
    {
        std::ifstream in(dir / "manifest.json");
        std::string s((std::istreambuf_iterator<char>(in)), {});
        auto pos = s.find("\"num_examples\": 12");
        REQUIRE(pos != std::string::npos);
        s.replace(pos, 18, "\"num_examples\": 13");
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << s;
    }
    CHECK_THROWS(load_dataset(dir.string()));
    fs::remove_all(dir);
}

TEST_CASE("datasets without clean labels stay without them") {
    fs::path dir = fresh_dir("igm_ds_noclean");
    NoisyDataset ds = synth_shapes(4, 6, 16, 5);
    ds.clean_labels.reset();
    save_dataset(ds, dir.string());
    NoisyDataset back = load_dataset(dir.string());
    CHECK_FALSE(back.clean_labels.has_value());
    CHECK_THROWS(flip_fraction(back));
    fs::remove_all(dir);
}

TEST_CASE("load of a missing directory fails cleanly") {
    CHECK_THROWS(load_dataset("/nonexistent/igm_nowhere"));
}
