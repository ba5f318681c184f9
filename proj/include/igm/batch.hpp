#pragma once

#include <vector>

#include "igm/dataset.hpp"
#include "igm/tensor.hpp"

namespace igm::batch {

// (H,W,C) images -> one (N,C,H,W) batch tensor.
inline Tensor to_nchw(const data::NoisyDataset& ds, const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw std::invalid_argument("to_nchw: empty index set");
    const auto& first = ds.images.at(idx[0]);
    std::size_t h = first.height, w = first.width, c = first.channels;
    Tensor out({idx.size(), c, h, w});
    for (std::size_t n = 0; n < idx.size(); ++n) {
        const auto& im = ds.images.at(idx[n]);
        if (im.height != h || im.width != w || im.channels != c)
            throw std::invalid_argument("to_nchw: inhomogeneous image shapes");
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t ch = 0; ch < c; ++ch)
                    out.v[((n * c + ch) * h + y) * w + x] =
                        im.pixels[(y * w + x) * c + ch];
    }
    return out;
}

// One-hot rows (N,K) from the noisy labels at idx.
inline Tensor noisy_onehot(const data::NoisyDataset& ds,
                           const std::vector<std::size_t>& idx) {
    Tensor out({idx.size(), ds.num_classes});
    for (std::size_t n = 0; n < idx.size(); ++n)
        out.v[n * ds.num_classes + ds.noisy_labels.at(idx[n])] = 1.0;
    return out;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace igm::batch
