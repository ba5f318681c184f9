#include "igm/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "igm/distributions.hpp"

namespace igm::ad {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

namespace {

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents,
                                std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(bw);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.val().same_shape(b.val()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(n);
}

Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    n->ensure_grad();
    return Var(n);
}

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += b.val().v[i];
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            Tensor& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
        }
    }));
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] -= b.val().v[i];
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] -= n.grad.v[i];
        }
    }));
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] *= b.val().v[i];
    return Var(make_node(std::move(out), {a.node, b.node}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * bv.v[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * av.v[i];
        }
    }));
}

Var scale(Var a, double s) {
    Tensor out = a.val();
    for (double& x : out.v) x *= s;
    return Var(make_node(std::move(out), {a.node}, [s](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += s * n.grad.v[i];
    }));
}

Var add_scalar(Var a, double s) {
    Tensor out = a.val();
    for (double& x : out.v) x += s;
    return Var(make_node(std::move(out), {a.node}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
    }));
}

Var relu(Var a) {
    Tensor out = a.val();
    for (double& x : out.v) x = x > 0.0 ? x : 0.0;
    return Var(make_node(std::move(out), {a.node}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (av.v[i] > 0.0) g.v[i] += n.grad.v[i];
    }));
}

Var sigmoid(Var a) {
    Tensor out = a.val();
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    Tensor saved = out;
    return Var(make_node(std::move(out), {a.node}, [saved](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            double y = saved.v[i];
            g.v[i] += n.grad.v[i] * y * (1.0 - y);
        }
    }));
}

Var exp_(Var a) {
    Tensor out = a.val();
    for (double& x : out.v) x = std::exp(x);
    Tensor saved = out;
    return Var(make_node(std::move(out), {a.node}, [saved](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] * saved.v[i];
    }));
}

Var log_(Var a) {
    Tensor out = a.val();
    for (double& x : out.v) {
        if (!(x > 0.0)) throw std::domain_error("log_: nonpositive input");
        x = std::log(x);
    }
    return Var(make_node(std::move(out), {a.node}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i] / av.v[i];
    }));
}

Var clamp_min(Var a, double lo) {
    Tensor out = a.val();
    for (double& x : out.v) x = x < lo ? lo : x;
    return Var(make_node(std::move(out), {a.node}, [lo](Node& n) {
        const Tensor& av = n.parents[0]->value;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (av.v[i] >= lo) g.v[i] += n.grad.v[i];
    }));
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.rows())
        throw std::invalid_argument("matmul: incompatible shapes");
    std::size_t n = av.rows(), m = av.cols(), p = bv.cols();
    Tensor out({n, p});
    MapM(out.v.data(), n, p) =
        MapCM(av.v.data(), n, m) * MapCM(bv.v.data(), m, p);
    return Var(make_node(std::move(out), {a.node, b.node}, [n, m, p](Node& nd) {
        MapCM go(nd.grad.v.data(), n, p);
        const Tensor& av2 = nd.parents[0]->value;
        const Tensor& bv2 = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            Tensor& ga = nd.parents[0]->ensure_grad();
            MapM(ga.v.data(), n, m) += go * MapCM(bv2.v.data(), m, p).transpose();
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& gb = nd.parents[1]->ensure_grad();
            MapM(gb.v.data(), m, p) += MapCM(av2.v.data(), n, m).transpose() * go;
        }
    }));
}

Var add_rowvec(Var m, Var b) {
    const Tensor& mv = m.val();
    const Tensor& bv = b.val();
    if (mv.ndim() != 2 || bv.numel() != mv.cols())
        throw std::invalid_argument("add_rowvec: incompatible shapes");
    std::size_t n = mv.rows(), d = mv.cols();
    Tensor out = mv;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out.v[r * d + c] += bv.v[c];
    return Var(make_node(std::move(out), {m.node, b.node}, [n, d](Node& nd) {
        if (nd.parents[0]->requires_grad) {
            Tensor& g = nd.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += nd.grad.v[i];
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& g = nd.parents[1]->ensure_grad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) g.v[c] += nd.grad.v[r * d + c];
        }
    }));
}

Var softmax_rows(Var a) {
    const Tensor& av = a.val();
    if (av.ndim() != 2) throw std::invalid_argument("softmax_rows: expects 2-D");
    std::size_t n = av.rows(), k = av.cols();
    Tensor out = av;
    for (std::size_t r = 0; r < n; ++r) {
        double mx = out.v[r * k];
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, out.v[r * k + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            out.v[r * k + c] = std::exp(out.v[r * k + c] - mx);
            z += out.v[r * k + c];
        }
        for (std::size_t c = 0; c < k; ++c) out.v[r * k + c] /= z;
    }
    Tensor saved = out;
    return Var(make_node(std::move(out), {a.node}, [saved, n, k](Node& nd) {
        Tensor& g = nd.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < k; ++c)
                dot += nd.grad.v[r * k + c] * saved.v[r * k + c];
            for (std::size_t c = 0; c < k; ++c)
                g.v[r * k + c] += saved.v[r * k + c] * (nd.grad.v[r * k + c] - dot);
        }
    }));
}

Var broadcast_channels(Var y, std::size_t h, std::size_t w) {
    const Tensor& yv = y.val();
    if (yv.ndim() != 2) throw std::invalid_argument("broadcast_channels: expects 2-D");
    std::size_t n = yv.rows(), k = yv.cols(), spat = h * w;
    Tensor out({n, k, h, w});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double val = yv.v[i * k + c];
            double* o = out.v.data() + (i * k + c) * spat;
            for (std::size_t q = 0; q < spat; ++q) o[q] = val;
        }
    return Var(make_node(std::move(out), {y.node}, [n, k, spat](Node& nd) {
        Tensor& g = nd.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c) {
                const double* gp = nd.grad.v.data() + (i * k + c) * spat;
                double acc = 0.0;
                for (std::size_t q = 0; q < spat; ++q) acc += gp[q];
                g.v[i * k + c] += acc;
            }
    }));
}

Var sum(Var a) {
    double acc = 0.0;
    for (double x : a.val().v) acc += x;
    return Var(make_node(Tensor::scalar(acc), {a.node}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (double& x : g.v) x += n.grad.v[0];
    }));
}

Var mean_all(Var a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.val().numel()));
}

Var sum_rows_to_row(Var a) {
    const Tensor& av = a.val();
    if (av.ndim() != 2) throw std::invalid_argument("sum_rows_to_row: expects 2-D");
    std::size_t n = av.rows(), k = av.cols();
    Tensor out({1, k});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < k; ++c) out.v[c] += av.v[r * k + c];
    return Var(make_node(std::move(out), {a.node}, [n, k](Node& nd) {
        Tensor& g = nd.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < k; ++c) g.v[r * k + c] += nd.grad.v[c];
    }));
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Tensor out = a.val().reshaped(shape);
    return Var(make_node(std::move(out), {a.node}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g.v[i] += n.grad.v[i];
    }));
}

Var concat_cols(Var a, Var b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.rows() != bv.rows())
        throw std::invalid_argument("concat_cols: incompatible shapes");
    std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor out({n, ca + cb});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out.v[r * (ca + cb) + c] = av.v[r * ca + c];
        for (std::size_t c = 0; c < cb; ++c) out.v[r * (ca + cb) + ca + c] = bv.v[r * cb + c];
    }
    return Var(make_node(std::move(out), {a.node, b.node}, [n, ca, cb](Node& nd) {
        if (nd.parents[0]->requires_grad) {
            Tensor& g = nd.parents[0]->ensure_grad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < ca; ++c)
                    g.v[r * ca + c] += nd.grad.v[r * (ca + cb) + c];
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& g = nd.parents[1]->ensure_grad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < cb; ++c)
                    g.v[r * cb + c] += nd.grad.v[r * (ca + cb) + ca + c];
        }
    }));
}

Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    const Tensor& av = a.val();
    if (av.ndim() != 2 || c1 > av.cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range");
    std::size_t n = av.rows(), d = av.cols(), w = c1 - c0;
    Tensor out({n, w});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) out.v[r * w + c] = av.v[r * d + c0 + c];
    return Var(make_node(std::move(out), {a.node}, [n, d, w, c0](Node& nd) {
        Tensor& g = nd.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c)
                g.v[r * d + c0 + c] += nd.grad.v[r * w + c];
    }));
}

namespace {

struct ConvDims {
    std::size_t n, c, h, w, oc, k, s, p, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, const ConvSpec& cs) {
    if (x.ndim() != 4 || wt.ndim() != 4)
        throw std::invalid_argument("conv2d: expects 4-D input and weight");
    ConvDims d;
    d.n = x.shape[0]; d.c = x.shape[1]; d.h = x.shape[2]; d.w = x.shape[3];
    d.oc = wt.shape[0]; d.k = cs.kernel; d.s = cs.stride; d.p = cs.pad;
    if (wt.shape[1] != d.c || wt.shape[2] != d.k || wt.shape[3] != d.k)
        throw std::invalid_argument("conv2d: weight shape mismatch");
    if (d.h + 2 * d.p < d.k || d.w + 2 * d.p < d.k)
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    d.oh = (d.h + 2 * d.p - d.k) / d.s + 1;
    d.ow = (d.w + 2 * d.p - d.k) / d.s + 1;
    return d;
}

// col(ckk, oh*ow) from one image (c, h, w)
void im2col(const double* img, std::size_t C, std::size_t H, std::size_t W,
            std::size_t K, std::size_t S, std::size_t P, std::size_t OH,
            std::size_t OW, double* col) {
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj) {
                std::size_t row = (c * K + ki) * K + kj;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    long ih = static_cast<long>(oh * S + ki) - static_cast<long>(P);
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        long iw = static_cast<long>(ow * S + kj) - static_cast<long>(P);
                        double val = 0.0;
                        if (ih >= 0 && ih < static_cast<long>(H) && iw >= 0 &&
                            iw < static_cast<long>(W))
                            val = img[(c * H + ih) * W + iw];
                        col[row * OH * OW + oh * OW + ow] = val;
                    }
                }
            }
}

// adjoint of im2col: scatter-add col back into the image
void col2im(const double* col, std::size_t C, std::size_t H, std::size_t W,
            std::size_t K, std::size_t S, std::size_t P, std::size_t OH,
            std::size_t OW, double* img) {
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj) {
                std::size_t row = (c * K + ki) * K + kj;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    long ih = static_cast<long>(oh * S + ki) - static_cast<long>(P);
                    if (ih < 0 || ih >= static_cast<long>(H)) continue;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        long iw = static_cast<long>(ow * S + kj) - static_cast<long>(P);
                        if (iw < 0 || iw >= static_cast<long>(W)) continue;
                        img[(c * H + ih) * W + iw] += col[row * OH * OW + oh * OW + ow];
                    }
                }
            }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, const ConvSpec& cs) {
    ConvDims d = conv_dims(x.val(), w.val(), cs);
    if (b.val().numel() != d.oc) throw std::invalid_argument("conv2d: bias size mismatch");
    std::size_t ckk = d.c * d.k * d.k, spat = d.oh * d.ow;

    Tensor out({d.n, d.oc, d.oh, d.ow});
    auto cols = std::make_shared<std::vector<double>>(d.n * ckk * spat);
    MapCM wmat(w.val().v.data(), d.oc, ckk);
    for (std::size_t i = 0; i < d.n; ++i) {
        double* col = cols->data() + i * ckk * spat;
        im2col(x.val().v.data() + i * d.c * d.h * d.w, d.c, d.h, d.w, d.k, d.s, d.p,
               d.oh, d.ow, col);
        MapM om(out.v.data() + i * d.oc * spat, d.oc, spat);
        om = wmat * MapCM(col, ckk, spat);
        for (std::size_t c = 0; c < d.oc; ++c)
            om.row(c).array() += b.val().v[c];
    }

    return Var(make_node(std::move(out), {x.node, w.node, b.node}, [d, ckk, spat,
                                                                    cols](Node& nd) {
        const Tensor& wv = nd.parents[1]->value;
        for (std::size_t i = 0; i < d.n; ++i) {
            MapCM go(nd.grad.v.data() + i * d.oc * spat, d.oc, spat);
            MapCM col(cols->data() + i * ckk * spat, ckk, spat);
            if (nd.parents[1]->requires_grad) {
                Tensor& gw = nd.parents[1]->ensure_grad();
                MapM(gw.v.data(), d.oc, ckk) += go * col.transpose();
            }
            if (nd.parents[2]->requires_grad) {
                Tensor& gb = nd.parents[2]->ensure_grad();
                for (std::size_t c = 0; c < d.oc; ++c) gb.v[c] += go.row(c).sum();
            }
            if (nd.parents[0]->requires_grad) {
                Tensor& gx = nd.parents[0]->ensure_grad();
                MatRM dcol = MapCM(wv.v.data(), d.oc, ckk).transpose() * go;
                col2im(dcol.data(), d.c, d.h, d.w, d.k, d.s, d.p, d.oh, d.ow,
                       gx.v.data() + i * d.c * d.h * d.w);
            }
        }
    }));
}

Var conv_transpose2d(Var x, Var w, Var b, const ConvSpec& cs) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    if (xv.ndim() != 4 || wv.ndim() != 4)
        throw std::invalid_argument("conv_transpose2d: expects 4-D input and weight");
    std::size_t n = xv.shape[0], ic = xv.shape[1], h = xv.shape[2], ww = xv.shape[3];
    std::size_t oc = wv.shape[1], k = cs.kernel, s = cs.stride, p = cs.pad;
    if (wv.shape[0] != ic || wv.shape[2] != k || wv.shape[3] != k)
        throw std::invalid_argument("conv_transpose2d: weight shape mismatch");
    if ((h - 1) * s + k < 2 * p)
        throw std::invalid_argument("conv_transpose2d: bad geometry");
    std::size_t oh = (h - 1) * s + k - 2 * p;
    std::size_t ow = (ww - 1) * s + k - 2 * p;
    if (b.val().numel() != oc)
        throw std::invalid_argument("conv_transpose2d: bias size mismatch");

    std::size_t okk = oc * k * k, inspat = h * ww;
    Tensor out({n, oc, oh, ow});
    MapCM wmat(wv.v.data(), ic, okk);
    for (std::size_t i = 0; i < n; ++i) {
        MapCM xm(xv.v.data() + i * ic * inspat, ic, inspat);
        MatRM colmat = wmat.transpose() * xm;  // (okk, inspat)
        double* op = out.v.data() + i * oc * oh * ow;
        col2im(colmat.data(), oc, oh, ow, k, s, p, h, ww, op);
        for (std::size_t c = 0; c < oc; ++c)
            for (std::size_t q = 0; q < oh * ow; ++q) op[c * oh * ow + q] += b.val().v[c];
    }

    return Var(make_node(
        std::move(out), {x.node, w.node, b.node},
        [n, ic, h, ww, oc, k, s, p, oh, ow, okk, inspat](Node& nd) {
            const Tensor& wv2 = nd.parents[1]->value;
            const Tensor& xv2 = nd.parents[0]->value;
            std::vector<double> dcol(okk * inspat);
            for (std::size_t i = 0; i < n; ++i) {
                im2col(nd.grad.v.data() + i * oc * oh * ow, oc, oh, ow, k, s, p, h, ww,
                       dcol.data());
                MapCM dcolm(dcol.data(), okk, inspat);
                if (nd.parents[0]->requires_grad) {
                    Tensor& gx = nd.parents[0]->ensure_grad();
                    MapM(gx.v.data() + i * ic * inspat, ic, inspat) +=
                        MapCM(wv2.v.data(), ic, okk) * dcolm;
                }
                if (nd.parents[1]->requires_grad) {
                    Tensor& gw = nd.parents[1]->ensure_grad();
                    MapM(gw.v.data(), ic, okk) +=
                        MapCM(xv2.v.data() + i * ic * inspat, ic, inspat) *
                        dcolm.transpose();
                }
                if (nd.parents[2]->requires_grad) {
                    Tensor& gb = nd.parents[2]->ensure_grad();
                    const double* gp = nd.grad.v.data() + i * oc * oh * ow;
                    for (std::size_t c = 0; c < oc; ++c)
                        for (std::size_t q = 0; q < oh * ow; ++q)
                            gb.v[c] += gp[c * oh * ow + q];
                }
            }
        }));
}

Var cb_log_prob_sum(const Tensor& x, Var lam) {
    if (!x.same_shape(lam.val()))
        throw std::invalid_argument("cb_log_prob_sum: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i)
        acc += dist::cb_log_prob(x.v[i], lam.val().v[i]);
    Tensor xc = x;
    return Var(make_node(Tensor::scalar(acc), {lam.node}, [xc](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const Tensor& lv = n.parents[0]->value;
        for (std::size_t i = 0; i < g.numel(); ++i) {
            double l = lv.v[i];
            double d = dist::cb_log_norm_const_dlam(l) + xc.v[i] / l -
                       (1.0 - xc.v[i]) / (1.0 - l);
            g.v[i] += n.grad.v[0] * d;
        }
    }));
}

void backward(Var root) {
    if (!root.defined() || root.val().numel() != 1)
        throw std::invalid_argument("backward: root must be a defined scalar");
    if (!root.node->requires_grad) return;

    // iterative DFS topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node.get(), 0}};
    while (!stack.empty()) {
        auto& [nd, idx] = stack.back();
        if (idx == 0 && done.count(nd)) {
            stack.pop_back();
            continue;
        }
        if (idx < nd->parents.size()) {
            Node* par = nd->parents[idx++].get();
            if (par->requires_grad && !done.count(par)) stack.push_back({par, 0});
        } else {
            if (done.insert(nd).second) order.push_back(nd);
            stack.pop_back();
        }
    }

    root.node->ensure_grad().v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* nd = *it;
        if (nd->backward_fn && nd->grad.numel() > 0) nd->backward_fn(*nd);
    }
}

}  // namespace igm::ad
