#include "igm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "igm/batch.hpp"

namespace igm::train {

namespace fs = std::filesystem;
using ad::Var;

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0 || d_z == 0)
        throw std::invalid_argument("TrainConfig: epochs/batch_size/d_z must be positive");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("TrainConfig: tau outside (0,1)");
    if (!(t_sharpen > 0.0)) throw std::invalid_argument("TrainConfig: t_sharpen must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("TrainConfig: alpha must be positive");
    if (!(lr_disc > 0.0) || !(lr_disc_main > 0.0) || !(lr_gen > 0.0))
        throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (!(weight_decay >= 0.0) || !(weight_decay_gen >= 0.0 && weight_decay_gen < 1.0))
        throw std::invalid_argument("TrainConfig: weight decay out of range");
    if (profile != "small" && profile != "reference")
        throw std::invalid_argument("TrainConfig: profile must be small or reference");
}

std::string TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["warmup_epochs"] = warmup_epochs;
    j["tau"] = tau;
    j["t_sharpen"] = t_sharpen;
    j["alpha"] = alpha;
    j["lambda_u"] = lambda_u;
    j["rampup"] = rampup;
    j["lambda_r"] = lambda_r;
    j["n_aug"] = n_aug;
    j["max_shift"] = max_shift;
    j["lr_disc"] = lr_disc;
    j["lr_disc_main"] = lr_disc_main;
    j["lr_gen"] = lr_gen;
    j["momentum"] = momentum;
    j["momentum_main"] = momentum_main;
    j["weight_decay"] = weight_decay;
    j["weight_decay_gen"] = weight_decay_gen;
    j["batch_size"] = batch_size;
    j["d_z"] = d_z;
    j["seed"] = seed;
    j["profile"] = profile;
    j["use_dividemix"] = use_dividemix;
    j["use_cb_recon"] = use_cb_recon;
    j["vi_on_labelled_only"] = vi_on_labelled_only;
    j["ensemble_eval"] = ensemble_eval;
    j["hard_label"] = hard_label;
    j["unified_optimizer"] = unified_optimizer;
    j["deterministic"] = deterministic;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& s) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(s);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config parse error: " + std::string(e.what()));
    }
    TrainConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("warmup_epochs", c.warmup_epochs);
    get("tau", c.tau);
    get("t_sharpen", c.t_sharpen);
    get("alpha", c.alpha);
    get("lambda_u", c.lambda_u);
    get("rampup", c.rampup);
    get("lambda_r", c.lambda_r);
    get("n_aug", c.n_aug);
    get("max_shift", c.max_shift);
    get("lr_disc", c.lr_disc);
    get("lr_disc_main", c.lr_disc_main);
    get("lr_gen", c.lr_gen);
    get("momentum", c.momentum);
    get("momentum_main", c.momentum_main);
    get("weight_decay", c.weight_decay);
    get("weight_decay_gen", c.weight_decay_gen);
    get("batch_size", c.batch_size);
    get("d_z", c.d_z);
    get("seed", c.seed);
    get("profile", c.profile);
    get("use_dividemix", c.use_dividemix);
    get("use_cb_recon", c.use_cb_recon);
    get("vi_on_labelled_only", c.vi_on_labelled_only);
    get("ensemble_eval", c.ensemble_eval);
    get("hard_label", c.hard_label);
    get("unified_optimizer", c.unified_optimizer);
    get("deterministic", c.deterministic);
    c.validate();
    return c;
}

net::ArchConfig TrainConfig::arch_for(const data::NoisyDataset& ds) const {
    if (ds.images.empty()) throw std::invalid_argument("arch_for: empty dataset");
    const auto& im = ds.images[0];
    if (profile == "reference")
        return net::ArchConfig::reference_profile(im.height, im.width, im.channels,
                                              ds.num_classes, d_z);
    return net::ArchConfig::small_profile(im.height, im.width, im.channels,
                                          ds.num_classes, d_z);
}

bool deterministic_mode(const TrainConfig& cfg) {
    const char* env = std::getenv("INSTANCEGM_DETERMINISTIC");
    return cfg.deterministic || (env && std::string(env) == "1");
}

void zero_grads(const std::vector<Var>& params) {
    for (const auto& p : params) {
        Tensor& g = p.grad();
        std::fill(g.v.begin(), g.v.end(), 0.0);
    }
}

void SgdMomentum::step(const std::vector<Var>& params) {
    if (velocity.empty())
        for (const auto& p : params) velocity.push_back(Tensor::zeros(p.val().shape));
    if (velocity.size() != params.size())
        throw std::logic_error("SgdMomentum: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].node->value;
        const Tensor& g = params[i].grad();
        Tensor& vel = velocity[i];
        for (std::size_t j = 0; j < w.numel(); ++j) {
            double grad = g.v[j] + weight_decay * w.v[j];
            vel.v[j] = momentum * vel.v[j] + grad;
            w.v[j] -= lr * vel.v[j];
        }
    }
}

void Adam::step(const std::vector<Var>& params) {
    if (m.empty())
        for (const auto& p : params) {
            m.push_back(Tensor::zeros(p.val().shape));
            v.push_back(Tensor::zeros(p.val().shape));
        }
    if (m.size() != params.size())
        throw std::logic_error("Adam: parameter count changed");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].node->value;
        const Tensor& g = params[i].grad();
        for (std::size_t j = 0; j < w.numel(); ++j) {
            m[i].v[j] = beta1 * m[i].v[j] + (1.0 - beta1) * g.v[j];
            v[i].v[j] = beta2 * v[i].v[j] + (1.0 - beta2) * g.v[j] * g.v[j];
            double mhat = m[i].v[j] / bc1;
            double vhat = v[i].v[j] / bc2;
            w.v[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            if (weight_decay > 0.0) w.v[j] *= 1.0 - weight_decay;
        }
    }
}

TrainState init_state(const net::ArchConfig& arch, const TrainConfig& cfg) {
    TrainState st;
    st.dual = net::build_dual(arch, cfg.seed);
    st.opt_disc1 = SgdMomentum{cfg.lr_disc, cfg.momentum, cfg.weight_decay, {}};
    st.opt_disc2 = SgdMomentum{cfg.lr_disc, cfg.momentum, cfg.weight_decay, {}};
    st.opt_gen1.lr = cfg.lr_gen;
    st.opt_gen2.lr = cfg.lr_gen;
    st.opt_gen1.weight_decay = cfg.weight_decay_gen;
    st.opt_gen2.weight_decay = cfg.weight_decay_gen;
    return st;
}

namespace {

void check_finite(double x, const char* what, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(x))
        throw std::runtime_error(std::string(what) + " is not finite at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch));
}

// -mean_i log p(yhat_i | x_i)
Var ce_loss(const net::PeerNet& net, const Tensor& x, const Tensor& yhat) {
    Var p = net.classify(ad::constant(x));
    return ad::scale(
        ad::sum(ad::mul(ad::constant(yhat),
                        ad::log_(ad::clamp_min(p, dist::kRhoEps)))),
        -1.0 / static_cast<double>(x.shape[0]));
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> idx,
                                                   std::size_t batch_size, Rng& rng) {
    rng.shuffle(idx.begin(), idx.end());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        std::size_t end = std::min(start + batch_size, idx.size());
        batches.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return batches;
}

struct ModelOpt {
    net::PeerNet* self;
    net::PeerNet* peer;
    SgdMomentum* disc;
    Adam* gen;
};

}  // namespace

void warmup(TrainState& st, const data::NoisyDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    for (std::size_t e = 0; e < cfg.warmup_epochs; ++e) {
        for (int k = 0; k < 2; ++k) {
            net::PeerNet& net = k == 0 ? st.dual.net1 : st.dual.net2;
            SgdMomentum& opt = k == 0 ? st.opt_disc1 : st.opt_disc2;
            Rng rng(Rng::derive(cfg.seed, 0x100 + e * 2 + static_cast<std::size_t>(k)));
            auto batches =
                make_batches(batch::all_indices(ds.size()), cfg.batch_size, rng);
            for (std::size_t b = 0; b < batches.size(); ++b) {
                Var loss = ce_loss(net, batch::to_nchw(ds, batches[b]),
                                   batch::noisy_onehot(ds, batches[b]));
                check_finite(loss.val().v[0], "warmup loss", e, b);
                zero_grads(net.disc_params());
                ad::backward(loss);
                opt.step(net.disc_params());
            }
        }
    }
    st.warmed_up = true;
}

double evaluate(const net::PeerNet& net, const data::NoisyDataset& test_ds) {
    if (!test_ds.clean_labels)
        throw std::logic_error("evaluate: test set has no clean labels");
    std::size_t correct = 0;
    const std::size_t k = test_ds.num_classes;
    const std::size_t bs = 128;
    for (std::size_t start = 0; start < test_ds.size(); start += bs) {
        std::size_t end = std::min(start + bs, test_ds.size());
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        Var p = net.classify(ad::constant(batch::to_nchw(test_ds, idx)));
        for (std::size_t n = 0; n < idx.size(); ++n) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (p.val().v[n * k + c] > p.val().v[n * k + best]) best = c;
            if (best == (*test_ds.clean_labels)[idx[n]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test_ds.size());
}

double evaluate(const net::DualModel& dual, const data::NoisyDataset& test_ds,
                bool ensemble) {
    if (!ensemble) return evaluate(dual.net1, test_ds);
    if (!test_ds.clean_labels)
        throw std::logic_error("evaluate: test set has no clean labels");
    std::size_t correct = 0;
    const std::size_t k = test_ds.num_classes;
    const std::size_t bs = 128;
    for (std::size_t start = 0; start < test_ds.size(); start += bs) {
        std::size_t end = std::min(start + bs, test_ds.size());
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        Tensor x = batch::to_nchw(test_ds, idx);
        Var p1 = dual.net1.classify(ad::constant(x));
        Var p2 = dual.net2.classify(ad::constant(x));
        for (std::size_t n = 0; n < idx.size(); ++n) {
            std::size_t best = 0;
            double bestv = -1.0;
            for (std::size_t c = 0; c < k; ++c) {
                double v = p1.val().v[n * k + c] + p2.val().v[n * k + c];
                if (v > bestv) { bestv = v; best = c; }
            }
            if (best == (*test_ds.clean_labels)[idx[n]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test_ds.size());
}

std::string EpochMetrics::to_json_line() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    auto vi_obj = [](const vi::ViTerms& t) {
        nlohmann::ordered_json o;
        o["recon_nll"] = t.recon_nll;
        o["noisy_nll"] = t.noisy_nll;
        o["kl_y"] = t.kl_y;
        o["kl_z"] = t.kl_z;
        o["total"] = t.total;
        return o;
    };
    j["vi1"] = vi_obj(vi1);
    j["vi2"] = vi_obj(vi2);
    j["dm1"] = {{"l_x", dm1_lx}, {"l_u", dm1_lu}, {"l_reg", dm1_lreg}};
    j["dm2"] = {{"l_x", dm2_lx}, {"l_u", dm2_lu}, {"l_reg", dm2_lreg}};
    j["test_accuracy"] = test_accuracy;
    j["codivide_auc1"] = codivide_auc1;
    j["codivide_auc2"] = codivide_auc2;
    j["wall_seconds"] = wall_seconds;
    return j.dump();
}

std::vector<EpochMetrics> train(TrainState& st, const data::NoisyDataset& ds,
                                const TrainConfig& cfg, const std::string& run_dir,
                                const data::NoisyDataset* test_ds,
                                std::size_t stop_epoch) {
    cfg.validate();
    ds.validate();
    if (!st.warmed_up && cfg.warmup_epochs > 0 && st.next_epoch == 0)
        throw std::logic_error("train: call warmup() first (or set warmup_epochs=0)");
    const bool det = deterministic_mode(cfg);

    std::ofstream metrics;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        if (st.next_epoch == 0) {
            std::ofstream cf(fs::path(run_dir) / "config.json");
            cf << cfg.to_json() << "\n";
        }
        metrics.open(fs::path(run_dir) / "metrics.jsonl",
                     st.next_epoch == 0 ? std::ios::trunc : std::ios::app);
        if (!metrics) throw std::runtime_error("cannot open metrics.jsonl in " + run_dir);
    }

    semisup::DmConfig dmc;
    dmc.t_sharpen = cfg.t_sharpen;
    dmc.alpha = cfg.alpha;
    dmc.lambda_u = cfg.lambda_u;
    dmc.lambda_r = cfg.lambda_r;
    dmc.rampup = cfg.rampup;
    dmc.n_aug = cfg.n_aug;
    dmc.max_shift = cfg.max_shift;

    vi::ViOptions vio;
    vio.hard_label = cfg.hard_label;
    vio.cb_recon = cfg.use_cb_recon;

    std::vector<EpochMetrics> out;
    const std::size_t last = std::min(cfg.epochs, stop_epoch);
    for (std::size_t e = st.next_epoch; e < last; ++e) {
        auto t0 = std::chrono::steady_clock::now();
        EpochMetrics em;
        em.epoch = e;

        // main-phase discriminative schedule: lr_disc_main, /10 at half the
        // total epochs; momentum_main replaces the warmup momentum. The
        // generative optimizer rate is decimated on the same schedule.
        double f = e >= cfg.epochs / 2 ? 0.1 : 1.0;
        st.opt_disc1.lr = cfg.lr_disc_main * f;
        st.opt_disc2.lr = cfg.lr_disc_main * f;
        st.opt_disc1.momentum = cfg.momentum_main;
        st.opt_disc2.momentum = cfg.momentum_main;
        st.opt_gen1.lr = cfg.lr_gen * f;
        st.opt_gen2.lr = cfg.lr_gen * f;

        ModelOpt models[2] = {
            {&st.dual.net1, &st.dual.net2, &st.opt_disc1, &st.opt_gen1},
            {&st.dual.net2, &st.dual.net1, &st.opt_disc2, &st.opt_gen2}};

        if (cfg.use_dividemix) {
            // Co-divide: each model is trained on the partition derived from
            // the PEER model's losses.
            codivide::CoDividePartition parts[2];
            for (int k = 0; k < 2; ++k) {
                auto losses = codivide::per_sample_ce(*models[k].self, ds);
                auto gmm = codivide::fit_gmm2(losses, 100, 1e-6,
                                              Rng::derive(cfg.seed, 0x300 + e));
                auto w = codivide::clean_posterior(gmm, losses);
                parts[k] = codivide::partition(w, cfg.tau);
                if (parts[k].labelled_idx.empty()) {
                    // before the loss modes separate no posterior may clear
                    // tau; fall back to the median so the labelled set is
                    // never empty
                    std::vector<double> srt = w;
                    std::nth_element(srt.begin(), srt.begin() + srt.size() / 2,
                                     srt.end());
                    double thr = std::clamp(srt[srt.size() / 2], 1e-12, 1.0 - 1e-12);
                    parts[k] = codivide::partition(w, thr);
                    if (parts[k].labelled_idx.empty()) {
                        parts[k].labelled_idx = batch::all_indices(ds.size());
                        parts[k].unlabelled_idx.clear();
                    }
                }
                if (ds.clean_labels && ds.manifest.noise_kind != "none") {
                    std::vector<bool> clean(ds.size());
                    for (std::size_t i = 0; i < ds.size(); ++i)
                        clean[i] = ds.noisy_labels[i] == (*ds.clean_labels)[i];
                    double a = codivide::auc(w, clean);
                    (k == 0 ? em.codivide_auc1 : em.codivide_auc2) = a;
                }
            }

            for (int k = 0; k < 2; ++k) {
                // cross-model partition
                const auto& part = parts[1 - k];
                if (part.labelled_idx.empty())
                    throw std::runtime_error(
                        "train: co-divide produced an empty labelled set at epoch " +
                        std::to_string(e) + " for model " + std::to_string(k + 1) +
                        "; widen tau");
                Rng rng(Rng::derive(cfg.seed, 0x400 + e * 2 + static_cast<std::size_t>(k)));
                auto lbatches = make_batches(part.labelled_idx, cfg.batch_size, rng);
                std::vector<std::size_t> uidx = part.unlabelled_idx;
                rng.shuffle(uidx.begin(), uidx.end());

                vi::ViTerms vi_acc;
                double lx_acc = 0, lu_acc = 0, lreg_acc = 0;
                std::size_t ucur = 0;
                for (std::size_t b = 0; b < lbatches.size(); ++b) {
                    semisup::DmBatchInput in;
                    in.x_l = batch::to_nchw(ds, lbatches[b]);
                    in.y_l = batch::noisy_onehot(ds, lbatches[b]);
                    for (std::size_t i : lbatches[b]) in.w_l.push_back(part.w[i]);
                    std::vector<std::size_t> ubatch;
                    for (std::size_t i = 0; i < lbatches[b].size() && !uidx.empty(); ++i) {
                        ubatch.push_back(uidx[ucur]);
                        ucur = (ucur + 1) % uidx.size();
                    }
                    if (!ubatch.empty()) in.x_u = batch::to_nchw(ds, ubatch);

                    auto dm = semisup::dividemix_loss(*models[k].self, *models[k].peer,
                                                      in, e, dmc, rng);

                    Tensor vix = in.x_l;
                    Tensor viy = in.y_l;
                    std::vector<std::size_t> vi_idx = lbatches[b];
                    if (!cfg.vi_on_labelled_only && !ubatch.empty()) {
                        vi_idx.insert(vi_idx.end(), ubatch.begin(), ubatch.end());
                        vix = batch::to_nchw(ds, vi_idx);
                        viy = batch::noisy_onehot(ds, vi_idx);
                    }
                    std::vector<std::uint64_t> tags(vi_idx.begin(), vi_idx.end());
                    auto viloss = vi::variational_free_energy(
                        vix, viy, *models[k].self, rng.next_u64(), vio, &tags);

                    Var loss = vi::total_loss(viloss.total, dm.total);
                    check_finite(loss.val().v[0], "training loss", e, b);

                    auto dparams = models[k].self->disc_params();
                    auto gparams = models[k].self->gen_params();
                    zero_grads(dparams);
                    zero_grads(gparams);
                    ad::backward(loss);
                    if (cfg.unified_optimizer) {
                        auto all = models[k].self->all_params();
                        models[k].disc->step(all);
                    } else {
                        models[k].disc->step(dparams);
                        models[k].gen->step(gparams);
                    }

                    vi_acc.recon_nll += viloss.terms.recon_nll;
                    vi_acc.noisy_nll += viloss.terms.noisy_nll;
                    vi_acc.kl_y += viloss.terms.kl_y;
                    vi_acc.kl_z += viloss.terms.kl_z;
                    vi_acc.total += viloss.terms.total;
                    lx_acc += dm.l_x;
                    lu_acc += dm.l_u;
                    lreg_acc += dm.l_reg;
                }
                double nb = static_cast<double>(lbatches.size());
                vi_acc.recon_nll /= nb; vi_acc.noisy_nll /= nb;
                vi_acc.kl_y /= nb; vi_acc.kl_z /= nb; vi_acc.total /= nb;
                if (k == 0) {
                    em.vi1 = vi_acc;
                    em.dm1_lx = lx_acc / nb; em.dm1_lu = lu_acc / nb;
                    em.dm1_lreg = lreg_acc / nb;
                } else {
                    em.vi2 = vi_acc;
                    em.dm2_lx = lx_acc / nb; em.dm2_lu = lu_acc / nb;
                    em.dm2_lreg = lreg_acc / nb;
                }
            }
        } else {
            // no-DivideMix ablation: plain CE on all noisy labels + the VI loss
            for (int k = 0; k < 2; ++k) {
                Rng rng(Rng::derive(cfg.seed, 0x500 + e * 2 + static_cast<std::size_t>(k)));
                auto batches =
                    make_batches(batch::all_indices(ds.size()), cfg.batch_size, rng);
                vi::ViTerms vi_acc;
                double ce_acc = 0;
                for (std::size_t b = 0; b < batches.size(); ++b) {
                    Tensor x = batch::to_nchw(ds, batches[b]);
                    Tensor y = batch::noisy_onehot(ds, batches[b]);
                    Var ce = ce_loss(*models[k].self, x, y);
                    std::vector<std::uint64_t> tags(batches[b].begin(), batches[b].end());
                    auto viloss = vi::variational_free_energy(
                        x, y, *models[k].self, rng.next_u64(), vio, &tags);
                    Var loss = vi::total_loss(viloss.total, ce);
                    check_finite(loss.val().v[0], "training loss", e, b);
                    auto dparams = models[k].self->disc_params();
                    auto gparams = models[k].self->gen_params();
                    zero_grads(dparams);
                    zero_grads(gparams);
                    ad::backward(loss);
                    if (cfg.unified_optimizer) {
                        models[k].disc->step(models[k].self->all_params());
                    } else {
                        models[k].disc->step(dparams);
                        models[k].gen->step(gparams);
                    }
                    ce_acc += ce.val().v[0];
                    vi_acc.recon_nll += viloss.terms.recon_nll;
                    vi_acc.noisy_nll += viloss.terms.noisy_nll;
                    vi_acc.kl_y += viloss.terms.kl_y;
                    vi_acc.kl_z += viloss.terms.kl_z;
                    vi_acc.total += viloss.terms.total;
                }
                double nb = static_cast<double>(batches.size());
                vi_acc.recon_nll /= nb; vi_acc.noisy_nll /= nb;
                vi_acc.kl_y /= nb; vi_acc.kl_z /= nb; vi_acc.total /= nb;
                if (k == 0) { em.vi1 = vi_acc; em.dm1_lx = ce_acc / nb; }
                else { em.vi2 = vi_acc; em.dm2_lx = ce_acc / nb; }
            }
        }

        if (test_ds) em.test_accuracy = evaluate(st.dual, *test_ds, cfg.ensemble_eval);
        auto t1 = std::chrono::steady_clock::now();
        em.wall_seconds =
            det ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
        if (metrics.is_open()) metrics << em.to_json_line() << "\n";
        out.push_back(em);
        st.next_epoch = e + 1;
    }

    if (!run_dir.empty()) {
        metrics.flush();
        checkpoint_save((fs::path(run_dir) / ("ckpt_" + std::to_string(st.next_epoch)))
                            .string(),
                        st, cfg);
    }
    return out;
}

namespace {

constexpr std::uint32_t kCkptVersion = 1;

// each group is a u64 tensor count followed by (u64 numel, doubles) records;
// optimizer state groups may be empty when no step has run yet
void write_group(std::ofstream& f, const std::vector<Tensor>& ts) {
    std::uint64_t cnt = ts.size();
    f.write(reinterpret_cast<const char*>(&cnt), sizeof cnt);
    for (const auto& t : ts) {
        std::uint64_t n = t.numel();
        f.write(reinterpret_cast<const char*>(&n), sizeof n);
        f.write(reinterpret_cast<const char*>(t.v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    }
}

std::vector<Tensor> read_group(std::ifstream& f) {
    std::uint64_t cnt = 0;
    f.read(reinterpret_cast<char*>(&cnt), sizeof cnt);
    if (!f) throw std::runtime_error("checkpoint: truncated group header");
    std::vector<Tensor> ts;
    for (std::uint64_t i = 0; i < cnt; ++i) {
        std::uint64_t n = 0;
        f.read(reinterpret_cast<char*>(&n), sizeof n);
        if (!f) throw std::runtime_error("checkpoint: truncated tensor header");
        Tensor t({static_cast<std::size_t>(n)});
        f.read(reinterpret_cast<char*>(t.v.data()),
               static_cast<std::streamsize>(n * sizeof(double)));
        if (!f) throw std::runtime_error("checkpoint: truncated tensor data");
        ts.push_back(std::move(t));
    }
    return ts;
}

std::vector<Tensor> param_values(const std::vector<Var>& ps) {
    std::vector<Tensor> ts;
    for (const auto& p : ps) ts.push_back(p.val());
    return ts;
}

}  // namespace

void checkpoint_save(const std::string& dir, const TrainState& st,
                     const TrainConfig& cfg) {
    fs::create_directories(dir);
    nlohmann::ordered_json j;
    j["version"] = kCkptVersion;
    j["epoch"] = st.next_epoch;
    j["warmed_up"] = st.warmed_up;
    j["seed"] = cfg.seed;
    j["arch"] = nlohmann::json::parse(st.dual.net1.arch.to_json());
    j["config"] = nlohmann::json::parse(cfg.to_json());
    j["adam_t1"] = st.opt_gen1.t;
    j["adam_t2"] = st.opt_gen2.t;
    std::ofstream jf(fs::path(dir) / "ckpt.json");
    jf << j.dump(2) << "\n";

    std::ofstream f(fs::path(dir) / "params.bin", std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint_save: cannot write params.bin");
    f.write("IGMCKPT1", 8);
    write_group(f, param_values(st.dual.net1.all_params()));
    write_group(f, param_values(st.dual.net2.all_params()));
    write_group(f, st.opt_disc1.velocity);
    write_group(f, st.opt_disc2.velocity);
    write_group(f, st.opt_gen1.m);
    write_group(f, st.opt_gen1.v);
    write_group(f, st.opt_gen2.m);
    write_group(f, st.opt_gen2.v);
    if (!f) throw std::runtime_error("checkpoint_save: write failed");
}

TrainState checkpoint_load(const std::string& dir, TrainConfig* cfg_out) {
    std::ifstream jf(fs::path(dir) / "ckpt.json");
    if (!jf) throw std::runtime_error("checkpoint_load: missing ckpt.json in " + dir);
    nlohmann::json j;
    try {
        jf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint_load: malformed ckpt.json: " +
                                 std::string(e.what()));
    }
    if (!j.contains("version") || j.at("version").get<std::uint32_t>() != kCkptVersion)
        throw std::runtime_error("checkpoint_load: unsupported checkpoint version");

    TrainConfig cfg = TrainConfig::from_json(j.at("config").dump());
    if (cfg_out) *cfg_out = cfg;
    net::ArchConfig arch = net::ArchConfig::from_json(j.at("arch").dump());

    TrainState st = init_state(arch, cfg);
    st.next_epoch = j.at("epoch").get<std::size_t>();
    st.warmed_up = j.at("warmed_up").get<bool>();
    st.opt_gen1.t = j.at("adam_t1").get<std::size_t>();
    st.opt_gen2.t = j.at("adam_t2").get<std::size_t>();

    std::ifstream f(fs::path(dir) / "params.bin", std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint_load: missing params.bin in " + dir);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != "IGMCKPT1")
        throw std::runtime_error("checkpoint_load: bad params.bin magic");

    auto read_params = [&](const std::vector<Var>& ps) {
        auto ts = read_group(f);
        if (ts.size() != ps.size())
            throw std::runtime_error("checkpoint_load: parameter count mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (ts[i].numel() != ps[i].val().numel())
                throw std::runtime_error("checkpoint_load: parameter size mismatch");
            ps[i].node->value.v = std::move(ts[i].v);
        }
    };
    read_params(st.dual.net1.all_params());
    read_params(st.dual.net2.all_params());
    st.opt_disc1.velocity = read_group(f);
    st.opt_disc2.velocity = read_group(f);
    st.opt_gen1.m = read_group(f);
    st.opt_gen1.v = read_group(f);
    st.opt_gen2.m = read_group(f);
    st.opt_gen2.v = read_group(f);
    return st;
}

}  // namespace igm::train
