#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igm/codivide.hpp"
#include "igm/dataset.hpp"
#include "igm/networks.hpp"
#include "igm/semisup.hpp"
#include "igm/vi.hpp"

namespace igm::train {

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t warmup_epochs = 25;
    double tau = 0.8;
    double t_sharpen = 0.5;
    double alpha = 0.75;
    double lambda_u = 1.0;
    std::size_t rampup = 16;
    double lambda_r = 1.0;
    std::size_t n_aug = 2;
    std::size_t max_shift = 0;  // augmentation shift radius; flips always on
    double lr_disc = 0.02;        // warmup; main phase uses lr_disc_main
    double lr_disc_main = 0.002;  // decimated again at epochs/2
    double lr_gen = 1e-4;
    double momentum = 0.9;        // warmup; main phase uses momentum_main
    double momentum_main = 0.0;
    double weight_decay = 5e-4;
    double weight_decay_gen = 3e-3;  // decoupled shrink on generative params
    std::size_t batch_size = 64;
    std::size_t d_z = 8;
    std::uint64_t seed = 1;
    std::string profile = "small";  // small | reference

    // ablation / behavior flags
    bool use_dividemix = true;
    bool use_cb_recon = true;
    bool vi_on_labelled_only = true;
    bool ensemble_eval = true;
    bool hard_label = false;
    bool unified_optimizer = false;
    bool deterministic = false;  // also forced by INSTANCEGM_DETERMINISTIC=1

    std::string to_json() const;
    static TrainConfig from_json(const std::string& s);
    void validate() const;

    net::ArchConfig arch_for(const data::NoisyDataset& ds) const;
};

// SGD with momentum and decoupled L2; holds one velocity per parameter.
struct SgdMomentum {
    double lr = 0.02, momentum = 0.9, weight_decay = 0.0;
    std::vector<Tensor> velocity;
    void step(const std::vector<ad::Var>& params);
};

struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;  // decoupled: p *= (1 - weight_decay) per step
    std::size_t t = 0;
    std::vector<Tensor> m, v;
    void step(const std::vector<ad::Var>& params);
};

void zero_grads(const std::vector<ad::Var>& params);

// Everything that must survive a checkpoint/resume cycle.
struct TrainState {
    net::DualModel dual;
    SgdMomentum opt_disc1, opt_disc2;
    Adam opt_gen1, opt_gen2;
    std::size_t next_epoch = 0;  // main-loop epoch to run next
    bool warmed_up = false;
};

TrainState init_state(const net::ArchConfig& arch, const TrainConfig& cfg);

// Plain cross-entropy warmup of both clean classifiers on the noisy labels.
void warmup(TrainState& st, const data::NoisyDataset& ds, const TrainConfig& cfg);

struct EpochMetrics {
    std::size_t epoch = 0;
    vi::ViTerms vi1, vi2;
    double dm1_lx = 0, dm1_lu = 0, dm1_lreg = 0;
    double dm2_lx = 0, dm2_lu = 0, dm2_lreg = 0;
    double test_accuracy = -1.0;   // -1 when no test set given
    double codivide_auc1 = -1.0;   // -1 when no clean labels / no noise
    double codivide_auc2 = -1.0;
    double wall_seconds = 0.0;
    std::string to_json_line() const;
};

// Algorithm main loop from st.next_epoch to cfg.epochs (or stop_epoch, if
// smaller, for interrupted runs that will resume later under the same
// config). Writes metrics.jsonl (appending on resume) and a final checkpoint
// into run_dir when run_dir is non-empty. Returns the per-epoch metrics
// produced by this call.
std::vector<EpochMetrics> train(TrainState& st, const data::NoisyDataset& ds,
                                const TrainConfig& cfg, const std::string& run_dir,
                                const data::NoisyDataset* test_ds,
                                std::size_t stop_epoch = static_cast<std::size_t>(-1));

double evaluate(const net::PeerNet& net, const data::NoisyDataset& test_ds);
double evaluate(const net::DualModel& dual, const data::NoisyDataset& test_ds,
                bool ensemble);

void checkpoint_save(const std::string& dir, const TrainState& st,
                     const TrainConfig& cfg);
TrainState checkpoint_load(const std::string& dir, TrainConfig* cfg_out = nullptr);

bool deterministic_mode(const TrainConfig& cfg);

}  // namespace igm::train
