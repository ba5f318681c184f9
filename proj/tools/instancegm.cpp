// instancegm: dataset synthesis, noise injection, training, evaluation and
// report emission for the InstanceGM noisy-label pipeline.
//
// Exit codes: 0 success, 2 usage/path/config error, 1 unexpected failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "igm/codivide.hpp"
#include "igm/dataset.hpp"
#include "igm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), {}};
}

// Config keys and defaults, shown in `train --help`.
std::string config_key_help() {
    return
        "Config file keys (JSON, flat lower_snake_case; flags/--set override):\n"
        "  epochs              60     desk-scale (reference setup: 300)\n"
        "  warmup_epochs       25     desk-scale (reference setup: 10)\n"
        "  tau                 0.8    desk-scale (reference setup: 0.5)\n"
        "  t_sharpen           0.5    reference default (sharpening temperature)\n"
        "  alpha               0.75   desk-scale mixup Beta (reference setup: 4)\n"
        "  lambda_u            1.0    desk-scale (reference setup: 25)\n"
        "  rampup              16     desk-scale lambda_u ramp epochs\n"
        "  lambda_r            1.0    reference default (regularizer weight)\n"
        "  n_aug               2      reference default (augmented views)\n"
        "  max_shift           0      desk-scale shift augmentation radius\n"
        "                             (reference setup: 2; flips always on)\n"
        "  lr_disc             0.02   warmup rate, reference default\n"
        "  lr_disc_main        0.002  desk-scale main-phase rate, /10 at epochs/2\n"
        "  lr_gen              0.0001 desk-scale adaptive-moment rate (generative)\n"
        "  momentum            0.9    warmup momentum, reference default\n"
        "  momentum_main       0.0    desk-scale main-phase momentum\n"
        "  weight_decay        0.0005 reference default (discriminative)\n"
        "  weight_decay_gen    0.003  desk-scale decoupled decay (generative)\n"
        "  batch_size          64     reference default\n"
        "  d_z                 8      desk-scale (reference setup: 25)\n"
        "  seed                1      run seed\n"
        "  profile             small  small | reference (backbone widths; reference also\n"
        "                             restores the reference-scale defaults listed\n"
        "                             above unless set explicitly)\n"
        "  use_dividemix       true   ablation: false = plain CE + VI\n"
        "  use_cb_recon        true   ablation: false = MSE reconstruction\n"
        "  vi_on_labelled_only true   evaluate VI loss on the labelled set only\n"
        "  ensemble_eval       true   average both classifiers at eval\n"
        "  hard_label          false  argmax labels in the VI loss (ablation)\n"
        "  unified_optimizer   false  single optimizer for all parameters\n"
        "  deterministic       false  zero wall_seconds; also via\n"
        "                             INSTANCEGM_DETERMINISTIC=1\n";
}

// defaults <- reference-profile defaults <- config file <- --set pairs <- --seed
igm::train::TrainConfig resolve_config(const std::string& config_path,
                                       const std::vector<std::string>& sets,
                                       bool have_seed, std::uint64_t seed) {
    json j = json::parse(igm::train::TrainConfig{}.to_json());
    json file = json::object();
    if (!config_path.empty()) {
        try {
            file = json::parse(slurp(config_path));
        } catch (const json::exception& e) {
            throw UsageError("config parse error in " + config_path + ": " + e.what());
        }
        if (!file.is_object()) throw UsageError("config must be a JSON object");
        for (const auto& [k, v] : file.items())
            if (!j.contains(k)) throw UsageError("unknown config key: " + k);
    }

    json overrides = json::object();
    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value: " + s);
        std::string key = s.substr(0, eq), val = s.substr(eq + 1);
        if (!j.contains(key)) throw UsageError("unknown config key: " + key);
        try {
            overrides[key] = json::parse(val);
        } catch (const json::exception&) {
            overrides[key] = val;  // unquoted strings like `profile=reference`
        }
    }

    std::string profile = j.at("profile").get<std::string>();
    if (file.contains("profile")) profile = file.at("profile").get<std::string>();
    if (overrides.contains("profile"))
        profile = overrides.at("profile").get<std::string>();
    if (profile == "reference") {
        j["d_z"] = 25;
        j["warmup_epochs"] = 10;
        j["tau"] = 0.5;
        j["alpha"] = 4.0;
        j["max_shift"] = 2;
        j["epochs"] = 300;
        j["lambda_u"] = 25.0;
        j["lr_disc_main"] = 0.02;
        j["lr_gen"] = 1e-3;
        j["momentum_main"] = 0.9;
        j["weight_decay_gen"] = 0.0;
        j["profile"] = "reference";
    }

    j.update(file);
    j.update(overrides);
    if (have_seed) j["seed"] = seed;
    try {
        return igm::train::TrainConfig::from_json(j.dump());
    } catch (const std::exception& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }
}

igm::data::NoisyDataset load_ds(const std::string& dir) {
    try {
        return igm::data::load_dataset(dir);
    } catch (const std::exception& e) {
        throw UsageError("cannot load dataset " + dir + ": " + e.what());
    }
}

int cmd_synth(std::size_t classes, std::size_t per_class, std::size_t side,
              std::uint64_t seed, const std::string& out) {
    igm::data::NoisyDataset ds;
    try {
        ds = igm::data::synth_shapes(classes, per_class, side, seed);
    } catch (const std::exception& e) {
        throw UsageError(std::string("synth failed: ") + e.what());
    }
    igm::data::save_dataset(ds, out);
    std::cout << "wrote " << ds.size() << " examples to " << out << "\n";
    return 0;
}

int cmd_noise(const std::string& kind, double rate, double idn_std,
              std::uint64_t seed, const std::string& in, const std::string& out) {
    igm::data::NoisyDataset ds = load_ds(in);
    igm::data::NoisyDataset noisy;
    try {
        if (kind == "idn")
            noisy = igm::data::inject_idn(ds, rate, seed, idn_std);
        else if (kind == "symmetric")
            noisy = igm::data::inject_symmetric(ds, rate, seed);
        else
            throw UsageError("unknown noise kind: " + kind);
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(std::string("noise injection failed: ") + e.what());
    }
    igm::data::save_dataset(noisy, out);
    std::cout << "wrote " << noisy.size() << " examples to " << out
              << " (flip fraction " << igm::data::flip_fraction(noisy) << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              bool have_seed, std::uint64_t seed, const std::string& data_dir,
              const std::string& test_dir, const std::string& out,
              const std::string& resume, std::size_t stop_epoch) {
    igm::train::TrainConfig cfg = resolve_config(config_path, sets, have_seed, seed);
    igm::data::NoisyDataset ds = load_ds(data_dir);
    igm::data::NoisyDataset test;
    const igm::data::NoisyDataset* test_ptr = nullptr;
    if (!test_dir.empty()) {
        test = load_ds(test_dir);
        test_ptr = &test;
    }

    igm::train::TrainState st;
    if (!resume.empty()) {
        try {
            st = igm::train::checkpoint_load(resume, &cfg);
        } catch (const std::exception& e) {
            throw UsageError("cannot resume from " + resume + ": " + e.what());
        }
    } else {
        st = igm::train::init_state(cfg.arch_for(ds), cfg);
        igm::train::warmup(st, ds, cfg);
    }
    auto metrics = igm::train::train(st, ds, cfg, out, test_ptr, stop_epoch);
    if (!metrics.empty()) {
        const auto& last = metrics.back();
        std::cout << "epochs " << st.next_epoch << "/" << cfg.epochs;
        if (last.test_accuracy >= 0.0)
            std::cout << "  test_accuracy " << last.test_accuracy;
        std::cout << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, bool ensemble) {
    igm::train::TrainConfig cfg;
    igm::train::TrainState st;
    try {
        st = igm::train::checkpoint_load(ckpt, &cfg);
    } catch (const std::exception& e) {
        throw UsageError("cannot load checkpoint " + ckpt + ": " + e.what());
    }
    igm::data::NoisyDataset test = load_ds(data_dir);
    double acc;
    try {
        acc = igm::train::evaluate(st.dual, test, ensemble);
    } catch (const std::exception& e) {
        throw UsageError(std::string("evaluation failed: ") + e.what());
    }
    std::cout << acc << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_path) {
    std::ostringstream csv;
    csv << "run,epochs,seed,profile,use_dividemix,use_cb_recon,"
           "test_accuracy,codivide_auc1,codivide_auc2\n";
    for (const std::string& run : runs) {
        fs::path dir(run);
        json cfg;
        try {
            cfg = json::parse(slurp(dir / "config.json"));
        } catch (const json::exception& e) {
            throw UsageError("bad config.json in " + run + ": " + e.what());
        }
        std::ifstream mf(dir / "metrics.jsonl");
        if (!mf) throw UsageError("missing metrics.jsonl in " + run);
        std::string line, lastline;
        while (std::getline(mf, line))
            if (!line.empty()) lastline = line;
        if (lastline.empty()) throw UsageError("empty metrics.jsonl in " + run);
        json last;
        try {
            last = json::parse(lastline);
        } catch (const json::exception& e) {
            throw UsageError("bad metrics.jsonl in " + run + ": " + e.what());
        }
        csv << run << ',' << cfg.at("epochs").get<std::size_t>() << ','
            << cfg.at("seed").get<std::uint64_t>() << ','
            << cfg.at("profile").get<std::string>() << ','
            << (cfg.at("use_dividemix").get<bool>() ? "true" : "false") << ','
            << (cfg.at("use_cb_recon").get<bool>() ? "true" : "false") << ','
            << last.at("test_accuracy").get<double>() << ','
            << last.at("codivide_auc1").get<double>() << ','
            << last.at("codivide_auc2").get<double>() << "\n";
    }
    if (out_path == "-") {
        std::cout << csv.str();
    } else {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw UsageError("cannot write " + out_path);
        out << csv.str();
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"InstanceGM: instance-dependent noisy-label learning with a "
                 "generative continuous-Bernoulli model"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic shape dataset");
    std::size_t classes = 4, per_class = 100, side = 16;
    std::uint64_t synth_seed = 1;
    std::string synth_out;
    synth->add_option("--classes", classes, "number of classes (2..16)");
    synth->add_option("--per-class", per_class, "examples per class");
    synth->add_option("--side", side, "image side length (>= 8)");
    synth->add_option("--seed", synth_seed, "generation seed");
    synth->add_option("--out", synth_out, "output dataset directory")->required();

    // noise
    auto* noise = app.add_subcommand("noise", "Inject label noise into a dataset");
    std::string kind = "idn", noise_in, noise_out;
    double rate = 0.4, idn_std = 0.1;
    std::uint64_t noise_seed = 1;
    noise->add_option("--kind", kind, "idn | symmetric");
    noise->add_option("--rate", rate, "target flip rate in [0,1)");
    noise->add_option("--idn-std", idn_std, "per-example rate std (idn only)");
    noise->add_option("--seed", noise_seed, "injection seed");
    noise->add_option("--in", noise_in, "input dataset directory")->required();
    noise->add_option("--out", noise_out, "output dataset directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Warm up and train the dual model");
    train->footer(config_key_help());
    std::string config_path, data_dir, test_dir, run_out, resume;
    std::vector<std::string> sets;
    std::uint64_t train_seed = 0;
    std::size_t stop_epoch = static_cast<std::size_t>(-1);
    train->add_option("--config", config_path, "JSON config file (see keys below)");
    train->add_option("--set", sets, "override a config key, e.g. --set epochs=10")
        ->take_all();
    auto* seed_opt = train->add_option("--seed", train_seed, "override the run seed");
    train->add_option("--data", data_dir, "training dataset directory")->required();
    train->add_option("--test", test_dir, "held-out dataset for per-epoch accuracy");
    train->add_option("--out", run_out, "run directory (metrics, checkpoints)")
        ->required();
    train->add_option("--resume", resume, "checkpoint directory to resume from");
    train->add_option("--stop-epoch", stop_epoch,
                      "pause after this epoch (resume later with --resume)");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data;
    bool ensemble = false;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--data", eval_data, "dataset directory with clean labels")
        ->required();
    eval->add_flag("--ensemble", ensemble, "average both classifiers");

    // report
    auto* report = app.add_subcommand("report", "Summarize runs into a CSV table");
    std::vector<std::string> runs;
    std::string report_out = "report.csv";
    report->add_option("--run", runs, "run directory (repeatable)")
        ->required()
        ->take_all();
    report->add_option("--out", report_out, "output CSV path, or - for stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth(classes, per_class, side, synth_seed, synth_out);
        if (noise->parsed())
            return cmd_noise(kind, rate, idn_std, noise_seed, noise_in, noise_out);
        if (train->parsed())
            return cmd_train(config_path, sets, seed_opt->count() > 0, train_seed,
                             data_dir, test_dir, run_out, resume, stop_epoch);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, ensemble);
        if (report->parsed()) return cmd_report(runs, report_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
