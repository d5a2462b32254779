#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wmevade/experiment.hpp"
#include "wmevade/model_io.hpp"
#include "wmevade/synth.hpp"

namespace fs = std::filesystem;
using namespace wmevade;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAssertion = 3;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<uint64_t> seed_override;
    std::vector<double> epsilons;
    std::vector<size_t> sizes;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config JSON");
    if (needs_config) c->required();
    cmd->add_option("--seed", opts.seed_override, "override the config master seed");
    cmd->add_option("--out", opts.out_dir, "output directory for artifacts and reports");
    cmd->add_option("--epsilon", opts.epsilons, "verification epsilon grid override");
    cmd->add_option("--sizes", opts.sizes, "ensemble sizes override");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config(opts.config_path);
    if (opts.seed_override) cfg.master_seed = *opts.seed_override;
    if (!opts.epsilons.empty()) cfg.epsilons = opts.epsilons;
    if (!opts.sizes.empty()) cfg.ensemble_sizes = opts.sizes;
    return cfg;
}

void write_file(const std::string& path, const std::string& body) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << body;
}

Dataset load_train(const ExperimentConfig& cfg) {
    return load_idx(cfg.data.train_images, cfg.data.train_labels);
}

Dataset load_test(const ExperimentConfig& cfg) {
    Dataset d = load_idx(cfg.data.test_images, cfg.data.test_labels);
    d.split = Split::Test;
    return d;
}

int cmd_make_dataset(size_t train_count, size_t test_count, uint64_t seed,
                     const std::string& out_dir) {
    fs::create_directories(out_dir);
    const Dataset train = make_synth_digits(train_count, seed, Split::Train);
    const Dataset test = make_synth_digits(test_count, seed, Split::Test);
    const fs::path base(out_dir);
    save_idx(train, (base / "train-images-idx3-ubyte").string(),
             (base / "train-labels-idx1-ubyte").string());
    save_idx(test, (base / "t10k-images-idx3-ubyte").string(),
             (base / "t10k-labels-idx1-ubyte").string());
    std::cout << "wrote " << train_count << " train / " << test_count << " test digits to "
              << out_dir << "\n";
    return kExitOk;
}

int cmd_train_owners(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const Dataset train = load_train(cfg);
    const Dataset test = load_test(cfg);
    std::vector<OwnerArtifacts> owners = train_owners(cfg, train, test);
    save_owner_artifacts(owners, opts.out_dir);

    bool ok = true;
    const double floor = cfg.effective_accuracy_floor();
    for (size_t i = 0; i < owners.size(); ++i) {
        std::cout << owners[i].triggers.owner_id << " test_accuracy="
                  << owners[i].test_accuracy << " trigger_accuracy=" << owners[i].trigger_acc
                  << "\n";
        if (owners[i].test_accuracy < floor || owners[i].trigger_acc < 1.0) ok = false;
    }
    if (!ok) {
        std::cerr << "training failure: accuracy below floor (" << floor
                  << ") or triggers not embedded\n";
        return kExitAssertion;
    }
    return kExitOk;
}

int cmd_attack_ensemble(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const Dataset test = load_test(cfg);
    std::vector<OwnerArtifacts> owners = load_owner_artifacts(cfg, opts.out_dir, test);

    std::vector<std::pair<const Model*, const TriggerSet*>> pairs;
    for (const OwnerArtifacts& o : owners) pairs.emplace_back(&o.model, &o.triggers);
    const auto results = run_ensemble_experiment(pairs, cfg.ensemble_sizes, cfg.epsilons,
                                                 cfg.master_seed);
    const std::string csv = ensemble_report_csv(cfg, results);
    write_file((fs::path(opts.out_dir) / "ensemble_report.csv").string(), csv);
    std::cout << csv;
    return kExitOk;
}

int cmd_attack_detector(const CommonOpts& opts, size_t stolen_index) {
    const ExperimentConfig cfg = resolve_config(opts);
    const Dataset test = load_test(cfg);
    std::vector<OwnerArtifacts> owners = load_owner_artifacts(cfg, opts.out_dir, test);

    Detector det;
    const DetectorExperimentResult r =
        run_detector_experiment(cfg, owners, test, stolen_index, &det);
    const fs::path base(opts.out_dir);
    save_detector(det, owners[stolen_index].model, (base / "detector.wmnn").string(),
                  (base / "detector.json").string());
    const std::string csv = detector_report_csv(cfg, r);
    write_file((base / "detector_report.csv").string(), csv);
    std::cout << csv;
    return kExitOk;
}

int cmd_simulate(size_t n, size_t l, uint64_t trials, uint64_t seed, bool exact) {
    SimulationResult r;
    if (exact)
        r = exact_ensemble_result(n, l);
    else
        r = simulate_ensemble_verification({n, l, trials, seed, 1.0});
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%zu,%s,%.6f,%.6f,%llu,%llu\n", n, l, r.method.c_str(),
                  r.estimate, r.standard_error, static_cast<unsigned long long>(r.trials),
                  static_cast<unsigned long long>(exact ? 0 : seed));
    std::cout << "n,l,method,estimate,stderr,trials,seed\n" << line;
    return kExitOk;
}

int cmd_verify(const std::string& manifest_path, const std::string& model_path,
               const std::string& labels_path, double epsilon, const std::string& report_path) {
    const TriggerSet triggers = load_trigger_manifest(manifest_path);
    VerificationReport report;
    if (!model_path.empty()) {
        const Model model = load_model(model_path);
        report = verify(model_oracle(model), triggers, epsilon);
    } else if (!labels_path.empty()) {
        std::ifstream f(labels_path);
        if (!f) throw IoError("cannot open labels file: " + labels_path);
        std::vector<int> labels;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) labels.push_back(std::stoi(line));
        if (labels.size() != triggers.size())
            throw ConsistencyError("label count does not match trigger count");
        size_t cursor = 0;
        report = verify([&](const Image&) { return labels[cursor++]; }, triggers, epsilon);
    } else {
        throw ConfigError("verify needs --model or --labels");
    }
    if (!report_path.empty()) write_file(report_path, report.to_json() + "\n");
    std::cout << (report.claim ? "CLAIM" : "NO-CLAIM") << " correct=" << report.correct << "/"
              << report.queried << " threshold=" << report.threshold
              << " epsilon=" << report.epsilon << "\n";
    return kExitOk;
}

// Line protocol: one PGM path in, one label out; "ERR" for unreadable images.
int cmd_serve_stdin(const std::string& kind, const std::vector<std::string>& model_paths,
                    const std::string& detector_path, const std::string& sidecar_path,
                    uint64_t seed) {
    std::vector<Model> models;
    for (const std::string& p : model_paths) models.push_back(load_model(p));

    std::optional<EnsembleGateway> ensemble;
    std::optional<DetectorGateway> detector_gw;
    if (kind == "ensemble") {
        if (models.size() < 2) throw ConfigError("ensemble gateway needs >= 2 --models");
        std::vector<const Model*> members;
        for (const Model& m : models) members.push_back(&m);
        ensemble.emplace(std::move(members), seed);
    } else if (kind == "detector") {
        if (models.size() != 1) throw ConfigError("detector gateway needs exactly one --models");
        if (detector_path.empty() || sidecar_path.empty())
            throw ConfigError("detector gateway needs --detector and --sidecar");
        Detector det = load_detector(models[0], detector_path, sidecar_path);
        detector_gw.emplace(models[0], std::move(det), seed);
    } else if (kind == "model") {
        if (models.size() != 1) throw ConfigError("model gateway needs exactly one --models");
    } else {
        throw ConfigError("gateway kind must be model, ensemble or detector");
    }

    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        try {
            const Image img = load_pgm(line);
            int label;
            if (ensemble)
                label = ensemble->predict(img);
            else if (detector_gw)
                label = detector_gw->predict(img);
            else
                label = predict(models[0], to_tensor(img));
            std::cout << label << "\n";
        } catch (const std::exception&) {
            std::cout << "ERR\n";
        }
    }
    return kExitOk;
}

int cmd_report(const CommonOpts& opts, bool with_probe) {
    const ExperimentConfig cfg = resolve_config(opts);
    const Dataset test = load_test(cfg);
    std::vector<OwnerArtifacts> owners = load_owner_artifacts(cfg, opts.out_dir, test);
    FineTuneProbe probe;
    if (with_probe) {
        const Dataset train = load_train(cfg);
        probe = fine_tune_probe(cfg, owners[0], train, test);
    }
    const std::string csv = summary_report_csv(cfg, owners, with_probe ? &probe : nullptr);
    write_file((fs::path(opts.out_dir) / "summary_report.csv").string(), csv);
    std::cout << csv;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"backdoor watermark embedding, verification and evasion testbed"};
    app.require_subcommand(1);

    // make-dataset
    auto* make = app.add_subcommand("make-dataset", "write a deterministic digit corpus as IDX");
    size_t train_count = 8000, test_count = 2000;
    uint64_t ds_seed = 1;
    std::string ds_out = "data";
    make->add_option("--train", train_count, "training image count");
    make->add_option("--test", test_count, "test image count");
    make->add_option("--seed", ds_seed, "generator seed");
    make->add_option("--out", ds_out, "output directory");

    CommonOpts train_opts, ens_opts, det_opts, rep_opts;
    auto* train_cmd = app.add_subcommand("train-owners", "train watermarked owner models");
    add_common(train_cmd, train_opts);
    auto* ens_cmd = app.add_subcommand("attack-ensemble", "run the ensemble voting attack");
    add_common(ens_cmd, ens_opts);
    auto* det_cmd = app.add_subcommand("attack-detector", "run the trigger-detector attack");
    add_common(det_cmd, det_opts);
    size_t stolen_index = 0;
    det_cmd->add_option("--stolen", stolen_index, "index of the owner model to steal");

    auto* sim_cmd = app.add_subcommand("simulate", "die-model verification probability");
    size_t sim_n = 7, sim_l = 10;
    uint64_t sim_trials = 1000000, sim_seed = 1;
    bool sim_exact = false;
    sim_cmd->add_option("--n", sim_n, "ensemble size")->required();
    sim_cmd->add_option("--l", sim_l, "class count")->required();
    sim_cmd->add_option("--trials", sim_trials, "Monte Carlo trials");
    sim_cmd->add_option("--seed", sim_seed, "Monte Carlo seed");
    sim_cmd->add_flag("--exact", sim_exact, "exact enumeration instead of Monte Carlo");

    auto* ver_cmd = app.add_subcommand("verify", "black-box epsilon-threshold verification");
    std::string ver_manifest, ver_model, ver_labels, ver_report;
    double ver_epsilon = 0.5;
    ver_cmd->add_option("--triggers", ver_manifest, "trigger manifest JSON")->required();
    ver_cmd->add_option("--model", ver_model, "WMNN model file to query");
    ver_cmd->add_option("--labels", ver_labels, "file with one returned label per line");
    ver_cmd->add_option("--epsilon", ver_epsilon, "tolerance epsilon in (0,1]");
    ver_cmd->add_option("--report", ver_report, "write the JSON report here");

    auto* serve_cmd = app.add_subcommand("serve-stdin",
                                         "answer PGM paths from stdin, one label per line");
    std::string serve_kind = "model";
    std::vector<std::string> serve_models;
    std::string serve_detector, serve_sidecar;
    uint64_t serve_seed = 1;
    serve_cmd->add_option("--gateway", serve_kind, "model | ensemble | detector");
    serve_cmd->add_option("--models", serve_models, "WMNN model files")->required();
    serve_cmd->add_option("--detector", serve_detector, "detector WMNN file");
    serve_cmd->add_option("--sidecar", serve_sidecar, "detector JSON sidecar");
    serve_cmd->add_option("--seed", serve_seed, "gateway answer/tie-break seed");

    auto* rep_cmd = app.add_subcommand("report", "owner summary and analytics predictions");
    add_common(rep_cmd, rep_opts);
    bool with_probe = false;
    rep_cmd->add_flag("--fine-tune-probe", with_probe,
                      "run the fine-tuning robustness probe on owner 0");

    CLI11_PARSE(app, argc, argv);

    try {
        if (make->parsed()) return cmd_make_dataset(train_count, test_count, ds_seed, ds_out);
        if (train_cmd->parsed()) return cmd_train_owners(train_opts);
        if (ens_cmd->parsed()) return cmd_attack_ensemble(ens_opts);
        if (det_cmd->parsed()) return cmd_attack_detector(det_opts, stolen_index);
        if (sim_cmd->parsed()) return cmd_simulate(sim_n, sim_l, sim_trials, sim_seed, sim_exact);
        if (ver_cmd->parsed())
            return cmd_verify(ver_manifest, ver_model, ver_labels, ver_epsilon, ver_report);
        if (serve_cmd->parsed())
            return cmd_serve_stdin(serve_kind, serve_models, serve_detector, serve_sidecar,
                                   serve_seed);
        if (rep_cmd->parsed()) return cmd_report(rep_opts, with_probe);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAssertion;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAssertion;
    }
    return kExitOk;
}
