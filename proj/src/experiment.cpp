#include "wmevade/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "wmevade/model_io.hpp"
#include "wmevade/synth.hpp"

namespace wmevade {

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string hex16(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string report_header(const ExperimentConfig& cfg) {
    return "# config=" + hex16(config_hash(cfg)) + " seed=" + std::to_string(cfg.master_seed) +
           "\n";
}

}  // namespace

double ExperimentConfig::effective_accuracy_floor() const {
    if (accuracy_floor > 0.0) return accuracy_floor;
    return arch == "conv" ? 0.985 : 0.97;
}

ArchitectureDescriptor ExperimentConfig::classifier_arch() const {
    if (arch == "conv") return conv_classifier_arch(10);
    if (arch == "dense") return dense_classifier_arch(10);
    throw ConfigError("arch must be 'conv' or 'dense'");
}

uint64_t ExperimentConfig::component_seed(const std::string& component) const {
    return derive_seed(master_seed, component);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        const auto& d = j.at("data");
        cfg.data.train_images = d.at("train_images").get<std::string>();
        cfg.data.train_labels = d.at("train_labels").get<std::string>();
        cfg.data.test_images = d.at("test_images").get<std::string>();
        cfg.data.test_labels = d.at("test_labels").get<std::string>();
        cfg.owner_count = j.value("owners", cfg.owner_count);
        cfg.triggers_per_owner = j.value("triggers_per_owner", cfg.triggers_per_owner);
        if (j.contains("delta")) {
            cfg.delta_policy = j["delta"].value("policy", cfg.delta_policy);
            cfg.delta_value = j["delta"].value("value", cfg.delta_value);
        }
        cfg.arch = j.value("arch", cfg.arch);
        if (j.contains("train")) {
            const auto& t = j["train"];
            cfg.epochs = t.value("epochs", cfg.epochs);
            cfg.batch_size = t.value("batch_size", cfg.batch_size);
            cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
            cfg.trigger_replication = t.value("trigger_replication", cfg.trigger_replication);
        }
        if (j.contains("epsilons")) cfg.epsilons = j["epsilons"].get<std::vector<double>>();
        if (j.contains("ensemble_sizes"))
            cfg.ensemble_sizes = j["ensemble_sizes"].get<std::vector<size_t>>();
        if (j.contains("detector")) {
            const auto& dt = j["detector"];
            cfg.detector.epochs = dt.value("epochs", cfg.detector.epochs);
            cfg.detector.batch_size = dt.value("batch_size", cfg.detector.batch_size);
            cfg.detector.learning_rate = dt.value("learning_rate", cfg.detector.learning_rate);
            cfg.detector.tau = dt.value("tau", cfg.detector.tau);
            cfg.detector.corpus_per_class =
                dt.value("corpus_per_class", cfg.detector.corpus_per_class);
            cfg.detector.holdout_fraction =
                dt.value("holdout_fraction", cfg.detector.holdout_fraction);
        }
        cfg.master_seed = j.value("seed", cfg.master_seed);
        cfg.accuracy_floor = j.value("accuracy_floor", cfg.accuracy_floor);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config missing fields: ") + e.what());
    }

    if (cfg.owner_count < 1) throw ConfigError("owners must be >= 1");
    if (cfg.triggers_per_owner < 1) throw ConfigError("triggers_per_owner must be >= 1");
    if (cfg.arch != "conv" && cfg.arch != "dense")
        throw ConfigError("arch must be 'conv' or 'dense'");
    for (size_t n : cfg.ensemble_sizes)
        if (n < 1 || n > cfg.owner_count) throw ConfigError("ensemble size out of range");
    for (double e : cfg.epsilons)
        if (!(e > 0.0) || e > 1.0) throw ConfigError("epsilon must be in (0,1]");
    for (const std::string& p : {cfg.data.train_images, cfg.data.train_labels,
                                 cfg.data.test_images, cfg.data.test_labels})
        if (!std::filesystem::exists(p)) throw ConfigError("data file does not exist: " + p);
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["data"] = {{"train_images", cfg.data.train_images},
                 {"train_labels", cfg.data.train_labels},
                 {"test_images", cfg.data.test_images},
                 {"test_labels", cfg.data.test_labels}};
    j["owners"] = cfg.owner_count;
    j["triggers_per_owner"] = cfg.triggers_per_owner;
    j["delta"] = {{"policy", cfg.delta_policy}, {"value", cfg.delta_value}};
    j["arch"] = cfg.arch;
    j["train"] = {{"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"learning_rate", cfg.learning_rate},
                  {"trigger_replication", cfg.trigger_replication}};
    j["epsilons"] = cfg.epsilons;
    j["ensemble_sizes"] = cfg.ensemble_sizes;
    j["detector"] = {{"epochs", cfg.detector.epochs},
                     {"batch_size", cfg.detector.batch_size},
                     {"learning_rate", cfg.detector.learning_rate},
                     {"tau", cfg.detector.tau},
                     {"corpus_per_class", cfg.detector.corpus_per_class},
                     {"holdout_fraction", cfg.detector.holdout_fraction}};
    j["seed"] = cfg.master_seed;
    j["accuracy_floor"] = cfg.accuracy_floor;
    return j.dump();
}

uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(config_to_json(cfg)); }

size_t thread_cap() {
    if (const char* env = std::getenv("WMEVADE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

double resolve_delta(const ExperimentConfig& cfg) {
    if (cfg.delta_policy == "fixed") return cfg.delta_value;
    if (cfg.delta_policy != "half-mean")
        throw ConfigError("delta policy must be 'half-mean' or 'fixed'");
    const uint64_t seed = cfg.component_seed("delta/probe");
    const std::vector<Image> sample = generate_trigger_images(100, seed, 0.0,
                                                              TriggerFamily::Abstract);
    double sum = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < sample.size(); ++i) {
        for (size_t j = i + 1; j < sample.size(); ++j) {
            sum += image_distance(sample[i], sample[j]);
            ++pairs;
        }
    }
    return 0.5 * sum / static_cast<double>(pairs);
}

namespace {

OwnerArtifacts train_one_owner(const ExperimentConfig& cfg, const Dataset& train,
                               const Dataset& test, size_t index, double delta) {
    const std::string owner_id = "owner-" + std::to_string(index);
    OwnerArtifacts art;

    const uint64_t gen_seed = cfg.component_seed(owner_id + "/triggers");
    std::vector<Image> images =
        generate_trigger_images(cfg.triggers_per_owner, gen_seed, delta, TriggerFamily::Abstract);
    art.triggers = assign_random_labels(std::move(images), train.class_count,
                                        cfg.component_seed(owner_id + "/labels"));
    art.triggers.owner_id = owner_id;
    art.triggers.generation_seed = gen_seed;
    art.triggers.min_distance = delta;
    art.triggers.family = TriggerFamily::Abstract;
    check_disjoint_from(art.triggers, train, delta);

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = cfg.component_seed(owner_id + "/train");
    art.model = embed_from_scratch(train, art.triggers, cfg.classifier_arch(), tc,
                                   cfg.trigger_replication);
    art.test_accuracy = accuracy(art.model, to_batch(test));
    art.trigger_acc = trigger_accuracy(art.model, art.triggers);
    return art;
}

}  // namespace

std::vector<OwnerArtifacts> train_owners(const ExperimentConfig& cfg, const Dataset& train,
                                         const Dataset& test) {
    const double delta = resolve_delta(cfg);
    std::vector<OwnerArtifacts> owners(cfg.owner_count);
    const size_t workers = std::min(thread_cap(), cfg.owner_count);
    std::vector<std::future<void>> futures;
    std::atomic<size_t> next{0};
    for (size_t w = 0; w < workers; ++w) {
        futures.push_back(std::async(std::launch::async, [&]() {
            for (size_t i = next.fetch_add(1); i < cfg.owner_count; i = next.fetch_add(1))
                owners[i] = train_one_owner(cfg, train, test, i, delta);
        }));
    }
    for (auto& f : futures) f.get();
    return owners;
}

Model train_unwatermarked_twin(const ExperimentConfig& cfg, const Dataset& train,
                               size_t owner_index) {
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = cfg.component_seed("owner-" + std::to_string(owner_index) + "/train");
    TriggerSet empty;
    empty.owner_id = "owner-" + std::to_string(owner_index) + "-plain";
    return embed_from_scratch(train, empty, cfg.classifier_arch(), tc, cfg.trigger_replication);
}

void save_owner_artifacts(const std::vector<OwnerArtifacts>& owners, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    for (size_t i = 0; i < owners.size(); ++i) {
        const std::filesystem::path base(out_dir);
        save_model(owners[i].model, (base / ("owner_" + std::to_string(i) + ".wmnn")).string());
        save_trigger_manifest(owners[i].triggers,
                              (base / ("owner_" + std::to_string(i) + "_triggers.json")).string());
    }
}

std::vector<OwnerArtifacts> load_owner_artifacts(const ExperimentConfig& cfg,
                                                 const std::string& out_dir, const Dataset& test) {
    std::vector<OwnerArtifacts> owners;
    const std::filesystem::path base(out_dir);
    for (size_t i = 0; i < cfg.owner_count; ++i) {
        const auto model_path = base / ("owner_" + std::to_string(i) + ".wmnn");
        const auto manifest_path = base / ("owner_" + std::to_string(i) + "_triggers.json");
        if (!std::filesystem::exists(model_path) || !std::filesystem::exists(manifest_path))
            throw ConfigError("missing owner artifacts in " + out_dir +
                              "; run train-owners first");
        OwnerArtifacts art;
        art.model = load_model(model_path.string());
        art.triggers = load_trigger_manifest(manifest_path.string());
        art.test_accuracy = accuracy(art.model, to_batch(test));
        art.trigger_acc = trigger_accuracy(art.model, art.triggers);
        owners.push_back(std::move(art));
    }
    return owners;
}

std::string ensemble_report_csv(const ExperimentConfig& cfg,
                                const std::vector<EnsembleExperimentResult>& results) {
    std::ostringstream os;
    os << report_header(cfg);
    os << "n,owner_id,verified_fraction";
    for (double e : cfg.epsilons) os << ",claim_eps_" << fixed6(e);
    os << ",die_model_exact\n";
    for (const EnsembleExperimentResult& res : results) {
        const double exact = exact_ensemble_verification(
            std::max<size_t>(res.ensemble_size, 2), 10);
        const std::string exact_col =
            res.ensemble_size == 1 ? fixed6(1.0) : fixed6(exact);
        for (const OwnerResult& owner : res.owners) {
            os << res.ensemble_size << "," << owner.owner_id << ","
               << fixed6(owner.verified_fraction);
            for (const VerificationReport& rep : owner.reports) os << "," << (rep.claim ? 1 : 0);
            os << "," << exact_col << "\n";
        }
        os << res.ensemble_size << ",MEAN," << fixed6(res.mean_fraction);
        for (size_t k = 0; k < cfg.epsilons.size(); ++k) os << ",";
        os << "," << exact_col << "\n";
    }
    return os.str();
}

double gateway_trigger_fraction(DetectorGateway& gw, const TriggerSet& triggers, size_t queries) {
    if (triggers.size() == 0) throw ArgumentError("empty trigger set");
    size_t hits = 0;
    for (size_t q = 0; q < queries; ++q) {
        const size_t i = q % triggers.size();
        if (gw.predict(triggers.images[i]) == triggers.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(queries);
}

DetectorExperimentResult run_detector_experiment(const ExperimentConfig& cfg,
                                                 const std::vector<OwnerArtifacts>& owners,
                                                 const Dataset& test, size_t stolen_index,
                                                 Detector* out_detector) {
    if (stolen_index >= owners.size()) throw ArgumentError("stolen model index out of range");
    const Model& stolen = owners[stolen_index].model;
    const TriggerSet& owner_triggers = owners[stolen_index].triggers;

    const size_t cpc = cfg.detector.corpus_per_class;
    if (test.size() < cpc + 100)
        throw ConfigError("test split too small for the detector corpus");

    // Clean corpus from the test split; fresh abstract corpus for triggers.
    std::vector<Image> clean(test.images.begin(),
                             test.images.begin() + static_cast<long>(cpc));
    std::vector<Image> trig = generate_trigger_images(
        cpc, cfg.component_seed("detector/corpus"), 0.0, TriggerFamily::Abstract);

    const size_t holdout =
        std::max<size_t>(1, static_cast<size_t>(cfg.detector.holdout_fraction *
                                                static_cast<double>(cpc)));
    const size_t train_n = cpc - holdout;
    std::vector<Image> clean_train(clean.begin(), clean.begin() + static_cast<long>(train_n));
    std::vector<Image> clean_eval(clean.begin() + static_cast<long>(train_n), clean.end());
    std::vector<Image> trig_train(trig.begin(), trig.begin() + static_cast<long>(train_n));
    std::vector<Image> trig_eval(trig.begin() + static_cast<long>(train_n), trig.end());

    DetectorDataset dd = build_detector_dataset(stolen, clean_train, trig_train,
                                                cfg.component_seed("detector/shuffle"));
    TrainConfig tc;
    tc.epochs = cfg.detector.epochs;
    tc.batch_size = cfg.detector.batch_size;
    tc.learning_rate = cfg.detector.learning_rate;
    tc.seed = cfg.component_seed("detector/train");

    const auto t0 = std::chrono::steady_clock::now();
    Detector det = train_detector(stolen, dd, tc, cfg.detector.tau);
    const auto t1 = std::chrono::steady_clock::now();

    DetectorExperimentResult r;
    r.seconds_per_epoch = std::chrono::duration<double>(t1 - t0).count() /
                          static_cast<double>(std::max<size_t>(tc.epochs, 1));
    r.eval = evaluate_detector(det, stolen, clean_eval, trig_eval);

    // Gateway quality of service on digits the detector corpus never saw.
    std::vector<Image> qos_images(test.images.begin() + static_cast<long>(cpc),
                                  test.images.end());
    std::vector<int> qos_labels(test.labels.begin() + static_cast<long>(cpc), test.labels.end());
    r.stolen_clean_accuracy = accuracy(stolen, to_batch(qos_images, qos_labels));
    DetectorGateway gw(stolen, det, cfg.component_seed("detector/answers"));
    size_t gw_hits = 0;
    for (size_t i = 0; i < qos_images.size(); ++i)
        if (gw.predict(qos_images[i]) == qos_labels[i]) ++gw_hits;
    r.gateway_clean_accuracy =
        static_cast<double>(gw_hits) / static_cast<double>(qos_images.size());

    r.stolen_trigger_accuracy = trigger_accuracy(stolen, owner_triggers);

    // Owner's verification attempt through the guarded service.
    const VerificationReport base = verify(gw.oracle(), owner_triggers, 1.0);
    r.owner_verified_fraction =
        static_cast<double>(base.correct) / static_cast<double>(base.queried);
    for (double eps : cfg.epsilons) r.claims.push_back(reevaluate(base, eps).claim);

    r.simulated_queries = 10000;
    r.simulated_fraction = gateway_trigger_fraction(gw, owner_triggers, r.simulated_queries);
    r.formula_prediction =
        detector_verified_fraction(r.eval.tpr, r.stolen_trigger_accuracy, stolen.class_count());

    // Generalization to the unseen patch-tweaked family (reported only).
    std::vector<Image> patch_eval = generate_trigger_images(
        holdout, cfg.component_seed("detector/patch-eval"), 0.0, TriggerFamily::PatchTweaked,
        clean_eval);
    size_t flagged = 0;
    for (const Image& img : patch_eval)
        if (detector_classify(det, stolen, img).trigger) ++flagged;
    r.generalization_tpr = static_cast<double>(flagged) / static_cast<double>(patch_eval.size());

    if (out_detector) *out_detector = std::move(det);
    return r;
}

std::string detector_report_csv(const ExperimentConfig& cfg, const DetectorExperimentResult& r) {
    std::ostringstream os;
    os << report_header(cfg);
    os << "detector_accuracy,tpr,fpr,stolen_clean_accuracy,gateway_clean_accuracy,"
          "owner_verified_fraction,simulated_fraction,formula_prediction,patch_family_tpr,"
          "seconds_per_epoch";
    for (double e : cfg.epsilons) os << ",claim_eps_" << fixed6(e);
    os << "\n";
    os << fixed6(r.eval.accuracy) << "," << fixed6(r.eval.tpr) << "," << fixed6(r.eval.fpr) << ","
       << fixed6(r.stolen_clean_accuracy) << "," << fixed6(r.gateway_clean_accuracy) << ","
       << fixed6(r.owner_verified_fraction) << "," << fixed6(r.simulated_fraction) << ","
       << fixed6(r.formula_prediction) << "," << fixed6(r.generalization_tpr) << ","
       << fixed6(r.seconds_per_epoch);
    for (bool c : r.claims) os << "," << (c ? 1 : 0);
    os << "\n";
    return os.str();
}

FineTuneProbe fine_tune_probe(const ExperimentConfig& cfg, const OwnerArtifacts& owner,
                              const Dataset& train, const Dataset& test, size_t epochs,
                              float lr) {
    FineTuneProbe probe;
    probe.trigger_acc_before = trigger_accuracy(owner.model, owner.triggers);
    probe.test_acc_before = accuracy(owner.model, to_batch(test));
    const Model tuned = fine_tune(owner.model, train, epochs, lr, cfg.batch_size,
                                  cfg.component_seed("fine-tune/probe"));
    probe.trigger_acc_after = trigger_accuracy(tuned, owner.triggers);
    probe.test_acc_after = accuracy(tuned, to_batch(test));
    return probe;
}

std::string summary_report_csv(const ExperimentConfig& cfg,
                               const std::vector<OwnerArtifacts>& owners,
                               const FineTuneProbe* probe) {
    std::ostringstream os;
    os << report_header(cfg);
    os << "row,owner_id,test_accuracy,trigger_accuracy\n";
    for (size_t i = 0; i < owners.size(); ++i)
        os << "owner," << owners[i].triggers.owner_id << "," << fixed6(owners[i].test_accuracy)
           << "," << fixed6(owners[i].trigger_acc) << "\n";

    os << "analytics,n,die_model_exact";
    for (double e : cfg.epsilons) os << ",claim_prob_eps_" << fixed6(e);
    os << "\n";
    for (size_t n : cfg.ensemble_sizes) {
        if (n < 2) continue;
        os << "analytics," << n << "," << fixed6(exact_ensemble_verification(n, 10));
        for (double e : cfg.epsilons)
            os << ","
               << fixed6(predict_claim_probability(n, 10, cfg.triggers_per_owner, e));
        os << "\n";
    }

    if (probe) {
        os << "fine_tune_probe,trigger_before,trigger_after,test_before,test_after\n";
        os << "fine_tune_probe," << fixed6(probe->trigger_acc_before) << ","
           << fixed6(probe->trigger_acc_after) << "," << fixed6(probe->test_acc_before) << ","
           << fixed6(probe->test_acc_after) << "\n";
    }
    return os.str();
}

}  // namespace wmevade
