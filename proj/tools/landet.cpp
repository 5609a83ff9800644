// landet command-line entry point. One subcommand per pipeline stage plus
// `eval` for the full experiment. Every command drops a manifest.json in
// the output directory listing emitted artifacts with FNV-1a checksums.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "landet/attacks.hpp"
#include "landet/datasets.hpp"
#include "landet/detector.hpp"
#include "landet/eval.hpp"
#include "landet/models.hpp"
#include "landet/training.hpp"

using namespace landet;
using nlohmann::ordered_json;

namespace {

struct GlobalOpts {
    uint64_t seed = 1;
    bool seed_set = false;
    std::string config_path;
    std::string out_dir = ".";
    int threads = 1;
};

struct Manifest {
    std::string command;
    GlobalOpts opts;
    std::vector<std::string> inputs;
    ordered_json artifacts = ordered_json::object();
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void add_artifact(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string bytes = ss.str();
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      (unsigned long long)fnv1a64(bytes.data(), bytes.size()));
        artifacts[std::filesystem::path(path).filename().string()] = hex;
    }

    void write() const {
        ordered_json j;
        j["command"] = command;
        j["config"] = opts.config_path;
        j["seed"] = opts.seed;
        j["threads"] = opts.threads;
        j["inputs"] = inputs;
        j["artifacts"] = artifacts;
        j["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        std::ofstream out(opts.out_dir + "/manifest.json", std::ios::trunc);
        if (!out) fail(Error::Kind::io, "cannot write manifest in " + opts.out_dir);
        out << j.dump(2) << "\n";
    }
};

ExperimentConfig load_experiment_config(const GlobalOpts& g) {
    ExperimentConfig c = g.config_path.empty()
                             ? ExperimentConfig::defaults()
                             : ExperimentConfig::from_json_file(g.config_path);
    if (g.seed_set) c.seed = g.seed;  // flags win over file values
    return c;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Error::Kind::io, "cannot write " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

Model load_role_checked(const std::string& path, ModelRole expected) {
    Model m = checkpoint_load(path);
    if (m.role != expected)
        fail(Error::Kind::invalid_argument,
             "checkpoint " + path + " holds role '" + role_name(m.role) +
                 "', expected '" + role_name(expected) + "'");
    return m;
}

// ------------------------------------------------------------- commands ---

void cmd_gen_toy(const GlobalOpts& g) {
    Manifest man;
    man.command = "gen-toy";
    man.opts = g;
    const ExperimentConfig c = load_experiment_config(g);
    auto [train, test] =
        gen_toy_dataset(c.class_count, c.dims, c.samples_per_class, c.seed);
    std::filesystem::create_directories(g.out_dir);
    save_dataset(train, g.out_dir, "toy_train");
    save_dataset(test, g.out_dir, "toy_test");
    for (const char* n : {"toy_train.json", "toy_train.bin", "toy_test.json",
                          "toy_test.bin"})
        man.add_artifact(g.out_dir + "/" + n);
    man.write();
    std::cout << "wrote " << train.size() << " train / " << test.size()
              << " test images to " << g.out_dir << "\n";
}

void cmd_train(const GlobalOpts& g, const std::string& role_str,
               const std::string& data_dir, const std::string& classifier_path,
               const std::string& g_path) {
    Manifest man;
    man.command = "train";
    man.opts = g;
    man.inputs = {data_dir};

    const ModelRole role = role_from_name(role_str);
    const ExperimentConfig c = load_experiment_config(g);
    Dataset train = load_dataset(data_dir, "toy_train");
    Dataset test = load_dataset(data_dir, "toy_test");

    TrainConfig tc;
    switch (role) {
        case ModelRole::image_classifier_f1: tc = c.f1_train; break;
        case ModelRole::transfer_classifier_f1p: tc = c.f1p_train; break;
        case ModelRole::attention_net_g: tc = c.g_train; break;
        case ModelRole::mask_classifier_f2: tc = c.f2_train; break;
    }
    tc.seed = c.seed;

    Model model = build_model(role, train.dims, train.class_count, c.seed);
    TrainReport report;
    if (role == ModelRole::attention_net_g) {
        if (classifier_path.empty())
            fail(Error::Kind::invalid_argument,
                 "training the attention net needs --classifier");
        man.inputs.push_back(classifier_path);
        const Model frozen =
            load_role_checked(classifier_path, ModelRole::image_classifier_f1);
        report = train_lan(model, frozen, train, tc);
    } else if (role == ModelRole::mask_classifier_f2) {
        if (g_path.empty())
            fail(Error::Kind::invalid_argument,
                 "training the mask classifier needs --attention-net");
        man.inputs.push_back(g_path);
        const Model gnet = load_role_checked(g_path, ModelRole::attention_net_g);
        Dataset mask_train;
        if (!classifier_path.empty()) {
            man.inputs.push_back(classifier_path);
            const Model frozen =
                load_role_checked(classifier_path, ModelRole::image_classifier_f1);
            mask_train = build_mask_dataset_augmented(gnet, frozen, train,
                                                      tc.input_jitter, c.seed);
        } else {
            mask_train = build_mask_dataset(gnet, train);
        }
        const Dataset mask_test = build_mask_dataset(gnet, test);
        report = train_classifier(model, mask_train, mask_test, tc);
    } else {
        report = train_classifier(model, train, test, tc);
    }

    std::filesystem::create_directories(g.out_dir);
    const std::string ckpt = g.out_dir + "/" + role_str + ".ckpt";
    checkpoint_save(model, ckpt);
    write_text(g.out_dir + "/" + role_str + "_train_report.json", report.to_json(tc));
    man.add_artifact(ckpt);
    man.add_artifact(g.out_dir + "/" + role_str + "_train_report.json");
    man.write();
    std::cout << "trained " << role_str << ": test accuracy " << report.test_accuracy
              << "\n";
}

void cmd_attack(const GlobalOpts& g, const std::string& victim_path,
                const std::string& data_dir, const std::string& attack_str,
                size_t count) {
    Manifest man;
    man.command = "attack";
    man.opts = g;
    man.inputs = {victim_path, data_dir};

    const ExperimentConfig c = load_experiment_config(g);
    const Model victim = checkpoint_load(victim_path);
    const Dataset test = load_dataset(data_dir, "toy_test");
    const AttackKind kind = attack_from_name(attack_str);

    PairedEvalSet ps = build_paired_set(victim, test, kind, c.attack, count);
    std::filesystem::create_directories(g.out_dir);
    save_paired_set(ps, c.attack, test.dims, g.out_dir, attack_str);
    for (const auto& entry : std::filesystem::directory_iterator(g.out_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind(attack_str, 0) == 0) man.add_artifact(entry.path().string());
    }
    man.write();
    std::cout << "built " << ps.adversarial.size() << " adversarial / "
              << ps.benign.size() << " benign pairs (" << attack_str << ")\n";
}

void cmd_detect(const GlobalOpts& g, const std::string& f1_path,
                const std::string& g_path, const std::string& f2_path,
                const std::string& data_dir) {
    Manifest man;
    man.command = "detect";
    man.opts = g;
    man.inputs = {f1_path, g_path, f2_path, data_dir};

    const Model f1 = load_role_checked(f1_path, ModelRole::image_classifier_f1);
    const Model gnet = load_role_checked(g_path, ModelRole::attention_net_g);
    const Model f2 = load_role_checked(f2_path, ModelRole::mask_classifier_f2);
    const Dataset test = load_dataset(data_dir, "toy_test");

    std::vector<VerdictRow> rows;
    int idx = 0;
    for (const LabeledImage& li : test.items) {
        const DetectionVerdict v = detect(f1, gnet, f2, li.image);
        rows.push_back({idx++, li.label, v.y1, v.y2, v.is_adversarial, "benign"});
    }
    std::filesystem::create_directories(g.out_dir);
    write_text(g.out_dir + "/verdicts.csv", verdicts_to_csv(rows));
    man.add_artifact(g.out_dir + "/verdicts.csv");
    man.write();
    size_t flagged = 0;
    for (const VerdictRow& r : rows)
        if (r.is_adversarial) ++flagged;
    std::cout << "flagged " << flagged << "/" << rows.size() << " inputs\n";
}

void cmd_eval(const GlobalOpts& g) {
    Manifest man;
    man.command = "eval";
    man.opts = g;
    if (!g.config_path.empty()) man.inputs.push_back(g.config_path);

    const ExperimentConfig c = load_experiment_config(g);
    const ExperimentResult r = run_experiment(c);

    std::filesystem::create_directories(g.out_dir);
    write_text(g.out_dir + "/report.json", r.report_json(c));
    man.add_artifact(g.out_dir + "/report.json");
    for (const auto& [name, csv] : r.verdict_csv) {
        write_text(g.out_dir + "/" + name + ".csv", csv);
        man.add_artifact(g.out_dir + "/" + name + ".csv");
    }
    const std::vector<std::pair<const Model*, const char*>> models = {
        {&r.f1, "image_classifier_f1"},
        {&r.g, "attention_net_g"},
        {&r.f2, "mask_classifier_f2"}};
    for (const auto& [m, name] : models) {
        const std::string path = g.out_dir + "/" + name + ".ckpt";
        checkpoint_save(*m, path);
        man.add_artifact(path);
    }
    if (c.run_transfer) {
        const std::string path = g.out_dir + "/transfer_classifier_f1p.ckpt";
        checkpoint_save(r.f1p, path);
        man.add_artifact(path);
    }
    man.write();
    std::cout << "f1 accuracy " << r.f1_test_accuracy << ", f2 mask accuracy "
              << r.f2_mask_accuracy << ", " << r.metrics.size()
              << " metric rows -> " << g.out_dir << "/report.json\n";
}

void cmd_export_masks(const GlobalOpts& g, const std::string& g_path,
                      const std::string& data_dir, size_t count) {
    Manifest man;
    man.command = "export-masks";
    man.opts = g;
    man.inputs = {g_path, data_dir};

    const Model gnet = load_role_checked(g_path, ModelRole::attention_net_g);
    const Dataset test = load_dataset(data_dir, "toy_test");
    std::vector<Tensor> masks;
    for (const LabeledImage& li : test.items) {
        if (masks.size() >= count) break;
        masks.push_back(generate_mask(gnet, li.image));
    }
    std::filesystem::create_directories(g.out_dir);
    export_mask_images(masks, g.out_dir, "mask");
    for (size_t i = 0; i < masks.size(); ++i)
        man.add_artifact(g.out_dir + "/mask_" + std::to_string(i) + ".pgm");
    man.write();
    std::cout << "exported " << masks.size() << " masks to " << g.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-input detection via attention-mask agreement"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--seed", g.seed, "experiment seed (overrides config)")
        ->each([&](const std::string&) { g.seed_set = true; });
    app.add_option("--config", g.config_path, "experiment config JSON")
        ->check(CLI::ExistingFile);
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--threads", g.threads, "worker cap (1 = exact reproducibility)")
        ->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen-toy", "generate the procedural toy dataset");

    auto* train = app.add_subcommand("train", "train one model role");
    std::string role_str, data_dir, classifier_path, gnet_path;
    train->add_option("--role", role_str, "model role name")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--classifier", classifier_path,
                      "frozen classifier checkpoint (attention-net training; "
                      "optional for mask-classifier augmentation)");
    train->add_option("--attention-net", gnet_path,
                      "attention-net checkpoint (mask-classifier training)");

    auto* attack = app.add_subcommand("attack", "build a paired adversarial set");
    std::string victim_path, attack_str = "fgsm";
    size_t pair_count = 25;
    attack->add_option("--victim", victim_path, "victim checkpoint")->required();
    attack->add_option("--data", data_dir, "dataset directory")->required();
    attack->add_option("--attack", attack_str, "fgsm | jsma | cw_l2");
    attack->add_option("--count", pair_count, "pairs to build");

    auto* detect_cmd = app.add_subcommand("detect", "run the detector over a dataset");
    std::string f1_path, f2_path;
    detect_cmd->add_option("--f1", f1_path, "image classifier checkpoint")->required();
    detect_cmd->add_option("--g", gnet_path, "attention net checkpoint")->required();
    detect_cmd->add_option("--f2", f2_path, "mask classifier checkpoint")->required();
    detect_cmd->add_option("--data", data_dir, "dataset directory")->required();

    auto* eval = app.add_subcommand("eval", "full experiment: train, attack, report");

    auto* masks = app.add_subcommand("export-masks", "write attention masks as PGM");
    size_t mask_count = 16;
    masks->add_option("--g", gnet_path, "attention net checkpoint")->required();
    masks->add_option("--data", data_dir, "dataset directory")->required();
    masks->add_option("--count", mask_count, "masks to export");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) cmd_gen_toy(g);
        else if (train->parsed())
            cmd_train(g, role_str, data_dir, classifier_path, gnet_path);
        else if (attack->parsed())
            cmd_attack(g, victim_path, data_dir, attack_str, pair_count);
        else if (detect_cmd->parsed())
            cmd_detect(g, f1_path, gnet_path, f2_path, data_dir);
        else if (eval->parsed()) cmd_eval(g);
        else if (masks->parsed()) cmd_export_masks(g, gnet_path, data_dir, mask_count);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
