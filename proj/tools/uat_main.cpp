#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "uat/deep_taylor.hpp"
#include "uat/mc.hpp"
#include "uat/network.hpp"
#include "uat/pgm.hpp"
#include "uat/rng.hpp"
#include "uat/synthgen.hpp"
#include "uat/trainer.hpp"
#include "uat/triage.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using json = nlohmann::ordered_json;

std::string fmt6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Manifest files are written atomically and contain no timestamps, so two
// runs with the same parameters produce byte-identical manifests.
void write_manifest(const json& manifest, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("manifest: cannot open " + tmp);
        os << manifest.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

json base_manifest(const std::string& command, std::uint64_t seed) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = seed;
    return m;
}

// Per-image MC base seed: decorrelated from the pass schedule inside
// mc_predict (which xors the pass index) and from neighbouring images.
std::uint64_t image_seed(std::uint64_t run_seed, std::size_t index) {
    return uat::rng::mix(run_seed ^ uat::rng::mix(index));
}

std::vector<uat::PredictiveSummary> summarize_dataset(
    const uat::ModelConfig& cfg, const uat::WeightSet& ws,
    const uat::LabeledDataset& ds, std::size_t passes, std::uint64_t seed) {
    std::vector<uat::PredictiveSummary> out;
    out.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        out.push_back(uat::summarize(
            uat::mc_predict(cfg, ws, ds.images[i], passes, image_seed(seed, i))));
    return out;
}

int run_synth(const std::string& out_dir, std::vector<std::size_t> counts,
              std::size_t size, double sigma, double ambiguous, std::uint64_t seed) {
    if (counts.size() != uat::kSynthClasses)
        throw std::invalid_argument("synth: --counts needs exactly 5 values");
    uat::SynthSpec spec;
    spec.image_size = size;
    std::copy(counts.begin(), counts.end(), spec.class_counts.begin());
    spec.noise_sigma = sigma;
    spec.ambiguous_fraction = ambiguous;
    spec.seed = seed;

    std::filesystem::create_directories(out_dir);
    auto ds = uat::generate_dataset(spec);
    uat::write_dataset(ds, out_dir);

    json m = base_manifest("synth", seed);
    m["parameters"] = {{"counts", counts},
                       {"size", size},
                       {"sigma", sigma},
                       {"ambiguous", ambiguous}};
    m["outputs"] = {{"dataset", out_dir}, {"flags", out_dir + "/flags.csv"}};
    write_manifest(m, (std::filesystem::path(out_dir) / "manifest.json").string());
    std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size()
              << " test images to " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& data_dir, const std::string& out_path,
              std::string history_path, const uat::TrainConfig& tc) {
    auto ds = uat::load_dataset(data_dir);
    const auto& shape = ds.images.front().shape;
    auto cfg = uat::build_reference_model({shape[0], shape[1], shape[2]},
                                          ds.class_names);
    auto [ws, history] = uat::train(cfg, ds, tc);

    uat::save_weights(cfg, ws, out_path);
    if (history_path.empty()) history_path = out_path + ".history.csv";
    uat::save_history_csv(history, history_path);

    json m = base_manifest("train", tc.seed);
    m["parameters"] = {{"epochs", tc.epochs},
                       {"learning_rate", tc.learning_rate},
                       {"momentum", tc.momentum},
                       {"batch_size", tc.batch_size},
                       {"augmentation_limit", tc.augmentation_limit},
                       {"validation_fraction", tc.validation_fraction}};
    m["inputs"] = {{"data", data_dir}};
    m["outputs"] = {{"model", out_path}, {"history", history_path}};
    write_manifest(m, out_path + ".manifest.json");

    const auto& last = history.back();
    std::cout << "final epoch: loss " << fmt6(last.loss) << ", train_acc "
              << fmt6(last.train_accuracy) << ", val_acc "
              << fmt6(last.val_accuracy) << "\n";
    return 0;
}

int run_predict(const std::string& model_path, const std::string& image_path) {
    auto [cfg, ws] = uat::load_weights(model_path);
    auto img = uat::read_pgm(image_path);
    auto r = uat::forward(cfg, ws, img, uat::ForwardMode::deterministic());
    std::size_t best = 0;
    for (std::size_t c = 1; c < cfg.num_classes(); ++c)
        if (r.probs[c] > r.probs[best]) best = c;
    std::cout << "class " << cfg.class_names[best] << "\n";
    for (std::size_t c = 0; c < cfg.num_classes(); ++c)
        std::cout << cfg.class_names[c] << " " << fmt6(r.probs[c]) << "\n";
    return 0;
}

int run_mc_predict(const std::string& model_path, const std::string& image_path,
                   std::size_t passes, std::uint64_t seed, const std::string& out_path,
                   const std::string& hist_path, std::size_t bins) {
    auto [cfg, ws] = uat::load_weights(model_path);
    auto img = uat::read_pgm(image_path);
    auto sample = uat::mc_predict(cfg, ws, img, passes, seed);
    uat::save_sample_csv(sample, cfg.class_names, out_path);
    if (!hist_path.empty())
        uat::save_histogram_csv(uat::histogram(sample, bins), cfg.class_names,
                                hist_path);

    auto summary = uat::summarize(sample);
    std::cout << "class " << cfg.class_names[summary.predicted_class]
              << " confidence " << fmt6(summary.confidence) << "\n";

    json m = base_manifest("mc-predict", seed);
    m["parameters"] = {{"passes", passes}, {"bins", bins}};
    m["inputs"] = {{"model", model_path}, {"image", image_path}};
    m["outputs"] = {{"sample", out_path}};
    if (!hist_path.empty()) m["outputs"]["histogram"] = hist_path;
    write_manifest(m, out_path + ".manifest.json");
    return 0;
}

int run_explain(const std::string& model_path, const std::string& image_path,
                const std::string& out_path, const std::string& raw_path,
                int target_class) {
    auto [cfg, ws] = uat::load_weights(model_path);
    auto img = uat::read_pgm(image_path);
    std::optional<std::size_t> target;
    if (target_class >= 0) target = static_cast<std::size_t>(target_class);
    auto map = uat::relevance(cfg, ws, img, target);
    uat::save_heatmap_pgm(map, out_path);
    if (!raw_path.empty()) uat::save_relevance_csv(map, raw_path);
    if (map.negative_logit)
        std::cerr << "warning: target logit is not positive; heatmap is all zero\n";
    std::cout << "target " << cfg.class_names[map.target_class] << " relevance "
              << fmt6(map.output_relevance) << "\n";

    json m = base_manifest("explain", 0);
    m["parameters"] = {{"class", target_class}};
    m["inputs"] = {{"model", model_path}, {"image", image_path}};
    m["outputs"] = {{"heatmap", out_path}};
    if (!raw_path.empty()) m["outputs"]["raw"] = raw_path;
    write_manifest(m, out_path + ".manifest.json");
    return 0;
}

int run_calibrate(const std::string& model_path, const std::string& data_dir,
                  std::size_t passes, double percentile, std::uint64_t seed,
                  const std::string& out_path, bool group_by_true) {
    auto [cfg, ws] = uat::load_weights(model_path);
    auto ds = uat::load_dataset(data_dir);
    if (ds.class_names != cfg.class_names)
        throw std::runtime_error("calibrate: dataset classes do not match the model");
    auto summaries = summarize_dataset(cfg, ws, ds, passes, seed);
    auto table = uat::calibrate_thresholds(
        summaries, ds.labels, cfg.class_names, percentile,
        group_by_true ? uat::CalibrationGrouping::TrueClass
                      : uat::CalibrationGrouping::PredictedClass);
    uat::save_thresholds(table, out_path);

    json m = base_manifest("calibrate", seed);
    m["parameters"] = {{"passes", passes},
                       {"percentile", percentile},
                       {"group_by_true", group_by_true}};
    m["inputs"] = {{"model", model_path}, {"data", data_dir}};
    m["outputs"] = {{"thresholds", out_path}};
    write_manifest(m, out_path + ".manifest.json");

    for (std::size_t c = 0; c < table.class_names.size(); ++c)
        std::cout << table.class_names[c] << " " << fmt6(table.thresholds[c]) << "\n";
    return 0;
}

void save_decisions_csv(const uat::LabeledDataset& ds,
                        const std::vector<uat::PredictiveSummary>& summaries,
                        const uat::ThresholdTable& table, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("triage: cannot open " + tmp);
        os << "filename,true_class,predicted_class,confidence,threshold,decision\n";
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto o = uat::decide(summaries[i], table);
            os << (i < ds.paths.size() ? ds.paths[i] : std::to_string(i)) << ","
               << ds.class_names[ds.labels[i]] << ","
               << ds.class_names[summaries[i].predicted_class] << ","
               << fmt6(summaries[i].confidence) << "," << fmt6(o.threshold_applied)
               << "," << (o.accepted ? "accept" : "refer") << "\n";
        }
    }
    std::filesystem::rename(tmp, path);
}

int run_triage(const std::string& model_path, const std::string& data_dir,
               const std::string& thresholds_path, std::size_t passes,
               std::uint64_t seed, const std::string& out_dir) {
    auto [cfg, ws] = uat::load_weights(model_path);
    auto ds = uat::load_dataset(data_dir);
    if (ds.class_names != cfg.class_names)
        throw std::runtime_error("triage: dataset classes do not match the model");
    auto table = uat::load_thresholds(thresholds_path);
    if (table.class_names != cfg.class_names)
        throw std::runtime_error("triage: threshold classes do not match the model");

    auto summaries = summarize_dataset(cfg, ws, ds, passes, seed);
    auto report = uat::evaluate_with_referral(summaries, ds.labels, table);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string report_path = (fs::path(out_dir) / "report.csv").string();
    const std::string decisions_path = (fs::path(out_dir) / "decisions.csv").string();
    uat::save_report_csv(report, cfg.class_names, report_path);
    save_decisions_csv(ds, summaries, table, decisions_path);

    json m = base_manifest("triage", seed);
    m["parameters"] = {{"passes", passes}};
    m["inputs"] = {{"model", model_path},
                   {"data", data_dir},
                   {"thresholds", thresholds_path}};
    m["outputs"] = {{"report", report_path}, {"decisions", decisions_path}};
    write_manifest(m, (fs::path(out_dir) / "manifest.json").string());

    std::cout << "retained " << report.retained << " referred " << report.referred
              << " accuracy " << fmt6(report.accuracy) << "\n";
    return 0;
}

int run_curve(const std::string& model_path, const std::string& data_dir,
              std::size_t window, std::size_t passes, std::uint64_t seed,
              const std::string& out_path) {
    auto [cfg, ws] = uat::load_weights(model_path);
    auto ds = uat::load_dataset(data_dir);
    if (ds.class_names != cfg.class_names)
        throw std::runtime_error("curve: dataset classes do not match the model");
    auto summaries = summarize_dataset(cfg, ws, ds, passes, seed);
    auto curve = uat::removal_curve(summaries, ds.labels, window);
    uat::save_curve_csv(curve, out_path);

    json m = base_manifest("curve", seed);
    m["parameters"] = {{"window", window}, {"passes", passes}};
    m["inputs"] = {{"model", model_path}, {"data", data_dir}};
    m["outputs"] = {{"curve", out_path}};
    write_manifest(m, out_path + ".manifest.json");

    std::cout << "raw[0] " << fmt6(curve.raw.front()) << " raw[last] "
              << fmt6(curve.raw.back()) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty-aware image classification toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // synth
    std::string s_out;
    std::vector<std::size_t> s_counts;
    std::size_t s_size = 64;
    double s_sigma = 0.0, s_ambiguous = 0.0;
    std::uint64_t s_seed = 0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--counts", s_counts, "five per-class image counts")
        ->required()
        ->delimiter(',');
    synth->add_option("--size", s_size, "square image side");
    synth->add_option("--sigma", s_sigma, "gaussian pixel noise sigma");
    synth->add_option("--ambiguous", s_ambiguous, "fraction blended across classes");
    synth->add_option("--seed", s_seed, "random seed");

    // train
    std::string t_data, t_out, t_history;
    uat::TrainConfig tc;
    auto* train = app.add_subcommand("train", "train the reference model");
    train->add_option("--data", t_data, "directory-per-class dataset")->required();
    train->add_option("--out", t_out, "weight file to write")->required();
    train->add_option("--epochs", tc.epochs, "training epochs");
    train->add_option("--lr", tc.learning_rate, "learning rate");
    train->add_option("--momentum", tc.momentum, "SGD momentum");
    train->add_option("--batch", tc.batch_size, "mini-batch size");
    train->add_option("--augment", tc.augmentation_limit, "augmentation limit");
    train->add_option("--val-fraction", tc.validation_fraction, "validation split");
    train->add_option("--seed", tc.seed, "random seed");
    train->add_option("--history", t_history, "history CSV path");

    // predict
    std::string p_model, p_image;
    auto* predict = app.add_subcommand("predict", "deterministic single prediction");
    predict->add_option("--model", p_model, "weight file")->required();
    predict->add_option("--image", p_image, "PGM image")->required();

    // mc-predict
    std::string m_model, m_image, m_out, m_hist;
    std::size_t m_passes = 1000, m_bins = 50;
    std::uint64_t m_seed = 0;
    auto* mc = app.add_subcommand("mc-predict", "MC-dropout predictive distribution");
    mc->add_option("--model", m_model, "weight file")->required();
    mc->add_option("--image", m_image, "PGM image")->required();
    mc->add_option("--passes", m_passes, "stochastic forward passes");
    mc->add_option("--seed", m_seed, "base seed");
    mc->add_option("--out", m_out, "per-pass probability CSV")->required();
    mc->add_option("--hist", m_hist, "histogram CSV");
    mc->add_option("--bins", m_bins, "histogram bins");

    // explain
    std::string e_model, e_image, e_out, e_raw;
    int e_class = -1;
    auto* explain = app.add_subcommand("explain", "Deep Taylor attribution heatmap");
    explain->add_option("--model", e_model, "weight file")->required();
    explain->add_option("--image", e_image, "PGM image")->required();
    explain->add_option("--out", e_out, "heatmap PGM path")->required();
    explain->add_option("--raw", e_raw, "raw relevance CSV");
    explain->add_option("--class", e_class, "target class (default: predicted)");

    // calibrate
    std::string c_model, c_data, c_out;
    std::size_t c_passes = 1000;
    double c_percentile = 10.0;
    std::uint64_t c_seed = 0;
    bool c_true = false;
    auto* calibrate =
        app.add_subcommand("calibrate", "per-class confidence thresholds");
    calibrate->add_option("--model", c_model, "weight file")->required();
    calibrate->add_option("--data", c_data, "training dataset directory")->required();
    calibrate->add_option("--passes", c_passes, "stochastic forward passes");
    calibrate->add_option("--percentile", c_percentile, "nearest-rank percentile");
    calibrate->add_option("--seed", c_seed, "base seed");
    calibrate->add_option("--out", c_out, "threshold TSV path")->required();
    calibrate->add_flag("--group-by-true", c_true, "group by true instead of predicted class");

    // triage
    std::string g_model, g_data, g_thresholds, g_out;
    std::size_t g_passes = 1000;
    std::uint64_t g_seed = 0;
    auto* triage = app.add_subcommand("triage", "accept/refer evaluation");
    triage->add_option("--model", g_model, "weight file")->required();
    triage->add_option("--data", g_data, "test dataset directory")->required();
    triage->add_option("--thresholds", g_thresholds, "threshold TSV")->required();
    triage->add_option("--passes", g_passes, "stochastic forward passes");
    triage->add_option("--seed", g_seed, "base seed");
    triage->add_option("--out", g_out, "report directory")->required();

    // curve
    std::string u_model, u_data, u_out;
    std::size_t u_window = 5, u_passes = 1000;
    std::uint64_t u_seed = 0;
    auto* curve = app.add_subcommand("curve", "uncertainty-ordered removal curve");
    curve->add_option("--model", u_model, "weight file")->required();
    curve->add_option("--data", u_data, "test dataset directory")->required();
    curve->add_option("--window", u_window, "moving-average window");
    curve->add_option("--passes", u_passes, "stochastic forward passes");
    curve->add_option("--seed", u_seed, "base seed");
    curve->add_option("--out", u_out, "curve CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth)
            return run_synth(s_out, s_counts, s_size, s_sigma, s_ambiguous, s_seed);
        if (*train) return run_train(t_data, t_out, t_history, tc);
        if (*predict) return run_predict(p_model, p_image);
        if (*mc)
            return run_mc_predict(m_model, m_image, m_passes, m_seed, m_out, m_hist,
                                  m_bins);
        if (*explain) return run_explain(e_model, e_image, e_out, e_raw, e_class);
        if (*calibrate)
            return run_calibrate(c_model, c_data, c_passes, c_percentile, c_seed,
                                 c_out, c_true);
        if (*triage)
            return run_triage(g_model, g_data, g_thresholds, g_passes, g_seed, g_out);
        if (*curve)
            return run_curve(u_model, u_data, u_window, u_passes, u_seed, u_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
