#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "befseg/config.hpp"
#include "befseg/train.hpp"
#include "befseg/verify.hpp"

using namespace befseg;
namespace fs = std::filesystem;

namespace {

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return RunConfig{};  // documented defaults
    return RunConfig::from_json_file(path);
}

Dataset load_configured_dataset(const RunConfig& cfg) {
    fs::path manifest = fs::path(cfg.data_dir) / "manifest.tsv";
    if (!fs::exists(manifest))
        throw std::runtime_error("no dataset manifest at '" + manifest.string() +
                                 "'; run gen-data first");
    return load_dataset(manifest.string(), cfg.num_classes);
}

void maybe_load(Model& model, const std::string& checkpoint) {
    if (!checkpoint.empty()) model.load(checkpoint);
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

int cmd_gen_data(const RunConfig& cfg) {
    std::string manifest = generate_dataset(cfg.dataset());
    std::cout << "wrote " << manifest << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, bool ablation) {
    Dataset data = load_configured_dataset(cfg);
    ModelConfig mc = cfg.model();
    TrainConfig tc = cfg.train();

    if (ablation) {
        AblationReport rep = run_ablation(mc, data, tc);
        std::cout << rep.to_json() << "\n";
        return 0;
    }

    Rng rng(cfg.seed);
    Model model(mc, rng);
    TrainResult res = run_training(model, data, tc);
    std::printf("trained %zu epochs, %zu parameters\n", tc.epochs, model.parameter_count());
    std::printf("best val mIoU %.6f at epoch %zu -> %s\n", res.best_val_miou, res.best_epoch,
                res.best_path.c_str());
    std::printf("final val mIoU %.6f -> %s\n", res.final_val_miou, res.final_path.c_str());
    std::printf("loss trace -> %s\n", res.csv_path.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
    Dataset data = load_configured_dataset(cfg);
    const std::vector<Sample>& samples = data.split(split);
    Rng rng(cfg.seed);
    Model model(cfg.model(), rng);
    maybe_load(model, checkpoint);

    MetricsReport rep = evaluate_model(model, samples);
    const Image& probe = samples.front().image;
    rep.fps = fps_bench(
                  [&] {
                      NoGradGuard ng;
                      model.forward(probe);
                  },
                  model.config().image_size)
                  .fps;

    std::string json = rep.to_json();
    std::cout << json << "\n";
    write_text(fs::path(cfg.out_dir) / ("eval_" + split + ".json"), json + "\n");
    return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint, const std::string& split,
              std::size_t limit) {
    Dataset data = load_configured_dataset(cfg);
    const std::vector<Sample>& samples = data.split(split);
    Rng rng(cfg.seed);
    Model model(cfg.model(), rng);
    maybe_load(model, checkpoint);

    fs::path dir = fs::path(cfg.out_dir) / "infer";
    fs::create_directories(dir);

    NoGradGuard ng;
    std::size_t count = std::min(limit == 0 ? samples.size() : limit, samples.size());
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = samples[i];
        ForwardResult fwd = model.forward(s.image);
        LabelMap pred = semantic_argmax(fwd.masks_full);
        write_ppm((dir / (s.id + "_pred.ppm")).string(),
                  colorize_labels(pred, model.config().num_classes));

        // predicted boundary at the finest scale, replicated up to full
        // resolution for side-by-side viewing
        Tensor bm = boundary_map(fwd.encoded.levels[0], model.boundary_head().projections[0]);
        while (bm.shape()[1] < s.image.height)
            bm = resample(bm, Resample::kUpsampleNearest2x);
        EdgeMap em{s.image.height, s.image.width, bm.values()};
        write_pgm((dir / (s.id + "_boundary.pgm")).string(), em);
    }
    std::cout << "wrote " << count << " prediction pairs to " << dir.string() << "\n";
    return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& checkpoint) {
    Rng init_rng(cfg.seed);
    Model model(cfg.model(), init_rng);
    maybe_load(model, checkpoint);
    Rng rng(mix_seed(cfg.seed, 99));
    Sample probe = generate_scene(cfg.dataset().scene, rng);

    BenchResult bench = fps_bench(
        [&] {
            NoGradGuard ng;
            model.forward(probe.image);
        },
        model.config().image_size);
    std::cout << bench.to_json() << "\n";
    return 0;
}

int cmd_verify(bool inject_fault) {
    std::vector<verify::CheckResult> results = verify::run_all(inject_fault);
    for (const verify::CheckResult& r : results)
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
    if (verify::all_passed(results)) {
        std::printf("all %zu checks passed\n", results.size());
        return 0;
    }
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"boundary-enhanced segmentation: data, training, and verification"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, split = "val";
    std::size_t limit = 8;
    bool ablation = false, inject_fault = false;

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic scene dataset");
    gen->add_option("--config", config_path, "JSON run configuration");

    CLI::App* train = app.add_subcommand("train", "train a model on the generated dataset");
    train->add_option("--config", config_path, "JSON run configuration");
    train->add_flag("--ablation", ablation, "run the boundary-loss ablation instead");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval->add_option("--config", config_path, "JSON run configuration");
    eval->add_option("--checkpoint", checkpoint, "model checkpoint to load")->required();
    eval->add_option("--split", split, "dataset split (train, val, test)");

    CLI::App* infer = app.add_subcommand("infer", "write colorized predictions and boundaries");
    infer->add_option("--config", config_path, "JSON run configuration");
    infer->add_option("--checkpoint", checkpoint, "model checkpoint to load")->required();
    infer->add_option("--split", split, "dataset split (train, val, test)");
    infer->add_option("--limit", limit, "how many samples to render (0 = all)");

    CLI::App* bench = app.add_subcommand("bench", "measure forward throughput");
    bench->add_option("--config", config_path, "JSON run configuration");
    bench->add_option("--checkpoint", checkpoint, "optional checkpoint to load");

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the numerical verification suite");
    verify_cmd->add_flag("--inject-fault", inject_fault,
                         "corrupt one backward rule first; the suite must then fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help is a success, everything else is usage
    }

    try {
        if (*verify_cmd) return cmd_verify(inject_fault);
        RunConfig cfg = load_run_config(config_path);
        if (*gen) return cmd_gen_data(cfg);
        if (*train) return cmd_train(cfg, ablation);
        if (*eval) return cmd_eval(cfg, checkpoint, split);
        if (*infer) return cmd_infer(cfg, checkpoint, split, limit);
        if (*bench) return cmd_bench(cfg, checkpoint);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;  // unreachable with require_subcommand, kept for safety
}
