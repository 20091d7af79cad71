#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "r2upp/checkpoint.hpp"
#include "r2upp/data.hpp"
#include "r2upp/run_config.hpp"
#include "r2upp/trainer.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace r2upp;

void apply_thread_cap() {
    if (const char* env = std::getenv("R2UPP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) openblas_set_num_threads(n);
    }
}

struct ModeArg {
    bool ensemble = true;
    int q = 0;
};

ModeArg parse_mode(const std::string& mode) {
    if (mode == "ensemble") return {true, 0};
    if (mode.size() == 2 && mode[0] == 'L' && mode[1] >= '1' && mode[1] <= '4')
        return {false, mode[1] - '0'};
    throw ConfigError("mode must be ensemble|L1|L2|L3|L4, got '" + mode + "'");
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data::DataError(path + ": cannot write");
    out << text;
}

// Patch-based probability map: edge-anchored sliding window, per-patch
// forward, mean-stitched.
data::Image predict_patched(Model& model, const data::Image& image, const ModeArg& mode,
                            int patch_size, int stride) {
    const int div = 1 << model.arch.depth;
    if (patch_size % div != 0)
        throw ShapeError("patch size " + std::to_string(patch_size) + " not divisible by " +
                         std::to_string(div));
    GraphPlan plan = mode.ensemble ? model.plan : prune(model.plan, mode.q);
    data::PatchGrid grid =
        data::make_patch_grid(image.h, image.w, patch_size, stride, /*edge_anchored=*/true);
    std::vector<data::Image> probs;
    probs.reserve(grid.anchors.size());
    for (const data::Image& patch : data::extract_patches(image, grid)) {
        std::vector<const data::Image*> one{&patch};
        Tensor x = images_to_tensor(one);
        ForwardResult fwd = forward(plan, model.arch, model.store, x, /*train=*/false);
        Tensor p;
        if (mode.ensemble) {
            std::vector<Tensor> outs;
            for (const autograd::Var& h : fwd.heads) outs.push_back(h->value);
            p = ensemble(outs);
        } else {
            p = fwd.heads.at(0)->value;
        }
        data::Image prob(patch.h, patch.w);
        prob.px.assign(p.data.begin(), p.data.end());
        probs.push_back(std::move(prob));
    }
    return data::stitch_patches(probs, grid).image;
}

std::string metrics_csv(const std::vector<std::string>& ids, const std::string& model_name,
                        const MetricSummary& summary) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << "dataset,model,dice,iou,accuracy,sensitivity,specificity\n";
    for (size_t i = 0; i < summary.per_image.size(); ++i) {
        const auto& r = summary.per_image[i];
        out << ids[i] << "," << model_name << "," << r.dice << "," << r.iou << "," << r.accuracy
            << "," << r.sensitivity << "," << r.specificity << "\n";
    }
    const auto& m = summary.mean;
    out << "mean," << model_name << "," << m.dice << "," << m.iou << "," << m.accuracy << ","
        << m.sensitivity << "," << m.specificity << "\n";
    return out.str();
}

int cmd_train(const RunConfig& base_config, int trials) {
    if (base_config.train_manifest.empty())
        throw data::DataError("train: train_manifest is required");
    std::vector<data::ImageSample> train_set = data::load_manifest(base_config.train_manifest);
    std::vector<data::ImageSample> val_set = base_config.val_manifest.empty()
                                                 ? train_set
                                                 : data::load_manifest(base_config.val_manifest);

    for (int trial = 0; trial < trials; ++trial) {
        RunConfig config = base_config;
        config.trainer.seed = base_config.trainer.seed + static_cast<uint64_t>(trial);
        const std::string out_dir =
            trials == 1 ? config.out_dir : config.out_dir + "/trial" + std::to_string(trial);
        std::filesystem::create_directories(out_dir);

        Model model = build_model(config.arch, config.trainer.seed);
        FitResult result = fit(model, train_set, val_set, config.trainer);

        save_checkpoint(model, out_dir + "/best.ckpt");
        // swap in the last-epoch weights for the final checkpoint
        std::vector<Tensor> best_values;
        for (auto& p : model.store.all()) best_values.push_back(p->value);
        for (size_t i = 0; i < model.store.all().size(); ++i)
            model.store.all()[i]->value = result.final_values[i];
        save_checkpoint(model, out_dir + "/final.ckpt");
        for (size_t i = 0; i < model.store.all().size(); ++i)
            model.store.all()[i]->value = best_values[i];

        write_file(out_dir + "/history.csv", history_csv(result.history));
        std::cout << "trial " << trial << ": " << result.history.size() << " epochs, best val loss "
                  << result.best_val_loss << " at epoch " << result.best_epoch
                  << ", train dice " << result.final_train_dice << "\n";
    }
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& image_path,
                const std::string& mode_str, const std::string& out_prefix, int patch_size,
                int stride, double threshold) {
    Model model = load_checkpoint(ckpt_path);
    const ModeArg mode = parse_mode(mode_str);
    data::Image image = data::load_pgm(image_path);
    data::Image prob = predict_patched(model, image, mode, patch_size, stride);

    std::string prefix = out_prefix;
    if (prefix.empty()) {
        prefix = image_path;
        if (const size_t dot = prefix.rfind(".pgm"); dot != std::string::npos)
            prefix = prefix.substr(0, dot);
    }
    data::save_pgm(prob, prefix + "_prob.pgm");
    data::Image mask(prob.h, prob.w);
    mask.px = metrics::binarize(prob.px, threshold);
    data::save_pgm(mask, prefix + "_mask.pgm");
    std::cout << "wrote " << prefix << "_mask.pgm and " << prefix << "_prob.pgm\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& mode_str, const std::string& out_path, int patch_size,
                 int stride, double threshold) {
    Model model = load_checkpoint(ckpt_path);
    const ModeArg mode = parse_mode(mode_str);
    std::vector<data::ImageSample> samples = data::load_manifest(manifest_path);

    MetricSummary summary;
    std::vector<std::string> ids;
    const int div = 1 << model.arch.depth;
    for (const data::ImageSample& s : samples) {
        data::Image prob =
            (s.image.h % div == 0 && s.image.w % div == 0)
                ? predict_probability(model, s.image,
                                      mode.ensemble ? EvalMode::Ensemble : EvalMode::SingleHead,
                                      mode.q)
                : predict_patched(model, s.image, mode, patch_size, stride);
        summary.per_image.push_back(
            metrics::all_metrics(s.mask.px, metrics::binarize(prob.px, threshold)));
        ids.push_back(s.id);
    }
    // aggregate mean/sd
    const double n = static_cast<double>(summary.per_image.size());
    auto fields = {&metrics::MetricRow::dice, &metrics::MetricRow::iou,
                   &metrics::MetricRow::accuracy, &metrics::MetricRow::sensitivity,
                   &metrics::MetricRow::specificity};
    for (auto f : fields) {
        double mean = 0;
        for (const auto& r : summary.per_image) mean += r.*f;
        summary.mean.*f = mean / n;
        double var = 0;
        for (const auto& r : summary.per_image) var += (r.*f - summary.mean.*f) * (r.*f - summary.mean.*f);
        summary.sd.*f = std::sqrt(var / n);
    }

    const std::string csv = metrics_csv(ids, mode_str, summary);
    if (out_path.empty())
        std::cout << csv;
    else {
        write_file(out_path, csv);
        std::cout << "wrote " << out_path << "\n";
    }
    std::cout << "mean dice " << summary.mean.dice << " +- " << summary.sd.dice << ", mean iou "
              << summary.mean.iou << " +- " << summary.sd.iou << "\n";
    return 0;
}

int cmd_params(const RunConfig& config, bool as_json) {
    struct Preset {
        const char* name;
        SkipStyle style;
        BlockKind kind;
        int t;
    };
    const Preset presets[] = {
        {"U-Net", SkipStyle::Simple, BlockKind::Plain, 1},
        {"R2U-Net (t=2)", SkipStyle::Simple, BlockKind::Rrcl, 2},
        {"U-Net++", SkipStyle::Dense, BlockKind::Plain, 1},
        {"R2U++ (t=1)", SkipStyle::Dense, BlockKind::Rrcl, 1},
        {"R2U++ (t=2)", SkipStyle::Dense, BlockKind::Rrcl, 2},
    };
    auto preset_config = [&](const Preset& p) {
        ArchitectureConfig a = config.arch;
        a.skip_style = p.style;
        a.block_kind = p.kind;
        a.t = p.t;
        return a;
    };

    if (as_json) {
        nlohmann::json j;
        j["config"] = nlohmann::json::parse(config.to_json());
        j["total"] = count_parameters(config.arch);
        nlohmann::json blocks = nlohmann::json::array();
        for (const auto& [name, count] : parameter_table(config.arch))
            blocks.push_back({{"name", name}, {"params", count}});
        j["blocks"] = blocks;
        nlohmann::json rows = nlohmann::json::array();
        for (const Preset& p : presets)
            rows.push_back({{"name", p.name}, {"params", count_parameters(preset_config(p))}});
        j["presets"] = rows;
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    std::cout << "per-block parameter counts (configured model):\n";
    for (const auto& [name, count] : parameter_table(config.arch))
        std::cout << "  " << name << "\t" << count << "\n";
    std::cout << "total\t" << count_parameters(config.arch) << "\n\n";
    std::cout << "presets (filters";
    for (int f : config.arch.filters) std::cout << " " << f;
    std::cout << "):\n";
    for (const Preset& p : presets)
        std::cout << "  " << p.name << "\t" << count_parameters(preset_config(p)) << "\n";
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"R2U++ nested recurrent-residual segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int64_t seed_flag = -1;
    int trials = 1;
    std::string ds_flag;

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON");
        cmd->add_option("--set", overrides, "override config key=value")->take_all();
        cmd->add_option("--seed", seed_flag, "override trainer seed");
        cmd->add_option("--deep-supervision", ds_flag, "on|off");
    };
    auto make_config = [&]() {
        RunConfig config =
            config_path.empty() ? RunConfig{} : load_run_config(config_path);
        for (const std::string& o : overrides) apply_override(config, o);
        if (seed_flag >= 0) config.trainer.seed = static_cast<uint64_t>(seed_flag);
        if (!ds_flag.empty()) apply_override(config, "deep_supervision=" + ds_flag);
        return config;
    };

    // train
    CLI::App* train = app.add_subcommand("train", "train a model from a manifest");
    add_config_flags(train);
    train->add_option("--trials", trials, "independent trials with consecutive seeds");

    // predict
    CLI::App* predict = app.add_subcommand("predict", "segment one image with a checkpoint");
    std::string ckpt, image_path, mode_str = "ensemble", out_prefix;
    int patch_size = 64, patch_stride = 32;
    double threshold = 0.5;
    predict->add_option("--checkpoint", ckpt)->required();
    predict->add_option("--image", image_path)->required();
    predict->add_option("--mode", mode_str, "ensemble|L1|L2|L3|L4");
    predict->add_option("--out", out_prefix, "output path prefix");
    predict->add_option("--patch-size", patch_size);
    predict->add_option("--patch-stride", patch_stride);
    predict->add_option("--threshold", threshold);

    // evaluate
    CLI::App* evaluate = app.add_subcommand("evaluate", "metric report over a manifest");
    std::string manifest_path, report_path;
    evaluate->add_option("--checkpoint", ckpt)->required();
    evaluate->add_option("--manifest", manifest_path)->required();
    evaluate->add_option("--mode", mode_str, "ensemble|L1|L2|L3|L4");
    evaluate->add_option("--out", report_path, "CSV report path (default stdout)");
    evaluate->add_option("--patch-size", patch_size);
    evaluate->add_option("--patch-stride", patch_stride);
    evaluate->add_option("--threshold", threshold);

    // params
    CLI::App* params = app.add_subcommand("params", "parameter-count table");
    bool params_json = false;
    add_config_flags(params);
    params->add_flag("--json", params_json, "machine-readable output");

    // graph
    CLI::App* graph = app.add_subcommand("graph", "plain-text plan dump");
    add_config_flags(graph);

    // synth
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    uint64_t synth_seed = 0;
    int synth_count = 8, synth_size = 64;
    std::string synth_out = "synth_data";
    synth->add_option("--seed", synth_seed);
    synth->add_option("--count", synth_count);
    synth->add_option("--size", synth_size);
    synth->add_option("--out", synth_out)->required();

    CLI11_PARSE(app, argc, argv);
    apply_thread_cap();

    if (train->parsed()) return cmd_train(make_config(), trials);
    if (predict->parsed())
        return cmd_predict(ckpt, image_path, mode_str, out_prefix, patch_size, patch_stride,
                           threshold);
    if (evaluate->parsed())
        return cmd_evaluate(ckpt, manifest_path, mode_str, report_path, patch_size, patch_stride,
                            threshold);
    if (params->parsed()) return cmd_params(make_config(), params_json);
    if (graph->parsed()) {
        std::cout << dump_plan(build_plan(make_config().arch));
        return 0;
    }
    if (synth->parsed()) {
        std::vector<data::ImageSample> samples =
            data::synth_dataset(synth_seed, synth_count, synth_size);
        data::write_dataset(samples, synth_out, synth_out + "/manifest.tsv");
        std::cout << "wrote " << samples.size() << " samples to " << synth_out << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const r2upp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const r2upp::data::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const r2upp::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 4;
    } catch (const r2upp::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
