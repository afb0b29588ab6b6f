#include <CLI11.hpp>

#include <lanet/checkpoint.hpp>
#include <lanet/config.hpp>
#include <lanet/gradcheck.hpp>
#include <lanet/metrics.hpp>
#include <lanet/network.hpp>

#include <iostream>

namespace {

using namespace lanet;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

RunConfig build_config(const std::string& config_file,
                       const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void print_resolved(const RunConfig& cfg) {
    std::cout << "# resolved config\n" << cfg.resolved_text() << "# end config\n";
}

std::vector<RasterSample> load_split(const DatasetManifest& m, const std::string& split) {
    const std::vector<std::string>* ids = nullptr;
    if (split == "train") ids = &m.train_ids;
    else if (split == "val") ids = &m.val_ids;
    else if (split == "test") ids = &m.test_ids;
    else throw std::invalid_argument("unknown split '" + split + "' (valid: train, val, test)");
    std::vector<RasterSample> out;
    out.reserve(ids->size());
    for (const auto& id : *ids) out.push_back(load_sample(m, id));
    return out;
}

void check_bands(const DatasetManifest& m, const RunConfig& cfg) {
    if (m.bands != cfg.get_int("in_channels"))
        throw std::runtime_error("band mismatch: dataset has " + std::to_string(m.bands) +
                                 " bands, model expects " + cfg.get("in_channels"));
}

struct SplitMetrics {
    double oa = 0.0;
    double mean_f1 = 0.0;
    ConfusionMatrix cm{kNumClasses};
};

SplitMetrics eval_params(const std::vector<RasterSample>& samples, const ParamStore<float>& params,
                         const ArchConfig& arch, Variant variant, int tile, int overlap) {
    SplitMetrics sm;
    for (const auto& s : samples) {
        LabelMap pred = predict_tiled(s.image, params, arch, variant, tile, overlap);
        accumulate(sm.cm, pred, s.labels);
    }
    sm.oa = overall_accuracy(sm.cm);
    sm.mean_f1 = f1_scores(sm.cm).mean;
    return sm;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(std::uint64_t seed, int count, int size, const std::string& out, int bands) {
    auto m = synth_generate(seed, count, size, out, bands);
    std::cout << "wrote " << count << " scenes (" << size << "x" << size << ", " << bands
              << " bands) to " << out << "\n"
              << "split: " << m.train_ids.size() << " train, " << m.val_ids.size() << " val, "
              << m.test_ids.size() << " test\n";
    return 0;
}

// --- train -------------------------------------------------------------------

int cmd_train(const std::string& data, const RunConfig& cfg, const std::string& out) {
    print_resolved(cfg);
    auto m = load_manifest(data);
    check_bands(m, cfg);
    auto samples = load_split(m, "train");

    const Variant variant = parse_variant(cfg.get("variant"));
    const ArchConfig arch = cfg.arch();
    const TrainConfig tcfg = cfg.train();
    auto result = train(samples, arch, variant, tcfg, &std::cout);

    Checkpoint ckpt{kCheckpointVersion, cfg.resolved_text(), detach_params(result.params)};
    save_checkpoint(out, ckpt);
    std::cout << "final loss " << result.final_logged_loss << "\n"
              << "saved checkpoint " << out << "\n";
    return 0;
}

// --- eval --------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& split,
             int tile, int overlap) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg;
    cfg.load_text(ckpt.config_text, ckpt_path);
    print_resolved(cfg);

    auto m = load_manifest(data);
    check_bands(m, cfg);
    auto samples = load_split(m, split);
    if (samples.empty()) throw std::runtime_error("split '" + split + "' is empty");

    const Variant variant = parse_variant(cfg.get("variant"));
    const ArchConfig arch = cfg.arch();
    SplitMetrics sm = eval_params(samples, ckpt.params, arch, variant, tile, overlap);
    std::cout << "split: " << split << " (" << samples.size() << " samples)\n"
              << metrics_report(sm.cm, {class_names().begin(), class_names().end()});
    return 0;
}

// --- predict -----------------------------------------------------------------

int cmd_predict(const std::string& ckpt_path, const std::vector<std::string>& images,
                const std::string& out, int tile, int overlap) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    RunConfig cfg;
    cfg.load_text(ckpt.config_text, ckpt_path);
    print_resolved(cfg);

    const int bands = cfg.get_int("in_channels");
    if (static_cast<int>(images.size()) != bands)
        throw std::runtime_error("band mismatch: got " + std::to_string(images.size()) +
                                 " band files, model expects " + std::to_string(bands));

    PngImage first = read_png(images.front());
    const int H = first.height, W = first.width;
    Tensor<float> img(Shape{1, bands, H, W});
    for (int b = 0; b < bands; ++b) {
        PngImage band = b == 0 ? std::move(first) : read_png(images[b]);
        if (band.width != W || band.height != H || band.channels != 1)
            throw std::runtime_error("band file has wrong geometry: " + images[b]);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                img.at(0, b, y, x) = band.pixels[static_cast<std::size_t>(y) * W + x] / 255.0f;
    }

    const Variant variant = parse_variant(cfg.get("variant"));
    const ArchConfig arch = cfg.arch();
    LabelMap pred = predict_tiled(img, ckpt.params, arch, variant, tile, overlap);
    std::vector<std::uint8_t> idx(pred.ids.begin(), pred.ids.end());
    write_png_pal8(out, W, H, idx.data(), class_palette());
    std::cout << "wrote " << W << "x" << H << " class map " << out << "\n";
    return 0;
}

// --- gradcheck ---------------------------------------------------------------

double gradcheck_pam() {
    Rng rng(101);
    PamConfig cfg{.patch_h = 2, .patch_w = 2, .reduction = 4, .channels = 8};
    auto leaf = [&](Shape s) {
        auto t = Tensor<double>::leaf(s, true);
        for (std::size_t i = 0; i < t.size(); ++i) (*t.data)[i] = rng.uniform(-0.5, 0.5);
        return t;
    };
    std::vector<Tensor<double>> inputs{
        leaf(Shape{2, 8, 8, 8}),                  // x
        leaf(Shape{cfg.reduced(), 8, 1, 1}),      // reduce w
        leaf(Shape{1, cfg.reduced(), 1, 1}),      // reduce b
        leaf(Shape{8, cfg.reduced(), 1, 1}),      // expand w
        leaf(Shape{1, 8, 1, 1}),                  // expand b
    };
    Tensor<double> coef(Shape{2, 8, 8, 8});
    for (std::size_t i = 0; i < coef.size(); ++i) (*coef.data)[i] = rng.uniform(-1.0, 1.0);
    auto forward = [&](const std::vector<Tensor<double>>& v) {
        PamParams<double> p{v[1], v[2], v[3], v[4]};
        return sum(mul(pam_forward(v[0], p, cfg), coef));
    };
    return grad_check(forward, inputs, 1e-6);
}

double gradcheck_aem() {
    Rng rng(102);
    AemConfig cfg{.high_patch_h = 2, .high_patch_w = 2, .reduction = 4,
                  .c_high = 8, .c_low = 6, .upsample_h = 4, .upsample_w = 4};
    auto leaf = [&](Shape s) {
        auto t = Tensor<double>::leaf(s, true);
        for (std::size_t i = 0; i < t.size(); ++i) (*t.data)[i] = rng.uniform(-0.5, 0.5);
        return t;
    };
    std::vector<Tensor<double>> inputs{
        leaf(Shape{2, 6, 8, 8}),                  // x_low
        leaf(Shape{2, 8, 4, 4}),                  // x_high
        leaf(Shape{cfg.reduced(), 8, 1, 1}),      // reduce w
        leaf(Shape{1, cfg.reduced(), 1, 1}),      // reduce b
        leaf(Shape{6, cfg.reduced(), 1, 1}),      // project w
        leaf(Shape{1, 6, 1, 1}),                  // project b
    };
    Tensor<double> coef(Shape{2, 6, 8, 8});
    for (std::size_t i = 0; i < coef.size(); ++i) (*coef.data)[i] = rng.uniform(-1.0, 1.0);
    auto forward = [&](const std::vector<Tensor<double>>& v) {
        AemParams<double> p{v[2], v[3], v[4], v[5]};
        return sum(mul(aem_forward(v[0], v[1], p, cfg), coef));
    };
    return grad_check(forward, inputs, 1e-6);
}

double gradcheck_model() {
    ArchConfig arch;
    arch.in_channels = 4;
    arch.widths = {8, 16, 24, 32};
    arch.head_width = 16;
    Rng rng(103);
    auto params = build_variant<double>(Variant::Lanet, arch, 11);
    // zero-init classifiers would leave the loss at its symmetric point where
    // many gradients vanish identically; nudge them
    for (auto& [name, p] : params)
        if (name.rfind("cls", 0) == 0 && name.back() == 'w' && p.at(0, 0, 0, 0) == 0.0)
            for (std::size_t i = 0; i < p.size(); ++i) (*p.data)[i] = rng.uniform(-0.05, 0.05);

    Tensor<double> img(Shape{1, 4, 64, 64});
    for (std::size_t i = 0; i < img.size(); ++i) (*img.data)[i] = rng.uniform();
    LabelMap labels(1, 64, 64);
    for (auto& v : labels.ids) v = static_cast<int32_t>(rng.below(6));

    std::vector<std::string> names;
    std::vector<Tensor<double>> inputs;
    for (auto& [name, p] : params) {
        names.push_back(name);
        inputs.push_back(p);
    }
    auto forward = [&](const std::vector<Tensor<double>>& v) {
        ParamStore<double> ps;
        for (std::size_t i = 0; i < names.size(); ++i) ps.emplace(names[i], v[i]);
        auto out = model_forward(img, ps, arch, Variant::Lanet);
        return training_loss(out, labels, arch.aux_loss_weight);
    };
    // sampled coordinates; the floor keeps sub-roundoff gradients from being
    // compared relatively (see grad_check)
    return grad_check(forward, inputs, 1e-5, 4, 7, 1e-6);
}

int cmd_gradcheck(const std::string& module) {
    static_assert(std::is_same_v<decltype(gradcheck_pam()), double>, "checks run in f64");
    std::vector<std::pair<std::string, double (*)()>> targets;
    if (module == "pam" || module == "all") targets.emplace_back("pam", &gradcheck_pam);
    if (module == "aem" || module == "all") targets.emplace_back("aem", &gradcheck_aem);
    if (module == "model" || module == "all") targets.emplace_back("model", &gradcheck_model);
    if (targets.empty())
        throw std::invalid_argument("unknown module '" + module +
                                    "' (valid: pam, aem, model, all)");
    bool ok = true;
    for (const auto& [name, fn] : targets) {
        const double err = fn();
        const bool pass = err < 1e-4;
        ok = ok && pass;
        std::cout << name << ": max rel err " << std::scientific << std::setprecision(3) << err
                  << (pass ? " (ok)" : " (FAIL)") << "\n";
    }
    if (!ok) throw NumericError("gradient check failed");
    return 0;
}

// --- ablate ------------------------------------------------------------------

int cmd_ablate(const std::string& data, int seeds, const RunConfig& base_cfg) {
    if (seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
    print_resolved(base_cfg);
    auto m = load_manifest(data);
    check_bands(m, base_cfg);
    auto train_set = load_split(m, "train");
    auto test_set = load_split(m, "test");
    if (train_set.empty() || test_set.empty())
        throw std::runtime_error("ablate needs non-empty train and test splits");

    // majority-class baseline: what an untrained (all-zero-logit) model scores
    ConfusionMatrix prior(kNumClasses);
    for (const auto& s : test_set) {
        LabelMap zeros(1, s.labels.h, s.labels.w);
        accumulate(prior, zeros, s.labels);
    }
    const double chance_oa = overall_accuracy(prior);

    const ArchConfig arch = base_cfg.arch();
    const std::uint64_t base_seed = base_cfg.get_u64("seed");
    const std::array<Variant, 4> variants{Variant::Fcn, Variant::FcnPam, Variant::FcnAem,
                                          Variant::Lanet};
    std::map<Variant, std::vector<SplitMetrics>> runs;
    for (Variant v : variants) {
        for (int s = 0; s < seeds; ++s) {
            TrainConfig tcfg = base_cfg.train();
            tcfg.seed = base_seed + static_cast<std::uint64_t>(s);
            auto result = train(train_set, arch, v, tcfg);
            auto sm = eval_params(test_set, detach_params(result.params), arch, v, 0, 0);
            std::cout << variant_name(v) << " seed " << tcfg.seed << ": mean_f1 " << std::fixed
                      << std::setprecision(4) << sm.mean_f1 << "  oa " << sm.oa << "\n";
            runs[v].push_back(sm);
        }
    }

    auto stats = [](const std::vector<SplitMetrics>& v, auto field) {
        double mean = 0, lo = 1e9, hi = -1e9;
        for (const auto& sm : v) {
            const double x = field(sm);
            mean += x;
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        mean /= static_cast<double>(v.size());
        return std::array<double, 2>{mean, (hi - lo) / 2.0};
    };

    std::cout << "\n" << std::left << std::setw(10) << "variant" << std::setw(20) << "mean_f1"
              << "oa\n";
    std::map<Variant, double> oa_mean;
    for (Variant v : variants) {
        auto f1 = stats(runs[v], [](const SplitMetrics& s) { return s.mean_f1; });
        auto oa = stats(runs[v], [](const SplitMetrics& s) { return s.oa; });
        oa_mean[v] = oa[0];
        std::ostringstream f1c, oac;
        f1c << std::fixed << std::setprecision(4) << f1[0] << " +- " << f1[1];
        oac << std::fixed << std::setprecision(4) << oa[0] << " +- " << oa[1];
        std::cout << std::left << std::setw(10) << variant_name(v) << std::setw(20) << f1c.str()
                  << oac.str() << "\n";
    }

    bool at_chance = true;
    for (Variant v : variants) at_chance = at_chance && oa_mean[v] < chance_oa + 0.02;
    std::cout << "\nchance-level oa " << std::fixed << std::setprecision(4) << chance_oa << "\n";
    if (at_chance) {
        std::cout << "trend: INCONCLUSIVE (all variants at chance level)\n";
        return 0;
    }
    const double fcn = oa_mean[Variant::Fcn];
    const bool lanet_ok = oa_mean[Variant::Lanet] - fcn >= 0.010;
    const bool pam_ok = oa_mean[Variant::FcnPam] - fcn >= 0.003;
    const bool aem_ok = oa_mean[Variant::FcnAem] - fcn >= 0.003;
    std::cout << "lanet - fcn = " << oa_mean[Variant::Lanet] - fcn << " (need >= 0.010)\n"
              << "fcn-pam - fcn = " << oa_mean[Variant::FcnPam] - fcn << " (need >= 0.003)\n"
              << "fcn-aem - fcn = " << oa_mean[Variant::FcnAem] - fcn << " (need >= 0.003)\n"
              << "trend: " << (lanet_ok && pam_ok && aem_ok ? "PASS" : "FAIL") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-attention segmentation toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic aerial-scene dataset");
    std::uint64_t s_seed = 0;
    int s_count = 0, s_size = 512, s_bands = 4;
    std::string s_out;
    synth->add_option("--seed", s_seed, "dataset seed")->capture_default_str();
    synth->add_option("--count", s_count, "number of scenes")->required();
    synth->add_option("--size", s_size, "scene size in pixels")->capture_default_str();
    synth->add_option("--bands", s_bands, "spectral bands (3) or with elevation (4)")
        ->capture_default_str();
    synth->add_option("--out", s_out, "output directory")->required();

    // shared config plumbing for train/ablate
    std::string config_file, t_variant;
    std::vector<std::string> overrides;
    auto add_config_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key = value config file");
        cmd->add_option("--set", overrides, "override a config key (key=value, repeatable)");
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "train a variant on a dataset");
    std::string t_data, t_out;
    std::int64_t t_steps = -1, t_seed = -1;
    train_cmd->add_option("--data", t_data, "dataset directory")->required();
    train_cmd->add_option("--out", t_out, "checkpoint output path")->required();
    add_config_opts(train_cmd);
    train_cmd->add_option("--variant", t_variant, "fcn | fcn-pam | fcn-aem | lanet");
    train_cmd->add_option("--steps", t_steps, "override training steps");
    train_cmd->add_option("--seed", t_seed, "override training seed");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string e_ckpt, e_data, e_split = "test";
    int e_tile = 0, e_overlap = 64;
    eval_cmd->add_option("--ckpt", e_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", e_data, "dataset directory")->required();
    eval_cmd->add_option("--split", e_split, "train | val | test")->capture_default_str();
    eval_cmd->add_option("--tile", e_tile, "tile size, 0 = whole image")->capture_default_str();
    eval_cmd->add_option("--overlap", e_overlap, "tile overlap")->capture_default_str();

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "predict a colorized class map");
    std::string p_ckpt, p_out;
    std::vector<std::string> p_images;
    int p_tile = 512, p_overlap = 64;
    predict_cmd->add_option("--ckpt", p_ckpt, "checkpoint path")->required();
    predict_cmd->add_option("--image", p_images, "input band PNGs, one per channel")->required();
    predict_cmd->add_option("--out", p_out, "output paletted PNG")->required();
    predict_cmd->add_option("--tile", p_tile, "tile size, 0 = whole image")->capture_default_str();
    predict_cmd->add_option("--overlap", p_overlap, "tile overlap")->capture_default_str();

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification (f64)");
    std::string gc_module = "all";
    gc_cmd->add_option("--module", gc_module, "pam | aem | model | all")->capture_default_str();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare all four variants");
    std::string a_data;
    int a_seeds = 3;
    ablate_cmd->add_option("--data", a_data, "dataset directory")->required();
    ablate_cmd->add_option("--seeds", a_seeds, "seeds per variant")->capture_default_str();
    add_config_opts(ablate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(s_seed, s_count, s_size, s_out, s_bands);
        if (train_cmd->parsed()) {
            RunConfig cfg = build_config(config_file, overrides);
            if (!t_variant.empty()) cfg.set("variant", t_variant);
            if (t_steps >= 0) cfg.set("steps", std::to_string(t_steps));
            if (t_seed >= 0) cfg.set("seed", std::to_string(t_seed));
            parse_variant(cfg.get("variant"));  // validate before any heavy work
            return cmd_train(t_data, cfg, t_out);
        }
        if (eval_cmd->parsed()) return cmd_eval(e_ckpt, e_data, e_split, e_tile, e_overlap);
        if (predict_cmd->parsed()) return cmd_predict(p_ckpt, p_images, p_out, p_tile, p_overlap);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_module);
        if (ablate_cmd->parsed())
            return cmd_ablate(a_data, a_seeds, build_config(config_file, overrides));
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
