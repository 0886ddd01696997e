// Command-line driver: calibrate, propagate, train, analyze.
// Exit codes: 0 success, 1 internal error, 2 usage/config error.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "iimlp/interpret.hpp"
#include "iimlp/io.hpp"
#include "iimlp/runconfig.hpp"
#include "iimlp/sigprop.hpp"
#include "iimlp/trainer.hpp"

using namespace iimlp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

ManifestEntry entry(const std::string& out_dir, const std::string& rel) {
    return ManifestEntry{rel, file_crc64(out_dir + "/" + rel)};
}

Dataset maybe_normalized(Dataset ds, const RunConfig& cfg) {
    if (!cfg.data.normalize || ds.size() == 0) return ds;
    return normalize(ds, NormalizationSpec{cfg.network.q_star});
}

void check_compat(const NetworkConfig& net, const Dataset& ds, const char* what) {
    if (ds.size() == 0) return;
    if (ds.data_width != net.data_width)
        throw UsageError(std::string(what) + ": dataset width " + std::to_string(ds.data_width) +
                         " does not match network data_width " + std::to_string(net.data_width));
    if (ds.class_count > net.class_count)
        throw UsageError(std::string(what) + ": dataset has " + std::to_string(ds.class_count) +
                         " classes but the network only " + std::to_string(net.class_count));
}

int cmd_calibrate(double target_mass, std::size_t layers, const std::string& out_dir) {
    auto t0 = Clock::now();
    Calibration c = calibrate(target_mass, layers);
    std::printf("sigma  = %.12g\nq_star = %.12g\n", c.sigma, c.q_star);
    ensure_directory(out_dir);
    std::string body = "{\n  \"sigma\": " + format_double(c.sigma) +
                       ",\n  \"q_star\": " + format_double(c.q_star) +
                       ",\n  \"target_mass\": " + format_double(target_mass) +
                       ",\n  \"layers\": " + std::to_string(layers) + "\n}\n";
    write_file_bytes(out_dir + "/calibration.json", body);
    RunConfig cfg;
    cfg.out_dir = out_dir;
    cfg.network.layers = layers;
    cfg.network.sigma = c.sigma;
    cfg.network.q_star = c.q_star;
    write_manifest(out_dir, "calibrate", cfg, seconds_since(t0),
                   {entry(out_dir, "calibration.json")});
    return 0;
}

void apply_calibration_file(RunConfig& cfg, const std::string& path) {
    // calibration.json carries sigma and q_star produced by cmd_calibrate
    std::string text = read_file_bytes(path);
    double sigma = 0.0, q_star = 0.0;
    auto grab = [&](const char* key, double& into) {
        auto pos = text.find(key);
        if (pos == std::string::npos)
            throw UsageError("calibration file " + path + " lacks " + key);
        pos = text.find(':', pos);
        into = std::strtod(text.c_str() + pos + 1, nullptr);
    };
    grab("\"sigma\"", sigma);
    grab("\"q_star\"", q_star);
    if (!(sigma > 0.0) || !(q_star > 0.0))
        throw UsageError("calibration file " + path + " carries non-positive values");
    cfg.network.sigma = sigma;
    cfg.network.q_star = q_star;
}

int cmd_propagate(RunConfig cfg) {
    auto t0 = Clock::now();
    ensure_directory(cfg.out_dir);

    SeededRng rng_profile(cfg.network.seed);
    PropagationProfile prof =
        monte_carlo_profile(cfg.network, rng_profile, cfg.propagate.n_samples);
    CsvWriter pcsv(cfg.out_dir + "/propagation_profile.csv", "layer,q_ell,saturation_fraction");
    for (std::size_t l = 1; l <= cfg.network.layers; ++l)
        pcsv.row({std::to_string(l), format_double(prof.per_layer_variance[l - 1]),
                  format_double(prof.per_layer_saturation_fraction[l - 1])});
    pcsv.flush();

    SeededRng rng_spec(cfg.network.seed + 1);
    EmpiricalSpectrum emp =
        empirical_spectrum_at_init(cfg.network, rng_spec, cfg.propagate.n_samples);
    SpectrumSummary th =
        theoretical_spectrum(cfg.network.sigma, cfg.network.layers, cfg.network.q_star);

    CsvWriter scsv(cfg.out_dir + "/spectrum.csv", "statistic,empirical,theoretical");
    scsv.row({"atom_value", format_double(emp.summary.atom_value), format_double(th.atom_value)});
    scsv.row({"mass_at_atom", format_double(emp.summary.mass_at_atom),
              format_double(th.mass_at_atom)});
    scsv.row({"mass_at_zero", format_double(emp.summary.mass_at_zero),
              format_double(th.mass_at_zero)});
    scsv.flush();

    CsvWriter ecsv(cfg.out_dir + "/eigenvalues.csv", "eigenvalue");
    for (double ev : emp.eigenvalues) ecsv.row({format_double(ev)});
    ecsv.flush();

    std::printf("propagate: %zu samples, empirical atom mass %.4f vs theoretical %.4f\n",
                cfg.propagate.n_samples, emp.summary.mass_at_atom, th.mass_at_atom);
    write_manifest(cfg.out_dir, "propagate", cfg, seconds_since(t0),
                   {entry(cfg.out_dir, "propagation_profile.csv"),
                    entry(cfg.out_dir, "spectrum.csv"), entry(cfg.out_dir, "eigenvalues.csv")});
    return 0;
}

int cmd_train(RunConfig cfg) {
    auto t0 = Clock::now();
    ensure_directory(cfg.out_dir);

    auto [train_raw, test_raw] = load_datasets(cfg.data);
    check_compat(cfg.network, train_raw, "train data");
    check_compat(cfg.network, test_raw, "test data");
    Dataset train_set = maybe_normalized(std::move(train_raw), cfg);
    Dataset test_set = maybe_normalized(std::move(test_raw), cfg);

    SeededRng init_rng(cfg.network.seed);
    InterpretableMLP mlp = cfg.network.init == InitKind::identity
                               ? InterpretableMLP::init_identity(cfg.network)
                               : InterpretableMLP::init_he_random(cfg.network, init_rng);

    TrainConfig tc = cfg.train;
    tc.out_dir = cfg.out_dir;
    std::vector<EpochMetrics> metrics;
    try {
        metrics = train(mlp, train_set, test_set, tc);
    } catch (const DiagnosticError& e) {
        std::fprintf(stderr, "training aborted: %s\n", e.what());
        return 1;  // runtime failure, not a usage error
    }

    save_checkpoint(mlp, cfg.out_dir + "/ckpt_final.iimlp");

    std::vector<ManifestEntry> outs{entry(cfg.out_dir, "metrics.csv"),
                                    entry(cfg.out_dir, "ckpt_final.iimlp")};
    if (tc.snapshot_every > 0)
        for (std::size_t e = tc.snapshot_every; e <= metrics.size(); e += tc.snapshot_every) {
            outs.push_back(entry(cfg.out_dir, "ckpt_epoch" + std::to_string(e) + ".iimlp"));
            outs.push_back(entry(cfg.out_dir, "snapshot_epoch" + std::to_string(e) +
                                                  "_weight_deviation.csv"));
        }
    write_manifest(cfg.out_dir, "train", cfg, seconds_since(t0), outs);
    return 0;
}

int cmd_analyze(RunConfig cfg, const std::string& checkpoint) {
    auto t0 = Clock::now();
    ensure_directory(cfg.out_dir);

    InterpretableMLP mlp = load_checkpoint(checkpoint);
    NetworkConfig net = mlp.config();
    net.last_layer_linear_head = cfg.network.last_layer_linear_head;

    auto [train_raw, test_raw] = load_datasets(cfg.data);
    Dataset& eval_raw = test_raw.size() > 0 ? test_raw : train_raw;
    check_compat(net, eval_raw, "analyze data");
    RunConfig norm_cfg = cfg;
    norm_cfg.network.q_star = net.q_star;  // checkpoint defines the variance contract
    Dataset eval_set = maybe_normalized(std::move(eval_raw), norm_cfg);

    std::vector<ManifestEntry> outs;

    LayerAccuracyCurve curve = layerwise_accuracy(mlp, eval_set);
    write_layer_accuracy_csv(curve, cfg.out_dir + "/layer_accuracy.csv");
    outs.push_back(entry(cfg.out_dir, "layer_accuracy.csv"));

    DiscriminabilityTable table =
        discriminability(mlp, eval_set, cfg.probes.sample_cap, cfg.probes.correlation);
    write_discriminability_csv(table, cfg.out_dir + "/discriminability.csv");
    outs.push_back(entry(cfg.out_dir, "discriminability.csv"));

    auto devs = weight_deviation(mlp);
    CsvWriter dev(cfg.out_dir + "/weight_deviation.csv", "layer,max_abs,frobenius");
    for (std::size_t l = 0; l < devs.size(); ++l)
        dev.row({std::to_string(l + 1), format_double(devs[l].max_abs),
                 format_double(devs[l].frobenius)});
    dev.flush();
    outs.push_back(entry(cfg.out_dir, "weight_deviation.csv"));

    const std::size_t n = net.data_width;
    const bool square = [&] {
        std::size_t r = std::size_t(std::llround(std::sqrt(double(n))));
        return r * r == n;
    }();
    const bool planes = n % 3 == 0 && [&] {
        std::size_t p = n / 3;
        std::size_t r = std::size_t(std::llround(std::sqrt(double(p))));
        return r * r == p;
    }();

    for (std::size_t s : cfg.probes.map_samples) {
        if (s >= eval_set.size()) {
            std::fprintf(stderr, "analyze: sample %zu beyond dataset size %zu, skipping\n", s,
                         eval_set.size());
            continue;
        }
        LayerTrace trace = forward(mlp, pad_input(eval_set.samples[s], net.class_count));
        std::string lik = "likelihood_" + std::to_string(s) + ".csv";
        write_likelihood_csv(likelihood_series(trace), cfg.out_dir + "/" + lik);
        outs.push_back(entry(cfg.out_dir, lik));
        for (std::size_t l : cfg.probes.map_layers) {
            if (l < 1 || l > net.layers) {
                std::fprintf(stderr, "analyze: layer %zu outside [1, %zu], skipping\n", l,
                             net.layers);
                continue;
            }
            ContributionMap m = contribution_map(trace, l);
            m.source_sample = s;
            std::string name = "map_s" + std::to_string(s) + "_l" + std::to_string(l) +
                               (square ? ".pgm" : ".ppm");
            if (square)
                export_map_image(m, MapLayout::gray_sqrt, cfg.out_dir + "/" + name);
            else if (planes)
                export_map_image(m, MapLayout::rgb_planes, cfg.out_dir + "/" + name);
            else
                throw UsageError("analyze: data width " + std::to_string(n) +
                                 " fits neither gray_sqrt nor rgb_planes");
            outs.push_back(entry(cfg.out_dir, name));
        }
    }

    std::printf("analyze: layer accuracy %.4f at l=0, %.4f at l=L\n", curve.accuracy.front(),
                curve.accuracy.back());
    write_manifest(cfg.out_dir, "analyze", cfg, seconds_since(t0), outs);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // IIMLP_THREADS caps the worker count. Every kernel in this build is
    // single-owner with a fixed accumulation order, so the cap cannot change
    // any output byte; acknowledge the setting for scripts that export it.
    if (const char* t = std::getenv("IIMLP_THREADS")) {
        long v = std::strtol(t, nullptr, 10);
        if (v < 1) {
            std::fprintf(stderr, "error: IIMLP_THREADS must be a positive integer\n");
            return 2;
        }
    }

    CLI::App app{"identity-initialized interpretable MLP toolkit"};
    app.require_subcommand(1);

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "solve (sigma, q*) for a target spectrum mass");
    double target_mass = 0.8;
    std::size_t cal_layers = 100;
    std::string cal_out = "out";
    cal->add_option("--target-mass", target_mass, "spectrum mass at the atom, in (0,1)");
    cal->add_option("--layers", cal_layers, "network depth L");
    cal->add_option("--out-dir", cal_out, "output directory");

    // shared options for config-driven commands
    std::string config_path, out_override, calibration_file, checkpoint;
    std::string init_override, activation_override;
    std::size_t epochs_override = SIZE_MAX, snapshot_override = SIZE_MAX;
    std::vector<std::size_t> layers_override, samples_override;

    auto* prop = app.add_subcommand("propagate", "Monte-Carlo signal propagation and spectrum");
    prop->add_option("--config", config_path, "JSON config or manifest")->required();
    prop->add_option("--out-dir", out_override, "override out_dir");

    auto* trn = app.add_subcommand("train", "train a network per the config");
    trn->add_option("--config", config_path, "JSON config or manifest")->required();
    trn->add_option("--out-dir", out_override, "override out_dir");
    trn->add_option("--calibration", calibration_file, "calibration.json from cmd calibrate");
    trn->add_option("--init", init_override, "override init: identity|he_random");
    trn->add_option("--activation", activation_override, "override activation: hard_tanh|relu");
    trn->add_option("--epochs", epochs_override, "override epoch count");
    trn->add_option("--snapshot-every", snapshot_override, "override snapshot cadence");

    auto* ana = app.add_subcommand("analyze", "interpretability probes on a checkpoint");
    ana->add_option("--checkpoint", checkpoint, "trained checkpoint path")->required();
    ana->add_option("--config", config_path, "JSON config or manifest")->required();
    ana->add_option("--out-dir", out_override, "override out_dir");
    ana->add_option("--layers", layers_override, "map export layers (overrides probes.map_layers)");
    ana->add_option("--samples", samples_override, "map export samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cal->parsed()) {
            if (!(target_mass > 0.0 && target_mass < 1.0)) {
                std::fprintf(stderr, "calibrate: --target-mass must lie in (0,1)\n");
                return 2;
            }
            return cmd_calibrate(target_mass, cal_layers, cal_out);
        }
        RunConfig cfg = parse_run_config(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (prop->parsed()) return cmd_propagate(std::move(cfg));
        if (trn->parsed()) {
            if (!calibration_file.empty()) apply_calibration_file(cfg, calibration_file);
            if (init_override == "identity")
                cfg.network.init = InitKind::identity;
            else if (init_override == "he_random")
                cfg.network.init = InitKind::he_random;
            else if (!init_override.empty())
                throw UsageError("--init must be identity or he_random");
            if (activation_override == "hard_tanh")
                cfg.network.activation = Activation::hard_tanh;
            else if (activation_override == "relu")
                cfg.network.activation = Activation::relu;
            else if (!activation_override.empty())
                throw UsageError("--activation must be hard_tanh or relu");
            if (epochs_override != SIZE_MAX) cfg.train.epochs = epochs_override;
            if (snapshot_override != SIZE_MAX) cfg.train.snapshot_every = snapshot_override;
            return cmd_train(std::move(cfg));
        }
        if (ana->parsed()) {
            if (!layers_override.empty()) cfg.probes.map_layers = layers_override;
            if (!samples_override.empty()) cfg.probes.map_samples = samples_override;
            return cmd_analyze(std::move(cfg), checkpoint);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DiagnosticError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
    return 1;
}
