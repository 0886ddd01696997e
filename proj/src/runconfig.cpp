#include "iimlp/runconfig.hpp"

#include <json.hpp>

#include "iimlp/io.hpp"

namespace iimlp {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw UsageError("config: " + path + ": " + why);
}

template <typename T>
T get_number(const json& j, const std::string& path, const char* key, T fallback,
             bool require_positive = false) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) fail(path + "." + key, "must be a number");
    T out = v.get<T>();
    if (require_positive && !(out > T(0))) fail(path + "." + key, "must be positive");
    return out;
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) fail(path + "." + key, "must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) fail(path + "." + key, "must be a string");
    return j.at(key).get<std::string>();
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file_bytes(path));
    } catch (const json::parse_error& e) {
        throw UsageError("config: " + path + ": " + e.what());
    }
    if (doc.contains("artifact_version") && doc.contains("config"))
        doc = doc.at("config");  // accept a manifest as the config source

    RunConfig cfg;
    cfg.out_dir = get_string(doc, "$", "out_dir", cfg.out_dir);

    if (doc.contains("network")) {
        const json& n = doc.at("network");
        cfg.network.layers = get_number<std::size_t>(n, "$.network", "layers", cfg.network.layers);
        cfg.network.data_width =
            get_number<std::size_t>(n, "$.network", "data_width", cfg.network.data_width);
        cfg.network.class_count =
            get_number<std::size_t>(n, "$.network", "classes", cfg.network.class_count);
        cfg.network.sigma = get_number<double>(n, "$.network", "sigma", cfg.network.sigma, true);
        cfg.network.q_star =
            get_number<double>(n, "$.network", "q_star", cfg.network.q_star, true);
        cfg.network.seed = get_number<std::uint64_t>(n, "$.network", "seed", cfg.network.seed);
        cfg.network.last_layer_linear_head =
            get_bool(n, "$.network", "last_layer_linear_head", false);
        std::string act = get_string(n, "$.network", "activation", "hard_tanh");
        if (act == "hard_tanh")
            cfg.network.activation = Activation::hard_tanh;
        else if (act == "relu")
            cfg.network.activation = Activation::relu;
        else
            fail("$.network.activation", "must be \"hard_tanh\" or \"relu\", got \"" + act + "\"");
        std::string init = get_string(n, "$.network", "init", "identity");
        if (init == "identity")
            cfg.network.init = InitKind::identity;
        else if (init == "he_random")
            cfg.network.init = InitKind::he_random;
        else
            fail("$.network.init", "must be \"identity\" or \"he_random\", got \"" + init + "\"");
    }
    try {
        cfg.network.validate();
    } catch (const UsageError& e) {
        fail("$.network", e.what());
    }

    if (doc.contains("train")) {
        const json& t = doc.at("train");
        cfg.train.epochs = get_number<std::size_t>(t, "$.train", "epochs", cfg.train.epochs);
        cfg.train.batch_size =
            get_number<std::size_t>(t, "$.train", "batch_size", cfg.train.batch_size);
        cfg.train.learning_rate =
            get_number<double>(t, "$.train", "learning_rate", cfg.train.learning_rate);
        cfg.train.momentum = get_number<double>(t, "$.train", "momentum", cfg.train.momentum);
        cfg.train.shuffle_seed =
            get_number<std::uint64_t>(t, "$.train", "shuffle_seed", cfg.train.shuffle_seed);
        cfg.train.snapshot_every =
            get_number<std::size_t>(t, "$.train", "snapshot_every", cfg.train.snapshot_every);
        if (t.contains("train_subset")) {
            if (!t.at("train_subset").is_number_unsigned())
                fail("$.train.train_subset", "must be a nonnegative integer");
            cfg.train.train_subset = t.at("train_subset").get<std::size_t>();
        }
        cfg.train.clip_gradients = get_bool(t, "$.train", "clip_gradients", false);
        cfg.train.clip_threshold =
            get_number<double>(t, "$.train", "clip_threshold", cfg.train.clip_threshold);
        cfg.train.record_timings = get_bool(t, "$.train", "record_timings", false);
    }
    try {
        cfg.train.validate();
    } catch (const UsageError& e) {
        fail("$.train", e.what());
    }

    if (doc.contains("data")) {
        const json& d = doc.at("data");
        std::string kind = get_string(d, "$.data", "kind", "synth");
        if (kind == "idx")
            cfg.data.kind = DataKind::idx;
        else if (kind == "cifar10")
            cfg.data.kind = DataKind::cifar10;
        else if (kind == "synth")
            cfg.data.kind = DataKind::synth;
        else
            fail("$.data.kind", "must be \"idx\", \"cifar10\" or \"synth\", got \"" + kind + "\"");
        cfg.data.images = get_string(d, "$.data", "images", "");
        cfg.data.labels = get_string(d, "$.data", "labels", "");
        cfg.data.test_images = get_string(d, "$.data", "test_images", "");
        cfg.data.test_labels = get_string(d, "$.data", "test_labels", "");
        for (const char* key : {"batches", "test_batches"}) {
            if (!d.contains(key)) continue;
            if (!d.at(key).is_array()) fail(std::string("$.data.") + key, "must be an array");
            auto& target = std::string(key) == "batches" ? cfg.data.batches : cfg.data.test_batches;
            for (const auto& e : d.at(key)) {
                if (!e.is_string()) fail(std::string("$.data.") + key, "entries must be strings");
                target.push_back(e.get<std::string>());
            }
        }
        if (d.contains("synth")) {
            const json& s = d.at("synth");
            cfg.data.synth.classes =
                get_number<std::size_t>(s, "$.data.synth", "classes", cfg.data.synth.classes);
            cfg.data.synth.data_width = get_number<std::size_t>(s, "$.data.synth", "data_width",
                                                                cfg.data.synth.data_width);
            cfg.data.synth.per_class =
                get_number<std::size_t>(s, "$.data.synth", "per_class", cfg.data.synth.per_class);
            cfg.data.synth.test_per_class = get_number<std::size_t>(
                s, "$.data.synth", "test_per_class", cfg.data.synth.test_per_class);
            cfg.data.synth.separation =
                get_number<double>(s, "$.data.synth", "separation", cfg.data.synth.separation);
            cfg.data.synth.seed =
                get_number<std::uint64_t>(s, "$.data.synth", "seed", cfg.data.synth.seed);
        }
        cfg.data.normalize = get_bool(d, "$.data", "normalize", true);
        if (cfg.data.kind == DataKind::idx && cfg.data.images.empty())
            fail("$.data.images", "required for kind \"idx\"");
        if (cfg.data.kind == DataKind::idx && cfg.data.labels.empty())
            fail("$.data.labels", "required for kind \"idx\"");
        if (cfg.data.kind == DataKind::cifar10 && cfg.data.batches.empty())
            fail("$.data.batches", "required for kind \"cifar10\"");
    }

    if (doc.contains("propagate")) {
        cfg.propagate.n_samples = get_number<std::size_t>(doc.at("propagate"), "$.propagate",
                                                          "n_samples", cfg.propagate.n_samples);
        if (cfg.propagate.n_samples < 1) fail("$.propagate.n_samples", "must be >= 1");
    }

    if (doc.contains("probes")) {
        const json& p = doc.at("probes");
        cfg.probes.sample_cap =
            get_number<std::size_t>(p, "$.probes", "sample_cap", cfg.probes.sample_cap);
        for (const char* key : {"map_samples", "map_layers"}) {
            if (!p.contains(key)) continue;
            if (!p.at(key).is_array()) fail(std::string("$.probes.") + key, "must be an array");
            auto& target =
                std::string(key) == "map_samples" ? cfg.probes.map_samples : cfg.probes.map_layers;
            target.clear();
            for (const auto& e : p.at(key)) {
                if (!e.is_number_unsigned())
                    fail(std::string("$.probes.") + key, "entries must be nonnegative integers");
                target.push_back(e.get<std::size_t>());
            }
        }
        std::string corr = get_string(p, "$.probes", "correlation", "pearson");
        if (corr == "pearson")
            cfg.probes.correlation = CorrelationKind::pearson;
        else if (corr == "cosine")
            cfg.probes.correlation = CorrelationKind::cosine;
        else
            fail("$.probes.correlation", "must be \"pearson\" or \"cosine\"");
    }
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    json n{{"layers", cfg.network.layers},
           {"data_width", cfg.network.data_width},
           {"classes", cfg.network.class_count},
           {"sigma", cfg.network.sigma},
           {"q_star", cfg.network.q_star},
           {"activation", cfg.network.activation == Activation::hard_tanh ? "hard_tanh" : "relu"},
           {"init", cfg.network.init == InitKind::identity ? "identity" : "he_random"},
           {"seed", cfg.network.seed},
           {"last_layer_linear_head", cfg.network.last_layer_linear_head}};
    json t{{"epochs", cfg.train.epochs},
           {"batch_size", cfg.train.batch_size},
           {"learning_rate", cfg.train.learning_rate},
           {"momentum", cfg.train.momentum},
           {"shuffle_seed", cfg.train.shuffle_seed},
           {"snapshot_every", cfg.train.snapshot_every},
           {"clip_gradients", cfg.train.clip_gradients},
           {"clip_threshold", cfg.train.clip_threshold},
           {"record_timings", cfg.train.record_timings}};
    if (cfg.train.train_subset) t["train_subset"] = *cfg.train.train_subset;
    json d{{"kind", cfg.data.kind == DataKind::idx
                        ? "idx"
                        : (cfg.data.kind == DataKind::cifar10 ? "cifar10" : "synth")},
           {"normalize", cfg.data.normalize}};
    if (!cfg.data.images.empty()) d["images"] = cfg.data.images;
    if (!cfg.data.labels.empty()) d["labels"] = cfg.data.labels;
    if (!cfg.data.test_images.empty()) d["test_images"] = cfg.data.test_images;
    if (!cfg.data.test_labels.empty()) d["test_labels"] = cfg.data.test_labels;
    if (!cfg.data.batches.empty()) d["batches"] = cfg.data.batches;
    if (!cfg.data.test_batches.empty()) d["test_batches"] = cfg.data.test_batches;
    if (cfg.data.kind == DataKind::synth)
        d["synth"] = json{{"classes", cfg.data.synth.classes},
                          {"data_width", cfg.data.synth.data_width},
                          {"per_class", cfg.data.synth.per_class},
                          {"test_per_class", cfg.data.synth.test_per_class},
                          {"separation", cfg.data.synth.separation},
                          {"seed", cfg.data.synth.seed}};
    json p{{"n_samples", cfg.propagate.n_samples}};
    json pr{{"sample_cap", cfg.probes.sample_cap},
            {"map_samples", cfg.probes.map_samples},
            {"map_layers", cfg.probes.map_layers},
            {"correlation",
             cfg.probes.correlation == CorrelationKind::pearson ? "pearson" : "cosine"}};
    json doc{{"out_dir", cfg.out_dir}, {"network", n},    {"train", t},
             {"data", d},             {"propagate", p},   {"probes", pr}};
    return doc.dump(2) + "\n";
}

std::pair<Dataset, Dataset> load_datasets(const DataConfig& data) {
    Dataset train, test;
    switch (data.kind) {
        case DataKind::idx: {
            train = load_idx(data.images, data.labels);
            if (!data.test_images.empty())
                test = load_idx(data.test_images, data.test_labels);
            break;
        }
        case DataKind::cifar10: {
            train = load_cifar10(data.batches);
            if (!data.test_batches.empty()) test = load_cifar10(data.test_batches);
            break;
        }
        case DataKind::synth: {
            SeededRng rng(data.synth.seed);
            train = synth_blobs(data.synth.classes, data.synth.data_width,
                                data.synth.per_class, data.synth.separation, rng);
            if (data.synth.test_per_class > 0)
                test = synth_blobs(data.synth.classes, data.synth.data_width,
                                   data.synth.test_per_class, data.synth.separation, rng);
            break;
        }
    }
    return {std::move(train), std::move(test)};
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg, double wall_clock_s,
                    const std::vector<ManifestEntry>& outputs) {
    json outs = json::array();
    for (const auto& e : outputs) {
        char crc[19];
        std::snprintf(crc, sizeof(crc), "0x%016llx", (unsigned long long)e.crc);
        outs.push_back(json{{"path", e.path}, {"crc64", crc}});
    }
    json doc{{"artifact_version", "0.1.0"},
             {"command", command},
             {"config", json::parse(run_config_to_json(cfg))},
             {"seeds", json{{"init", cfg.network.seed},
                            {"shuffle", cfg.train.shuffle_seed},
                            {"synth_data", cfg.data.synth.seed}}},
             {"wall_clock_s", wall_clock_s},
             {"outputs", outs}};
    write_file_bytes(out_dir + "/manifest.json", doc.dump(2) + "\n");
}

}  // namespace iimlp
