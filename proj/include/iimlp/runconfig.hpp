#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iimlp/data.hpp"
#include "iimlp/interpret.hpp"
#include "iimlp/network.hpp"
#include "iimlp/trainer.hpp"

namespace iimlp {

enum class DataKind { idx, cifar10, synth };

struct SynthSpec {
    std::size_t classes = 10;
    std::size_t data_width = 784;
    std::size_t per_class = 200;
    std::size_t test_per_class = 40;
    double separation = 3.0;
    std::uint64_t seed = 5;
};

struct DataConfig {
    DataKind kind = DataKind::synth;
    std::string images, labels;            // idx train pair
    std::string test_images, test_labels;  // idx test pair (optional)
    std::vector<std::string> batches;      // cifar10 train batches
    std::vector<std::string> test_batches;
    SynthSpec synth;
    bool normalize = true;  // per-sample normalization to variance q*
};

struct PropagateConfig {
    std::size_t n_samples = 1000;
};

struct ProbeConfig {
    std::size_t sample_cap = 500;
    std::vector<std::size_t> map_samples = {0};
    std::vector<std::size_t> map_layers = {40};
    CorrelationKind correlation = CorrelationKind::pearson;
};

struct RunConfig {
    std::string out_dir = "out";
    NetworkConfig network;
    TrainConfig train;
    DataConfig data;
    PropagateConfig propagate;
    ProbeConfig probes;
};

// Parses a config document (or a manifest: its "config" object is unwrapped).
// Validation failures throw UsageError naming the JSON path.
RunConfig parse_run_config(const std::string& path);

// resolved-config echo used by manifests
std::string run_config_to_json(const RunConfig& cfg);

// train/test datasets per the data section (test may be empty)
std::pair<Dataset, Dataset> load_datasets(const DataConfig& data);

struct ManifestEntry {
    std::string path;  // relative to out_dir
    std::uint64_t crc;
};

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg, double wall_clock_s,
                    const std::vector<ManifestEntry>& outputs);

}  // namespace iimlp
