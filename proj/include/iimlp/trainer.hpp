#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iimlp/data.hpp"
#include "iimlp/network.hpp"

namespace iimlp {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t shuffle_seed = 1;
    std::size_t snapshot_every = 0;  // epochs; 0 disables snapshots
    std::optional<std::size_t> train_subset;
    // gradient clipping is off by default so exploding gradients stay visible
    bool clip_gradients = false;
    double clip_threshold = 1.0;
    std::string out_dir;  // metrics.csv and snapshots land here when set
    // wall_time_s is reported as 0 unless enabled: real timings would break
    // the byte-identical re-run contract, so they are opt-in
    bool record_timings = false;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double max_weight_deviation = 0.0;
    double frob_weight_deviation = 0.0;
    double wall_time_s = 0.0;

    bool operator==(const EpochMetrics&) const = default;
};

struct LayerDeviation {
    double max_abs;
    double frobenius;
};

// Elementwise statistics of W^l - sigma I per layer.
std::vector<LayerDeviation> weight_deviation(const InterpretableMLP& mlp);

// Fraction of samples whose argmax over softmax(z^L) matches the label;
// argmax ties resolve to the lowest class index.
double evaluate(const InterpretableMLP& mlp, const Dataset& dataset);

// Mini-batch SGD with momentum over deterministically shuffled batches.
// Per-epoch metrics are appended in order; when on_epoch is set and returns
// false, training stops after that epoch. Throws DiagnosticError on a
// non-finite loss, naming the newest snapshot checkpoint if any.
std::vector<EpochMetrics> train(
    InterpretableMLP& mlp, const Dataset& train_set, const Dataset& test_set,
    const TrainConfig& cfg,
    const std::function<bool(const EpochMetrics&)>& on_epoch = {});

}  // namespace iimlp
