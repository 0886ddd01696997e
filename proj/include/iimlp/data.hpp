#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iimlp/linalg.hpp"

namespace iimlp {

struct Dataset {
    std::vector<Vector> samples;      // each of length data_width
    std::vector<std::size_t> labels;  // each < class_count
    std::size_t data_width = 0;       // N
    std::size_t class_count = 0;      // C
    std::string name;

    std::size_t size() const { return samples.size(); }
};

// IDX pair (the Fashion-MNIST distribution format): big-endian magic
// 0x00000803 for images, 0x00000801 for labels, u8 pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: records of 1 label byte + 3072 channel-major
// pixel bytes (R plane, G plane, B plane), pixels scaled to [0,1].
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

// Gaussian class blobs around fixed random unit directions scaled by
// `separation`; the desk-scale stand-in dataset.
Dataset synth_blobs(std::size_t class_count, std::size_t data_width,
                    std::size_t per_class, double separation, SeededRng& rng);

struct NormalizationSpec {
    double target_variance;  // q*
};

// Per-sample: subtract the sample mean, scale the population standard
// deviation to sqrt(target_variance). Zero-variance samples are an error.
Dataset normalize(const Dataset& dataset, const NormalizationSpec& spec);

}  // namespace iimlp
