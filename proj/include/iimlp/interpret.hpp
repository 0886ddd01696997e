#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "iimlp/data.hpp"
#include "iimlp/network.hpp"

namespace iimlp {

// x^layer - x^0: accumulated change of the data slots, read as each input
// coordinate's contribution to the classification.
struct ContributionMap {
    std::size_t layer = 0;
    Vector values;  // length N
    std::size_t source_sample = 0;
};

ContributionMap contribution_map(const LayerTrace& trace, std::size_t layer);

// accuracy of argmax z^l for l = 0..L (layer 0 reads the zero padding)
struct LayerAccuracyCurve {
    std::vector<double> accuracy;  // length L+1
};

LayerAccuracyCurve layerwise_accuracy(const InterpretableMLP& mlp, const Dataset& dataset);

// entrywise sum of the W12 blocks of layers 1..layer (C x N)
Matrix cumulative_w12(const InterpretableMLP& mlp, std::size_t layer);

// r(l, c, c'): mean over evaluation samples of true class c of the
// correlation between the layer-l contribution map and row c' of the
// cumulative W12 sum. Zero-variance vectors correlate to 0 by convention.
struct DiscriminabilityTable {
    std::size_t layers = 0;
    std::size_t classes = 0;
    std::vector<double> r;  // [(l-1) * classes * classes + c * classes + c']

    double at(std::size_t l, std::size_t c, std::size_t cp) const {
        return r[(l - 1) * classes * classes + c * classes + cp];
    }
    double& at(std::size_t l, std::size_t c, std::size_t cp) {
        return r[(l - 1) * classes * classes + c * classes + cp];
    }
};

enum class CorrelationKind { pearson, cosine };

// sample_cap == 0 evaluates the whole dataset
DiscriminabilityTable discriminability(const InterpretableMLP& mlp, const Dataset& dataset,
                                       std::size_t sample_cap = 0,
                                       CorrelationKind kind = CorrelationKind::pearson);

enum class MapLayout { gray_sqrt, rgb_planes };

// min-max scaled to [0,255]; constant maps render mid-gray (128).
// gray_sqrt: binary PGM (P5), N must be a perfect square.
// rgb_planes: binary PPM (P6) from three channel-major planes, N = 3k^2.
void export_map_image(const ContributionMap& map, MapLayout layout,
                      const std::string& path);

// z^l for l = 0..L
std::vector<Vector> likelihood_series(const LayerTrace& trace);

// CSV emitters for the probe outputs (file formats fixed by the CLI contract)
void write_layer_accuracy_csv(const LayerAccuracyCurve& curve, const std::string& path);
void write_discriminability_csv(const DiscriminabilityTable& table, const std::string& path);
void write_likelihood_csv(const std::vector<Vector>& series, const std::string& path);

}  // namespace iimlp
