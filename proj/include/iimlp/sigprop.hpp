#pragma once

#include <cstddef>
#include <vector>

#include "iimlp/linalg.hpp"
#include "iimlp/network.hpp"

namespace iimlp {

// Variance fixed-point problem for a depth-L hard-tanh cascade at weight
// scale sigma. layer_index is the l in beta = 2 sigma^{2(l-1)} q: the
// published equation indexes it by the layer whose pre-activation variance is
// matched back to the first layer's, which is the network depth L. l = 1
// degenerates (beta loses its sigma dependence and the residual has no
// positive root); it stays available for sensitivity checks.
struct FixedPointProblem {
    double sigma;
    std::size_t layer_index;
    double tolerance = 1e-12;
    std::size_t max_iterations = 400;
};

// RHS of the variance equation at q:
//   ((beta-2)/2) erf(1/sqrt(beta)) - sqrt(beta/pi) exp(-1/beta) + 1,
//   beta = 2 sigma^{2(layer_index-1)} q.
// This equals Var(h^l)/sigma^2 of the identity-initialized cascade fed with
// Gaussian(0, q) inputs. The erf argument is 1/sqrt(beta): the printed form
// of the equation omits the root, which contradicts its own derivation and
// reproduces none of the published constants.
double fixed_point_rhs(double q, const FixedPointProblem& problem);

// Damped fixed-point iteration (damping 0.5) with bisection fallback once a
// sign change of the residual is bracketed. Returns q with
// |q - fixed_point_rhs(q)| < tolerance.
double solve_fixed_point(const FixedPointProblem& problem, double q_init);

// alpha^l = erf(1 / (sigma^l sqrt(2 q*))): probability that a coordinate
// survives l layers unsaturated.
double alpha(double sigma, std::size_t ell, double q_star);

enum class SpectrumRegime { sigma_le_one, sigma_gt_one };

// Two-atom Dirac mixture for the eigenvalues of J J^T at initialization:
// mass at sigma^{2L} plus the rest at 0.
struct SpectrumSummary {
    double atom_value;
    double mass_at_atom;
    double mass_at_zero;
    SpectrumRegime regime;
};

SpectrumSummary theoretical_spectrum(double sigma, std::size_t layers, double q_star);

struct Calibration {
    double sigma;
    double q_star;
};

// Finds sigma on (1, 2] whose self-consistent q* puts the requested mass at
// the spectrum atom; the mass curve is monotone decreasing in sigma, so
// bisection applies and the qualifying sigma is unique.
Calibration calibrate(double target_mass, std::size_t layers);

struct PropagationProfile {
    std::vector<double> per_layer_variance;             // Var of h^l entries, l = 1..L
    std::vector<double> per_layer_saturation_fraction;  // fraction with |h^l| >= 1
};

// Runs the real network on Gaussian(0, q_star) inputs of full width C+N and
// pools per-layer statistics over all samples and coordinates. Variance uses
// a deterministic two-pass sweep (means first, squared deviations second).
PropagationProfile monte_carlo_profile(const NetworkConfig& config, SeededRng& rng,
                                       std::size_t n_samples);

struct EmpiricalSpectrum {
    SpectrumSummary summary;
    std::vector<double> eigenvalues;  // one per (sample, coordinate)
};

// Per-coordinate eigenvalues sigma^{2L} prod_l phi'(h^l_i)^2 of J J^T,
// which the diagonal structure at identity initialization makes exact.
// Throws UsageError when any weight deviates from sigma I.
EmpiricalSpectrum empirical_spectrum_at_init(const NetworkConfig& config, SeededRng& rng,
                                             std::size_t n_samples);

}  // namespace iimlp
