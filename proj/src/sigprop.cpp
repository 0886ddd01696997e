#include "iimlp/sigprop.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace iimlp {

namespace {

double beta_of(double q, const FixedPointProblem& p) {
    return 2.0 * std::pow(p.sigma, 2.0 * (double(p.layer_index) - 1.0)) * q;
}

}  // namespace

double fixed_point_rhs(double q, const FixedPointProblem& problem) {
    if (!(q > 0.0))
        throw UsageError("fixed_point_rhs: q must be positive, got " + std::to_string(q));
    if (!(problem.sigma > 0.0)) throw UsageError("fixed_point_rhs: sigma must be positive");
    const double beta = beta_of(q, problem);
    if (beta > 100.0) {
        // the two O(sqrt(beta)) terms cancel to O(1); the equivalent form
        //   1 - erf(s) + (2/sqrt(pi)) sum_n (-1)^n s^{2n+1}/(n!(2n+3)), s = 1/sqrt(beta)
        // evaluates it without cancellation
        const double s = 1.0 / std::sqrt(beta);
        double sum = 0.0, term = s;
        for (int n = 0; n < 12; ++n) {
            sum += term / double(2 * n + 3) * ((n % 2) ? -1.0 : 1.0);
            term *= s * s / double(n + 1);
        }
        return 1.0 - erf(s) + 2.0 / std::sqrt(M_PI) * sum;
    }
    return (beta - 2.0) / 2.0 * erf(1.0 / std::sqrt(beta)) -
           std::sqrt(beta / M_PI) * std::exp(-1.0 / beta) + 1.0;
}

double solve_fixed_point(const FixedPointProblem& problem, double q_init) {
    if (!(q_init > 0.0)) throw UsageError("solve_fixed_point: q_init must be positive");
    if (!(problem.tolerance > 0.0))
        throw UsageError("solve_fixed_point: tolerance must be positive");

    auto residual = [&](double q) { return fixed_point_rhs(q, problem) - q; };
    std::vector<std::pair<double, double>> trail;
    auto record = [&](double q, double r) { trail.emplace_back(q, r); };

    double r0 = residual(q_init);
    record(q_init, r0);
    if (std::fabs(r0) < problem.tolerance) return q_init;

    // The residual decreases through its root, so a geometric ladder from
    // q_init in the direction the sign demands finds a bracket when a root
    // exists on (0, 4].
    double lo = 0.0, hi = 0.0;  // r(lo) > 0 > r(hi)
    double q = q_init;
    if (r0 > 0.0) {
        lo = q_init;
        for (double probe = q_init * 1.5; probe <= 4.0; probe *= 1.5) {
            double r = residual(probe);
            record(probe, r);
            if (std::fabs(r) < problem.tolerance) return probe;
            if (r < 0.0) {
                hi = probe;
                break;
            }
            lo = probe;
        }
    } else {
        hi = q_init;
        for (double probe = q_init / 1.5; probe >= 1e-15; probe /= 1.5) {
            double r = residual(probe);
            record(probe, r);
            if (std::fabs(r) < problem.tolerance) return probe;
            if (r > 0.0) {
                lo = probe;
                break;
            }
            hi = probe;
        }
    }

    if (lo > 0.0 && hi > 0.0) {
        // bisection on the bracketed sign change
        for (std::size_t it = trail.size(); it < problem.max_iterations; ++it) {
            double mid = 0.5 * (lo + hi);
            double r = residual(mid);
            record(mid, r);
            if (std::fabs(r) < problem.tolerance) return mid;
            if (r > 0.0)
                lo = mid;
            else
                hi = mid;
        }
    } else {
        // one-signed residual (no positive fixed point in this regime):
        // damped iteration settles where the residual dips below tolerance
        for (std::size_t it = trail.size(); it < problem.max_iterations; ++it) {
            double r = residual(q);
            record(q, r);
            if (std::fabs(r) < problem.tolerance) return q;
            double next = q + 0.5 * r;
            q = next > 0.0 ? next : q * 0.5;
        }
    }

    std::ostringstream msg;
    msg << "solve_fixed_point: no convergence within " << problem.max_iterations
        << " iterations (sigma=" << problem.sigma << ", layer_index=" << problem.layer_index
        << "); residual trace (last 8):";
    std::size_t from = trail.size() > 8 ? trail.size() - 8 : 0;
    for (std::size_t i = from; i < trail.size(); ++i)
        msg << " (q=" << trail[i].first << ", r=" << trail[i].second << ")";
    throw DiagnosticError(msg.str());
}

double alpha(double sigma, std::size_t ell, double q_star) {
    if (!(sigma > 0.0) || !(q_star > 0.0))
        throw UsageError("alpha: sigma and q_star must be positive");
    return erf(1.0 / (std::pow(sigma, double(ell)) * std::sqrt(2.0 * q_star)));
}

SpectrumSummary theoretical_spectrum(double sigma, std::size_t layers, double q_star) {
    if (!(sigma > 0.0) || layers < 1 || !(q_star > 0.0))
        throw UsageError("theoretical_spectrum: invalid arguments");
    SpectrumSummary s;
    s.regime = sigma <= 1.0 ? SpectrumRegime::sigma_le_one : SpectrumRegime::sigma_gt_one;
    s.atom_value = std::pow(sigma, 2.0 * double(layers));
    const std::size_t ell = sigma <= 1.0 ? 1 : layers;
    s.mass_at_atom = alpha(sigma, ell, q_star);
    s.mass_at_zero = 1.0 - s.mass_at_atom;
    return s;
}

Calibration calibrate(double target_mass, std::size_t layers) {
    if (!(target_mass > 0.0 && target_mass < 1.0))
        throw UsageError("calibrate: target_mass must lie in (0, 1)");
    if (layers < 1) throw UsageError("calibrate: layers must be >= 1");

    // Self-consistent mass at one sigma. Only sigma > 1 admits a positive
    // fixed point (the residual needs the sigma^{2(L-1)} expansion to offset
    // the clamp's variance loss), so the search interval is (1, 2].
    auto mass_at = [&](double sigma) {
        FixedPointProblem p{sigma, layers, 1e-13, 400};
        double q = solve_fixed_point(p, 0.3);
        return std::pair<double, double>(theoretical_spectrum(sigma, layers, q).mass_at_atom,
                                         q);
    };

    double lo = 1.0 + 1e-9, hi = 2.0;
    auto [mass_lo, q_lo] = mass_at(lo);
    auto [mass_hi, q_hi] = mass_at(hi);
    // mass is monotone decreasing in sigma
    if (target_mass > mass_lo || target_mass < mass_hi) {
        std::ostringstream msg;
        msg << "calibrate: target mass " << target_mass << " outside the achievable range ["
            << mass_hi << ", " << mass_lo << "] for L=" << layers << " on sigma in (1, 2]";
        throw DiagnosticError(msg.str());
    }
    (void)q_lo;
    (void)q_hi;
    double sigma = lo, q_star = 0.0;
    while (hi - lo > 1e-13) {
        double mid = 0.5 * (lo + hi);
        auto [m, q] = mass_at(mid);
        if (m > target_mass)
            lo = mid;
        else
            hi = mid;
        sigma = mid;
        q_star = q;
    }
    // ensure the returned pair satisfies the calibration contract
    double achieved = theoretical_spectrum(sigma, layers, q_star).mass_at_atom;
    if (std::fabs(achieved - target_mass) >= 1e-3) {
        std::ostringstream msg;
        msg << "calibrate: bisection stalled at sigma=" << sigma << " mass=" << achieved
            << " for target " << target_mass;
        throw DiagnosticError(msg.str());
    }
    return Calibration{sigma, q_star};
}

namespace {

void require_identity(const InterpretableMLP& mlp, const char* who) {
    if (!mlp.is_exact_identity_init())
        throw UsageError(std::string(who) + ": network weights are not exactly sigma I");
}

}  // namespace

PropagationProfile monte_carlo_profile(const NetworkConfig& config, SeededRng& rng,
                                       std::size_t n_samples) {
    config.validate();
    if (n_samples < 1) throw UsageError("monte_carlo_profile: n_samples must be >= 1");
    InterpretableMLP mlp = InterpretableMLP::init_identity(config);
    require_identity(mlp, "monte_carlo_profile");

    const std::size_t W = mlp.width(), L = config.layers;
    const std::size_t chunk = std::min<std::size_t>(64, n_samples);

    // inputs drawn once; both passes replay the same buffer
    std::vector<double> inputs = gauss(rng, 0.0, config.q_star, n_samples * W);

    BatchWorkspace ws;
    ws.init(L, W, chunk);

    const double count = double(n_samples) * double(W);
    std::vector<double> mean(L, 0.0), var(L, 0.0), sat(L, 0.0);

    // pass 1: per-layer means and saturation counts
    for (std::size_t s0 = 0; s0 < n_samples; s0 += chunk) {
        const std::size_t b = std::min(chunk, n_samples - s0);
        std::copy(inputs.begin() + s0 * W, inputs.begin() + (s0 + b) * W, ws.y[0].begin());
        forward_batch(mlp, ws, b);
        for (std::size_t l = 0; l < L; ++l) {
            const auto& h = ws.h[l];
            double sum = 0.0;
            std::size_t nsat = 0;
            for (std::size_t i = 0; i < b * W; ++i) {
                sum += h[i];
                if (std::fabs(h[i]) >= 1.0) ++nsat;
            }
            mean[l] += sum;
            sat[l] += double(nsat);
        }
    }
    for (std::size_t l = 0; l < L; ++l) mean[l] /= count;

    // pass 2: squared deviations about the pass-1 means
    for (std::size_t s0 = 0; s0 < n_samples; s0 += chunk) {
        const std::size_t b = std::min(chunk, n_samples - s0);
        std::copy(inputs.begin() + s0 * W, inputs.begin() + (s0 + b) * W, ws.y[0].begin());
        forward_batch(mlp, ws, b);
        for (std::size_t l = 0; l < L; ++l) {
            const auto& h = ws.h[l];
            double sum = 0.0;
            for (std::size_t i = 0; i < b * W; ++i) {
                const double d = h[i] - mean[l];
                sum += d * d;
            }
            var[l] += sum;
        }
    }

    PropagationProfile out;
    out.per_layer_variance.resize(L);
    out.per_layer_saturation_fraction.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        out.per_layer_variance[l] = var[l] / count;
        out.per_layer_saturation_fraction[l] = sat[l] / count;
    }
    return out;
}

EmpiricalSpectrum empirical_spectrum_at_init(const NetworkConfig& config, SeededRng& rng,
                                             std::size_t n_samples) {
    config.validate();
    if (n_samples < 1) throw UsageError("empirical_spectrum_at_init: n_samples must be >= 1");
    InterpretableMLP mlp = InterpretableMLP::init_identity(config);
    require_identity(mlp, "empirical_spectrum_at_init");

    const std::size_t W = mlp.width(), L = config.layers;
    const std::size_t chunk = std::min<std::size_t>(64, n_samples);
    const double atom = std::pow(config.sigma, 2.0 * double(L));

    std::vector<double> inputs = gauss(rng, 0.0, config.q_star, n_samples * W);
    BatchWorkspace ws;
    ws.init(L, W, chunk);

    EmpiricalSpectrum out;
    out.eigenvalues.resize(n_samples * W);

    std::vector<double> prod(chunk * W);
    for (std::size_t s0 = 0; s0 < n_samples; s0 += chunk) {
        const std::size_t b = std::min(chunk, n_samples - s0);
        std::copy(inputs.begin() + s0 * W, inputs.begin() + (s0 + b) * W, ws.y[0].begin());
        forward_batch(mlp, ws, b);
        std::fill(prod.begin(), prod.begin() + b * W, atom);
        for (std::size_t l = 0; l < L; ++l) {
            const auto& h = ws.h[l];
            const bool head = config.last_layer_linear_head && l + 1 == L;
            for (std::size_t i = 0; i < b * W; ++i) {
                double d = (head && (i % W) < config.class_count)
                               ? 1.0
                               : (config.activation == Activation::hard_tanh
                                      ? hard_tanh_deriv_scalar(h[i])
                                      : relu_deriv_scalar(h[i]));
                prod[i] *= d * d;
            }
        }
        std::copy(prod.begin(), prod.begin() + b * W, out.eigenvalues.begin() + s0 * W);
    }

    std::size_t at_atom = 0;
    for (double ev : out.eigenvalues)
        if (std::fabs(ev - atom) <= 1e-9 * atom) ++at_atom;
    out.summary.atom_value = atom;
    out.summary.mass_at_atom = double(at_atom) / double(out.eigenvalues.size());
    out.summary.mass_at_zero = 1.0 - out.summary.mass_at_atom;
    out.summary.regime =
        config.sigma <= 1.0 ? SpectrumRegime::sigma_le_one : SpectrumRegime::sigma_gt_one;
    return out;
}

}  // namespace iimlp
