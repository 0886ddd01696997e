#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iimlp/linalg.hpp"

namespace iimlp {

enum class Activation : std::uint8_t { hard_tanh = 0, relu = 1 };
enum class InitKind : std::uint8_t { identity = 0, he_random = 1 };

struct NetworkConfig {
    std::size_t layers = 100;      // L
    std::size_t data_width = 784;  // N
    std::size_t class_count = 10;  // C
    double sigma = 1.0 + 8e-4;
    double q_star = 0.29;
    Activation activation = Activation::hard_tanh;
    InitKind init = InitKind::identity;
    std::uint64_t seed = 0;
    // When set, the first C coordinates of layer L skip the activation so the
    // softmax sees raw pre-activations. Off by default.
    bool last_layer_linear_head = false;

    std::size_t width() const { return class_count + data_width; }
    void validate() const;  // throws UsageError on bad field values
};

// Read/write window into one rectangular block of a layer matrix.
class BlockView {
public:
    BlockView(Matrix& m, std::size_t row0, std::size_t col0, std::size_t rows,
              std::size_t cols)
        : m_(&m), row0_(row0), col0_(col0), rows_(rows), cols_(cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& at(std::size_t r, std::size_t c) { return (*m_)(row0_ + r, col0_ + c); }
    double at(std::size_t r, std::size_t c) const { return (*m_)(row0_ + r, col0_ + c); }
    Matrix copy() const;

private:
    Matrix* m_;
    std::size_t row0_, col0_, rows_, cols_;
};

// The four Eq.-style sub-blocks of one (C+N)x(C+N) layer matrix:
//   w11: CxC, w12: CxN, w21: NxC, w22: NxN.
struct SubmatrixView {
    BlockView w11, w12, w21, w22;
};

// Full record of one forward pass: input u plus per-layer pre-activations and
// outputs. z(l)/x(l) split each vector into the class and data parts.
struct LayerTrace {
    std::size_t class_count = 0;
    Vector input;                 // y^0 = u
    std::vector<Vector> pre;      // h^1 .. h^L
    std::vector<Vector> out;      // y^1 .. y^L

    std::size_t layers() const { return out.size(); }
    const Vector& y(std::size_t l) const { return l == 0 ? input : out[l - 1]; }
    const Vector& h(std::size_t l) const;  // l in [1, L]
    Vector z(std::size_t l) const;         // first C entries of y(l)
    Vector x(std::size_t l) const;         // remaining entries of y(l)
};

struct Gradients {
    std::vector<Matrix> layer;  // same shapes as the weights
};

class InterpretableMLP {
public:
    static InterpretableMLP init_identity(const NetworkConfig& config);
    static InterpretableMLP init_he_random(const NetworkConfig& config, SeededRng& rng);
    // deserialization path; weights must already have the right shapes
    static InterpretableMLP from_weights(const NetworkConfig& config,
                                         std::vector<Matrix> weights);

    const NetworkConfig& config() const { return config_; }
    std::size_t width() const { return config_.width(); }
    std::size_t layers() const { return weights_.size(); }

    Matrix& weight(std::size_t l) { return weights_[l]; }             // l in [0, L)
    const Matrix& weight(std::size_t l) const { return weights_[l]; }
    SubmatrixView blocks(std::size_t l);

    // true iff every weight matrix is exactly sigma on the diagonal, 0 elsewhere
    bool is_exact_identity_init() const;

private:
    InterpretableMLP(NetworkConfig config, std::vector<Matrix> weights)
        : config_(std::move(config)), weights_(std::move(weights)) {}

    NetworkConfig config_;
    std::vector<Matrix> weights_;
};

// u = (0,...,0 | x0): zero class slots prepended to the data vector
Vector pad_input(const Vector& x0, std::size_t class_count);

LayerTrace forward(const InterpretableMLP& mlp, const Vector& u);

// Same pass expressed through the four sub-blocks; accumulation order matches
// forward() exactly, so results are bit-identical.
LayerTrace forward_submatrix(const InterpretableMLP& mlp, const Vector& u);

struct LossResult {
    double loss;
    Gradients gradients;
};

// Cross-entropy on softmax(z^L) against the label; reverse accumulation.
// Coordinates outside z^L get zero output gradient.
LossResult loss_and_gradients(const InterpretableMLP& mlp, const Vector& u,
                              std::size_t label);

// Forward-mode tangent t^l = D^l (W^l t^{l-1}); returns J v for J = dy^L/du.
Vector jacobian_vector_product(const InterpretableMLP& mlp, const Vector& u,
                               const Vector& v);

// Reverse-mode adjoint J^T w, sharing the linearization point u.
Vector vector_jacobian_product(const InterpretableMLP& mlp, const Vector& u,
                               const Vector& w);

// Power iteration on J^T J; returns the dominant singular value estimate.
// A fully dead Jacobian yields 0.
double top_singular_value(const InterpretableMLP& mlp, const Vector& u, SeededRng& rng,
                          std::size_t iterations);

// Binary checkpoint, bit-exact round trip. Layout: magic "IIMLP\x01",
// u32 L,C,N (LE), f64 sigma, q_star, u8 activation, u8 init, L row-major
// f64 weight blocks, trailing u64 CRC-64/XZ of all preceding bytes.
void save_checkpoint(const InterpretableMLP& mlp, const std::string& path);
InterpretableMLP load_checkpoint(const std::string& path);

std::uint64_t crc64(const void* data, std::size_t len, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Batched evaluation used by the trainer and the Monte-Carlo validators.
// Activations are batch-major: buffer[b * width + k] is coordinate k of
// sample b. Every kernel writes each output element from exactly one place
// with a fixed accumulation order, so results do not depend on scheduling.
// ---------------------------------------------------------------------------
struct BatchWorkspace {
    std::size_t capacity = 0;  // max batch size
    std::size_t width = 0;
    std::vector<std::vector<double>> y;  // L+1 buffers of capacity*width
    std::vector<std::vector<double>> h;  // L buffers of capacity*width

    void init(std::size_t layers, std::size_t width, std::size_t capacity);
};

// Runs the forward pass for the first `batch` rows of ws.y[0].
void forward_batch(const InterpretableMLP& mlp, BatchWorkspace& ws, std::size_t batch);

// Reverse pass from dLoss/dy^L (batch-major, batch rows); accumulates raw
// per-sample gradient sums into grads (caller scales by 1/batch).
void backward_batch(const InterpretableMLP& mlp, const BatchWorkspace& ws,
                    std::vector<double>& delta, std::size_t batch, Gradients& grads);

}  // namespace iimlp
