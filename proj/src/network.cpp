#include "iimlp/network.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace iimlp {

void NetworkConfig::validate() const {
    if (layers < 1) throw UsageError("NetworkConfig: layers must be >= 1");
    if (data_width < 1) throw UsageError("NetworkConfig: data_width must be >= 1");
    if (class_count < 1) throw UsageError("NetworkConfig: class_count must be >= 1");
    if (!(sigma > 0.0)) throw UsageError("NetworkConfig: sigma must be > 0");
    if (!(q_star > 0.0)) throw UsageError("NetworkConfig: q_star must be > 0");
}

Matrix BlockView::copy() const {
    Matrix out(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) out(r, c) = at(r, c);
    return out;
}

const Vector& LayerTrace::h(std::size_t l) const {
    if (l < 1 || l > pre.size()) throw UsageError("LayerTrace::h: layer out of range");
    return pre[l - 1];
}

Vector LayerTrace::z(std::size_t l) const {
    const Vector& v = y(l);
    return Vector(v.begin(), v.begin() + class_count);
}

Vector LayerTrace::x(std::size_t l) const {
    const Vector& v = y(l);
    return Vector(v.begin() + class_count, v.end());
}

InterpretableMLP InterpretableMLP::init_identity(const NetworkConfig& config) {
    config.validate();
    if (config.init != InitKind::identity)
        throw UsageError("init_identity: config.init is not identity");
    std::vector<Matrix> w;
    w.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l)
        w.push_back(Matrix::scaled_identity(config.width(), config.sigma));
    return InterpretableMLP(config, std::move(w));
}

InterpretableMLP InterpretableMLP::init_he_random(const NetworkConfig& config,
                                                  SeededRng& rng) {
    config.validate();
    if (config.init != InitKind::he_random)
        throw UsageError("init_he_random: config.init is not he_random");
    const std::size_t n = config.width();
    const double variance = 2.0 / static_cast<double>(n);
    std::vector<Matrix> w;
    w.reserve(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
        Matrix m(n, n);
        m.data() = gauss(rng, 0.0, variance, n * n);
        w.push_back(std::move(m));
    }
    return InterpretableMLP(config, std::move(w));
}

InterpretableMLP InterpretableMLP::from_weights(const NetworkConfig& config,
                                                std::vector<Matrix> weights) {
    config.validate();
    if (weights.size() != config.layers)
        throw UsageError("from_weights: layer count mismatch");
    for (const Matrix& m : weights)
        if (m.rows() != config.width() || m.cols() != config.width())
            throw UsageError("from_weights: weight shape mismatch");
    return InterpretableMLP(config, std::move(weights));
}

SubmatrixView InterpretableMLP::blocks(std::size_t l) {
    Matrix& m = weights_.at(l);
    const std::size_t c = config_.class_count, n = config_.data_width;
    return SubmatrixView{BlockView(m, 0, 0, c, c), BlockView(m, 0, c, c, n),
                         BlockView(m, c, 0, n, c), BlockView(m, c, c, n, n)};
}

bool InterpretableMLP::is_exact_identity_init() const {
    const double s = config_.sigma;
    for (const Matrix& m : weights_) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const double* r = m.row(i);
            for (std::size_t j = 0; j < m.cols(); ++j) {
                if (r[j] != (i == j ? s : 0.0)) return false;
            }
        }
    }
    return true;
}

Vector pad_input(const Vector& x0, std::size_t class_count) {
    Vector u(class_count + x0.size(), 0.0);
    std::copy(x0.begin(), x0.end(), u.begin() + class_count);
    return u;
}

namespace {

inline double activate(Activation a, double x) {
    return a == Activation::hard_tanh ? hard_tanh_scalar(x) : relu_scalar(x);
}
inline double activate_deriv(Activation a, double x) {
    return a == Activation::hard_tanh ? hard_tanh_deriv_scalar(x) : relu_deriv_scalar(x);
}

// activation of layer l at coordinate i honoring the optional linear head
inline double layer_activate(const NetworkConfig& cfg, std::size_t l1 /*1-based*/,
                             std::size_t i, double x) {
    if (cfg.last_layer_linear_head && l1 == cfg.layers && i < cfg.class_count) return x;
    return activate(cfg.activation, x);
}
inline double layer_activate_deriv(const NetworkConfig& cfg, std::size_t l1,
                                   std::size_t i, double x) {
    if (cfg.last_layer_linear_head && l1 == cfg.layers && i < cfg.class_count) return 1.0;
    return activate_deriv(cfg.activation, x);
}

}  // namespace

LayerTrace forward(const InterpretableMLP& mlp, const Vector& u) {
    const NetworkConfig& cfg = mlp.config();
    if (u.size() != mlp.width())
        throw UsageError("forward: input length " + std::to_string(u.size()) +
                         " != C+N = " + std::to_string(mlp.width()));
    LayerTrace t;
    t.class_count = cfg.class_count;
    t.input = u;
    t.pre.reserve(cfg.layers);
    t.out.reserve(cfg.layers);
    const Vector* y = &t.input;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        Vector h = matvec(mlp.weight(l), *y);
        Vector out(h.size());
        for (std::size_t i = 0; i < h.size(); ++i)
            out[i] = layer_activate(cfg, l + 1, i, h[i]);
        t.pre.push_back(std::move(h));
        t.out.push_back(std::move(out));
        y = &t.out.back();
    }
    return t;
}

LayerTrace forward_submatrix(const InterpretableMLP& mlp, const Vector& u) {
    const NetworkConfig& cfg = mlp.config();
    if (u.size() != mlp.width())
        throw UsageError("forward_submatrix: input length mismatch");
    const std::size_t c = cfg.class_count, w = mlp.width();
    LayerTrace t;
    t.class_count = c;
    t.input = u;
    const Vector* y = &t.input;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const Matrix& m = mlp.weight(l);
        Vector h(w);
        // z rows: W11 z^{l-1} + W12 x^{l-1}; x rows: W21 z^{l-1} + W22 x^{l-1}.
        // k runs 0..C-1 then C..C+N-1, the same order forward() uses, so the
        // two formulations agree bit for bit.
        for (std::size_t i = 0; i < w; ++i) {
            const double* r = m.row(i);
            double acc = 0.0;
            for (std::size_t k = 0; k < c; ++k) acc += r[k] * (*y)[k];
            for (std::size_t k = c; k < w; ++k) acc += r[k] * (*y)[k];
            h[i] = acc;
        }
        Vector out(w);
        for (std::size_t i = 0; i < w; ++i) out[i] = layer_activate(cfg, l + 1, i, h[i]);
        t.pre.push_back(std::move(h));
        t.out.push_back(std::move(out));
        y = &t.out.back();
    }
    return t;
}

LossResult loss_and_gradients(const InterpretableMLP& mlp, const Vector& u,
                              std::size_t label) {
    const NetworkConfig& cfg = mlp.config();
    if (label >= cfg.class_count)
        throw UsageError("loss_and_gradients: label " + std::to_string(label) +
                         " >= C = " + std::to_string(cfg.class_count));
    LayerTrace trace = forward(mlp, u);

    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        for (std::size_t i = 0; i < mlp.width(); ++i) {
            if (!std::isfinite(trace.h(l)[i]))
                throw DiagnosticError("loss_and_gradients: non-finite value at layer " +
                                      std::to_string(l));
        }
    }

    Vector zl = trace.z(cfg.layers);
    Vector p = softmax(zl);
    double loss = -std::log(p[label]);
    if (!std::isfinite(loss))
        throw DiagnosticError("loss_and_gradients: non-finite loss at layer " +
                              std::to_string(cfg.layers));

    // dLoss/dy^L: softmax cross-entropy on the class slots, zero elsewhere
    Vector delta(mlp.width(), 0.0);
    for (std::size_t i = 0; i < cfg.class_count; ++i)
        delta[i] = p[i] - (i == label ? 1.0 : 0.0);

    Gradients grads;
    grads.layer.resize(cfg.layers);
    for (std::size_t li = cfg.layers; li >= 1; --li) {
        const Matrix& w = mlp.weight(li - 1);
        const Vector& h = trace.h(li);
        const Vector& yin = trace.y(li - 1);
        // through the activation
        Vector dh(mlp.width());
        for (std::size_t i = 0; i < mlp.width(); ++i)
            dh[i] = delta[i] * layer_activate_deriv(cfg, li, i, h[i]);
        // dW and the pushed-back delta
        Matrix g(mlp.width(), mlp.width());
        for (std::size_t i = 0; i < mlp.width(); ++i) {
            double* gr = g.row(i);
            const double c = dh[i];
            for (std::size_t k = 0; k < mlp.width(); ++k) gr[k] = c * yin[k];
        }
        grads.layer[li - 1] = std::move(g);
        Vector next(mlp.width(), 0.0);
        for (std::size_t i = 0; i < mlp.width(); ++i) {
            const double* r = w.row(i);
            const double c = dh[i];
            for (std::size_t k = 0; k < mlp.width(); ++k) next[k] += c * r[k];
        }
        delta = std::move(next);
    }
    return LossResult{loss, std::move(grads)};
}

Vector jacobian_vector_product(const InterpretableMLP& mlp, const Vector& u,
                               const Vector& v) {
    const NetworkConfig& cfg = mlp.config();
    if (v.size() != mlp.width())
        throw UsageError("jacobian_vector_product: tangent length mismatch");
    LayerTrace trace = forward(mlp, u);
    Vector t = v;
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        Vector wt = matvec(mlp.weight(l - 1), t);
        const Vector& h = trace.h(l);
        for (std::size_t i = 0; i < wt.size(); ++i)
            wt[i] *= layer_activate_deriv(cfg, l, i, h[i]);
        t = std::move(wt);
    }
    return t;
}

Vector vector_jacobian_product(const InterpretableMLP& mlp, const Vector& u,
                               const Vector& w) {
    const NetworkConfig& cfg = mlp.config();
    if (w.size() != mlp.width())
        throw UsageError("vector_jacobian_product: adjoint length mismatch");
    LayerTrace trace = forward(mlp, u);
    Vector delta = w;
    for (std::size_t li = cfg.layers; li >= 1; --li) {
        const Vector& h = trace.h(li);
        Vector dh(mlp.width());
        for (std::size_t i = 0; i < mlp.width(); ++i)
            dh[i] = delta[i] * layer_activate_deriv(cfg, li, i, h[i]);
        const Matrix& wm = mlp.weight(li - 1);
        Vector next(mlp.width(), 0.0);
        for (std::size_t i = 0; i < mlp.width(); ++i) {
            const double* r = wm.row(i);
            const double c = dh[i];
            for (std::size_t k = 0; k < mlp.width(); ++k) next[k] += c * r[k];
        }
        delta = std::move(next);
    }
    return delta;
}

double top_singular_value(const InterpretableMLP& mlp, const Vector& u, SeededRng& rng,
                          std::size_t iterations) {
    if (iterations < 1) throw UsageError("top_singular_value: iterations must be >= 1");
    Vector v = gauss(rng, 0.0, 1.0, mlp.width());
    double lambda = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        double nv = std::sqrt(dot(v, v));
        if (nv == 0.0) return 0.0;
        for (double& e : v) e /= nv;
        Vector jv = jacobian_vector_product(mlp, u, v);
        Vector jtjv = vector_jacobian_product(mlp, u, jv);
        lambda = dot(v, jtjv);  // Rayleigh quotient of J^T J
        if (lambda == 0.0) return 0.0;
        v = std::move(jtjv);
    }
    return std::sqrt(lambda);
}

// ---------------------------------------------------------------------------
// CRC-64/XZ (reflected ECMA-182 polynomial), table driven.
// ---------------------------------------------------------------------------
namespace {

const std::array<std::uint64_t, 256>& crc64_table() {
    static const std::array<std::uint64_t, 256> table = [] {
        std::array<std::uint64_t, 256> t{};
        const std::uint64_t poly = 0xC96C5795D7870F42ULL;
        for (std::uint64_t i = 0; i < 256; ++i) {
            std::uint64_t crc = i;
            for (int b = 0; b < 8; ++b)
                crc = (crc >> 1) ^ ((crc & 1) ? poly : 0);
            t[i] = crc;
        }
        return t;
    }();
    return table;
}

}  // namespace

std::uint64_t crc64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto& t = crc64_table();
    std::uint64_t crc = ~seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i)
        crc = (crc >> 8) ^ t[(crc ^ p[i]) & 0xFF];
    return ~crc;
}

// ---------------------------------------------------------------------------
// checkpoint I/O
// ---------------------------------------------------------------------------
namespace {

constexpr char kMagic[6] = {'I', 'I', 'M', 'L', 'P', '\x01'};

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t((unsigned char)buf[off + i]) << (8 * i);
    return v;
}
std::uint64_t get_u64(const std::string& buf, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t((unsigned char)buf[off + i]) << (8 * i);
    return v;
}
double get_f64(const std::string& buf, std::size_t off) {
    std::uint64_t v = get_u64(buf, off);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

void save_checkpoint(const InterpretableMLP& mlp, const std::string& path) {
    const NetworkConfig& cfg = mlp.config();
    std::string buf;
    const std::size_t w = mlp.width();
    buf.reserve(24 + mlp.layers() * w * w * 8 + 32);
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, std::uint32_t(cfg.layers));
    put_u32(buf, std::uint32_t(cfg.class_count));
    put_u32(buf, std::uint32_t(cfg.data_width));
    put_f64(buf, cfg.sigma);
    put_f64(buf, cfg.q_star);
    buf.push_back(char(std::uint8_t(cfg.activation)));
    buf.push_back(char(std::uint8_t(cfg.init)));
    for (std::size_t l = 0; l < mlp.layers(); ++l) {
        const auto& data = mlp.weight(l).data();
        std::size_t pos = buf.size();
        buf.resize(pos + data.size() * 8);
        std::memcpy(&buf[pos], data.data(), data.size() * 8);
        // stored little-endian; this code targets little-endian hosts
    }
    put_u64(buf, crc64(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DiagnosticError("save_checkpoint: cannot open " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw DiagnosticError("save_checkpoint: short write to " + path);
}

InterpretableMLP load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DiagnosticError("load_checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < sizeof(kMagic) + 12 + 16 + 2 + 8)
        throw DiagnosticError("load_checkpoint: truncated header, got " +
                              std::to_string(buf.size()) + " bytes");
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw DiagnosticError("load_checkpoint: bad magic at offset 0");

    std::size_t off = sizeof(kMagic);
    NetworkConfig cfg;
    cfg.layers = get_u32(buf, off);
    cfg.class_count = get_u32(buf, off + 4);
    cfg.data_width = get_u32(buf, off + 8);
    off += 12;
    cfg.sigma = get_f64(buf, off);
    cfg.q_star = get_f64(buf, off + 8);
    off += 16;
    cfg.activation = Activation(std::uint8_t(buf[off]));
    cfg.init = InitKind(std::uint8_t(buf[off + 1]));
    off += 2;
    cfg.validate();

    const std::size_t w = cfg.class_count + cfg.data_width;
    const std::size_t expect = off + cfg.layers * w * w * 8 + 8;
    if (buf.size() != expect)
        throw DiagnosticError("load_checkpoint: expected " + std::to_string(expect) +
                              " bytes for L=" + std::to_string(cfg.layers) + " C=" +
                              std::to_string(cfg.class_count) + " N=" +
                              std::to_string(cfg.data_width) + ", got " +
                              std::to_string(buf.size()) + " (shape mismatch or truncation)");

    std::uint64_t stored = get_u64(buf, buf.size() - 8);
    std::uint64_t actual = crc64(buf.data(), buf.size() - 8);
    if (stored != actual)
        throw DiagnosticError("load_checkpoint: CRC mismatch at offset " +
                              std::to_string(buf.size() - 8));

    std::vector<Matrix> weights;
    weights.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        Matrix m(w, w);
        std::memcpy(m.data().data(), &buf[off], w * w * 8);
        off += w * w * 8;
        if (!m.all_finite())
            throw DiagnosticError("load_checkpoint: non-finite weight in layer " +
                                  std::to_string(l + 1));
        weights.push_back(std::move(m));
    }
    // seed and the linear-head flag are runtime options, not checkpoint state
    return InterpretableMLP::from_weights(cfg, std::move(weights));
}

// ---------------------------------------------------------------------------
// batched kernels (batch-major activations)
// ---------------------------------------------------------------------------
void BatchWorkspace::init(std::size_t layers, std::size_t w, std::size_t cap) {
    capacity = cap;
    width = w;
    y.assign(layers + 1, std::vector<double>(cap * w, 0.0));
    h.assign(layers, std::vector<double>(cap * w, 0.0));
}

namespace {

// H[b][i] = sum_k Y[b][k] W[i][k], W tiled and transposed into a stack buffer
void gemm_forward(const Matrix& w, const std::vector<double>& yin, std::size_t batch,
                  std::size_t width, std::vector<double>& hout) {
    constexpr std::size_t TS = 64;
    std::fill(hout.begin(), hout.begin() + batch * width, 0.0);
    alignas(64) double wt[TS * TS];
    for (std::size_t i0 = 0; i0 < width; i0 += TS) {
        const std::size_t ni = std::min(TS, width - i0);
        for (std::size_t k0 = 0; k0 < width; k0 += TS) {
            const std::size_t nk = std::min(TS, width - k0);
            for (std::size_t i = 0; i < ni; ++i)
                for (std::size_t k = 0; k < nk; ++k)
                    wt[k * TS + i] = w(i0 + i, k0 + k);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* y = &yin[b * width + k0];
                double* hd = &hout[b * width + i0];
                for (std::size_t k = 0; k < nk; ++k) {
                    const double c = y[k];
                    const double* wrow = &wt[k * TS];
                    for (std::size_t i = 0; i < ni; ++i) hd[i] += c * wrow[i];
                }
            }
        }
    }
}

// T[b][k] = sum_i D[b][i] W[i][k]
void gemm_backprop(const Matrix& w, const std::vector<double>& d, std::size_t batch,
                   std::size_t width, std::vector<double>& t) {
    std::fill(t.begin(), t.begin() + batch * width, 0.0);
    for (std::size_t i = 0; i < width; ++i) {
        const double* wrow = w.row(i);
        for (std::size_t b = 0; b < batch; ++b) {
            const double c = d[b * width + i];
            if (c == 0.0) continue;
            double* tr = &t[b * width];
            for (std::size_t k = 0; k < width; ++k) tr[k] += c * wrow[k];
        }
    }
}

// G[i][k] += sum_b D[b][i] Y[b][k]
void gemm_grad(const std::vector<double>& d, const std::vector<double>& y,
               std::size_t batch, std::size_t width, Matrix& g) {
    for (std::size_t i = 0; i < width; ++i) {
        double* gr = g.row(i);
        for (std::size_t b = 0; b < batch; ++b) {
            const double c = d[b * width + i];
            if (c == 0.0) continue;
            const double* yr = &y[b * width];
            for (std::size_t k = 0; k < width; ++k) gr[k] += c * yr[k];
        }
    }
}

}  // namespace

void forward_batch(const InterpretableMLP& mlp, BatchWorkspace& ws, std::size_t batch) {
    const NetworkConfig& cfg = mlp.config();
    if (batch > ws.capacity) throw UsageError("forward_batch: batch exceeds capacity");
    const std::size_t w = mlp.width();
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        gemm_forward(mlp.weight(l), ws.y[l], batch, w, ws.h[l]);
        const auto& h = ws.h[l];
        auto& y = ws.y[l + 1];
        const bool head = cfg.last_layer_linear_head && l + 1 == cfg.layers;
        if (cfg.activation == Activation::hard_tanh) {
            for (std::size_t b = 0; b < batch; ++b) {
                const double* hb = &h[b * w];
                double* yb = &y[b * w];
                std::size_t i = 0;
                if (head)
                    for (; i < cfg.class_count; ++i) yb[i] = hb[i];
                for (; i < w; ++i) yb[i] = hard_tanh_scalar(hb[i]);
            }
        } else {
            for (std::size_t b = 0; b < batch; ++b) {
                const double* hb = &h[b * w];
                double* yb = &y[b * w];
                std::size_t i = 0;
                if (head)
                    for (; i < cfg.class_count; ++i) yb[i] = hb[i];
                for (; i < w; ++i) yb[i] = relu_scalar(hb[i]);
            }
        }
    }
}

void backward_batch(const InterpretableMLP& mlp, const BatchWorkspace& ws,
                    std::vector<double>& delta, std::size_t batch, Gradients& grads) {
    const NetworkConfig& cfg = mlp.config();
    const std::size_t w = mlp.width();
    if (grads.layer.size() != cfg.layers)
        throw UsageError("backward_batch: gradient shape mismatch");
    std::vector<double> next(delta.size());
    for (std::size_t li = cfg.layers; li >= 1; --li) {
        const auto& h = ws.h[li - 1];
        const bool head = cfg.last_layer_linear_head && li == cfg.layers;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* hb = &h[b * w];
            double* db = &delta[b * w];
            for (std::size_t i = 0; i < w; ++i) {
                double dphi = (head && i < cfg.class_count)
                                  ? 1.0
                                  : (cfg.activation == Activation::hard_tanh
                                         ? hard_tanh_deriv_scalar(hb[i])
                                         : relu_deriv_scalar(hb[i]));
                db[i] *= dphi;
            }
        }
        gemm_grad(delta, ws.y[li - 1], batch, w, grads.layer[li - 1]);
        if (li > 1) {
            gemm_backprop(mlp.weight(li - 1), delta, batch, w, next);
            std::swap(delta, next);
        }
    }
}

}  // namespace iimlp
