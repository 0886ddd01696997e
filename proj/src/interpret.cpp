#include "iimlp/interpret.hpp"

#include <algorithm>
#include <cmath>

#include "iimlp/io.hpp"

namespace iimlp {

ContributionMap contribution_map(const LayerTrace& trace, std::size_t layer) {
    if (layer < 1 || layer > trace.layers())
        throw UsageError("contribution_map: layer " + std::to_string(layer) +
                         " outside [1, " + std::to_string(trace.layers()) + "]");
    Vector xl = trace.x(layer);
    Vector x0 = trace.x(0);
    ContributionMap m;
    m.layer = layer;
    m.values.resize(xl.size());
    for (std::size_t i = 0; i < xl.size(); ++i) m.values[i] = xl[i] - x0[i];
    return m;
}

LayerAccuracyCurve layerwise_accuracy(const InterpretableMLP& mlp, const Dataset& dataset) {
    const std::size_t W = mlp.width(), C = mlp.config().class_count, L = mlp.layers();
    if (dataset.data_width != mlp.config().data_width)
        throw UsageError("layerwise_accuracy: dataset width mismatch");
    LayerAccuracyCurve curve;
    curve.accuracy.assign(L + 1, 0.0);
    if (dataset.size() == 0) return curve;

    std::vector<std::size_t> correct(L + 1, 0);
    const std::size_t chunk = 64;
    BatchWorkspace ws;
    ws.init(L, W, chunk);
    for (std::size_t s0 = 0; s0 < dataset.size(); s0 += chunk) {
        const std::size_t b = std::min(chunk, dataset.size() - s0);
        std::fill(ws.y[0].begin(), ws.y[0].begin() + b * W, 0.0);
        for (std::size_t i = 0; i < b; ++i)
            std::copy(dataset.samples[s0 + i].begin(), dataset.samples[s0 + i].end(),
                      ws.y[0].begin() + i * W + C);
        forward_batch(mlp, ws, b);
        for (std::size_t l = 0; l <= L; ++l) {
            const auto& y = ws.y[l];
            for (std::size_t i = 0; i < b; ++i) {
                const double* z = &y[i * W];
                std::size_t best = 0;
                for (std::size_t c = 1; c < C; ++c)
                    if (z[c] > z[best]) best = c;
                if (best == dataset.labels[s0 + i]) ++correct[l];
            }
        }
    }
    for (std::size_t l = 0; l <= L; ++l)
        curve.accuracy[l] = double(correct[l]) / double(dataset.size());
    return curve;
}

Matrix cumulative_w12(const InterpretableMLP& mlp, std::size_t layer) {
    if (layer < 1 || layer > mlp.layers())
        throw UsageError("cumulative_w12: layer out of range");
    const std::size_t C = mlp.config().class_count, N = mlp.config().data_width;
    Matrix sum(C, N, 0.0);
    for (std::size_t l = 0; l < layer; ++l) {
        const Matrix& w = mlp.weight(l);
        for (std::size_t i = 0; i < C; ++i) {
            const double* r = w.row(i) + C;
            double* s = sum.row(i);
            for (std::size_t j = 0; j < N; ++j) s[j] += r[j];
        }
    }
    return sum;
}

namespace {

// correlation with the zero-variance convention r = 0
double correlate(const double* a, const double* b, std::size_t n, CorrelationKind kind) {
    if (kind == CorrelationKind::cosine) {
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        if (aa == 0.0 || bb == 0.0) return 0.0;
        return ab / std::sqrt(aa * bb);
    }
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double cab = 0, caa = 0, cbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        cab += da * db;
        caa += da * da;
        cbb += db * db;
    }
    if (caa == 0.0 || cbb == 0.0) return 0.0;
    return cab / std::sqrt(caa * cbb);
}

}  // namespace

DiscriminabilityTable discriminability(const InterpretableMLP& mlp, const Dataset& dataset,
                                       std::size_t sample_cap, CorrelationKind kind) {
    const std::size_t W = mlp.width(), C = mlp.config().class_count, L = mlp.layers();
    const std::size_t N = mlp.config().data_width;
    if (dataset.data_width != N)
        throw UsageError("discriminability: dataset width mismatch");

    const std::size_t n_eval =
        sample_cap > 0 ? std::min(sample_cap, dataset.size()) : dataset.size();

    // cumulative W12 rows per layer, built incrementally
    std::vector<std::vector<double>> cum(L, std::vector<double>(C * N));
    {
        std::vector<double> acc(C * N, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            const Matrix& w = mlp.weight(l);
            for (std::size_t i = 0; i < C; ++i) {
                const double* r = w.row(i) + C;
                for (std::size_t j = 0; j < N; ++j) acc[i * N + j] += r[j];
            }
            cum[l] = acc;
        }
    }

    DiscriminabilityTable table;
    table.layers = L;
    table.classes = C;
    table.r.assign(L * C * C, 0.0);
    std::vector<std::size_t> class_counts(C, 0);
    for (std::size_t s = 0; s < n_eval; ++s)
        if (dataset.labels[s] < C) ++class_counts[dataset.labels[s]];

    const std::size_t chunk = 64;
    BatchWorkspace ws;
    ws.init(L, W, chunk);
    Vector map(N);
    for (std::size_t s0 = 0; s0 < n_eval; s0 += chunk) {
        const std::size_t b = std::min(chunk, n_eval - s0);
        std::fill(ws.y[0].begin(), ws.y[0].begin() + b * W, 0.0);
        for (std::size_t i = 0; i < b; ++i)
            std::copy(dataset.samples[s0 + i].begin(), dataset.samples[s0 + i].end(),
                      ws.y[0].begin() + i * W + C);
        forward_batch(mlp, ws, b);
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t c = dataset.labels[s0 + i];
            if (c >= C) continue;
            const double* x0 = &ws.y[0][i * W + C];
            for (std::size_t l = 1; l <= L; ++l) {
                const double* xl = &ws.y[l][i * W + C];
                for (std::size_t j = 0; j < N; ++j) map[j] = xl[j] - x0[j];
                for (std::size_t cp = 0; cp < C; ++cp)
                    table.at(l, c, cp) +=
                        correlate(map.data(), &cum[l - 1][cp * N], N, kind);
            }
        }
    }
    for (std::size_t l = 1; l <= L; ++l)
        for (std::size_t c = 0; c < C; ++c)
            if (class_counts[c] > 0)
                for (std::size_t cp = 0; cp < C; ++cp)
                    table.at(l, c, cp) /= double(class_counts[c]);
    return table;
}

namespace {

std::size_t exact_sqrt(std::size_t n) {
    std::size_t r = std::size_t(std::llround(std::sqrt(double(n))));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r * r == n ? r : 0;
}

std::vector<unsigned char> scale_to_bytes(const Vector& v) {
    double lo = v[0], hi = v[0];
    for (double e : v) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    std::vector<unsigned char> out(v.size());
    if (hi == lo) {
        std::fill(out.begin(), out.end(), (unsigned char)128);
        return out;
    }
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = (unsigned char)std::llround((v[i] - lo) * scale);
    return out;
}

}  // namespace

void export_map_image(const ContributionMap& map, MapLayout layout,
                      const std::string& path) {
    const std::size_t n = map.values.size();
    if (n == 0) throw UsageError("export_map_image: empty map");
    std::vector<unsigned char> bytes = scale_to_bytes(map.values);
    std::string buf;
    if (layout == MapLayout::gray_sqrt) {
        std::size_t side = exact_sqrt(n);
        if (side == 0)
            throw UsageError("export_map_image: gray_sqrt needs a square length, got " +
                             std::to_string(n));
        buf = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
        buf.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    } else {
        if (n % 3 != 0)
            throw UsageError("export_map_image: rgb_planes needs N = 3k^2, got " +
                             std::to_string(n));
        std::size_t plane = n / 3;
        std::size_t side = exact_sqrt(plane);
        if (side == 0)
            throw UsageError("export_map_image: rgb_planes needs N = 3k^2, got " +
                             std::to_string(n));
        buf = "P6\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
        buf.reserve(buf.size() + n);
        for (std::size_t p = 0; p < plane; ++p) {
            buf.push_back(char(bytes[p]));              // R plane
            buf.push_back(char(bytes[plane + p]));      // G plane
            buf.push_back(char(bytes[2 * plane + p]));  // B plane
        }
    }
    write_file_bytes(path, buf);
}

std::vector<Vector> likelihood_series(const LayerTrace& trace) {
    std::vector<Vector> out;
    out.reserve(trace.layers() + 1);
    for (std::size_t l = 0; l <= trace.layers(); ++l) out.push_back(trace.z(l));
    return out;
}

void write_layer_accuracy_csv(const LayerAccuracyCurve& curve, const std::string& path) {
    CsvWriter csv(path, "layer,accuracy");
    for (std::size_t l = 0; l < curve.accuracy.size(); ++l)
        csv.row({std::to_string(l), format_double(curve.accuracy[l])});
    csv.flush();
}

void write_discriminability_csv(const DiscriminabilityTable& table, const std::string& path) {
    CsvWriter csv(path, "layer,true_class,probe_class,r");
    for (std::size_t l = 1; l <= table.layers; ++l)
        for (std::size_t c = 0; c < table.classes; ++c)
            for (std::size_t cp = 0; cp < table.classes; ++cp)
                csv.row({std::to_string(l), std::to_string(c), std::to_string(cp),
                         format_double(table.at(l, c, cp))});
    csv.flush();
}

void write_likelihood_csv(const std::vector<Vector>& series, const std::string& path) {
    CsvWriter csv(path, "layer,class,value");
    for (std::size_t l = 0; l < series.size(); ++l)
        for (std::size_t c = 0; c < series[l].size(); ++c)
            csv.row({std::to_string(l), std::to_string(c), format_double(series[l][c])});
    csv.flush();
}

}  // namespace iimlp
