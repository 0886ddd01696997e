#include "iimlp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "iimlp/io.hpp"

namespace iimlp {

void TrainConfig::validate() const {
    if (batch_size < 1) throw UsageError("TrainConfig: batch_size must be >= 1");
    // zero is allowed: the null-update run is a documented diagnostic case
    if (!(learning_rate >= 0.0)) throw UsageError("TrainConfig: learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw UsageError("TrainConfig: momentum must lie in [0, 1)");
}

std::vector<LayerDeviation> weight_deviation(const InterpretableMLP& mlp) {
    const double sigma = mlp.config().sigma;
    std::vector<LayerDeviation> out;
    out.reserve(mlp.layers());
    for (std::size_t l = 0; l < mlp.layers(); ++l) {
        const Matrix& w = mlp.weight(l);
        double mx = 0.0, fro = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) {
            const double* r = w.row(i);
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double d = r[j] - (i == j ? sigma : 0.0);
                mx = std::max(mx, std::fabs(d));
                fro += d * d;
            }
        }
        out.push_back(LayerDeviation{mx, std::sqrt(fro)});
    }
    return out;
}

namespace {

std::size_t argmax_lowest(const double* z, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (z[i] > z[best]) best = i;
    return best;
}

void check_dataset(const InterpretableMLP& mlp, const Dataset& ds, const char* who) {
    if (ds.data_width != mlp.config().data_width)
        throw UsageError(std::string(who) + ": dataset width " + std::to_string(ds.data_width) +
                         " != network N " + std::to_string(mlp.config().data_width));
    if (ds.class_count > mlp.config().class_count)
        throw UsageError(std::string(who) + ": dataset classes " +
                         std::to_string(ds.class_count) + " exceed network C " +
                         std::to_string(mlp.config().class_count));
}

}  // namespace

double evaluate(const InterpretableMLP& mlp, const Dataset& dataset) {
    check_dataset(mlp, dataset, "evaluate");
    if (dataset.size() == 0) return 0.0;
    const std::size_t W = mlp.width(), C = mlp.config().class_count;
    const std::size_t chunk = 64;
    BatchWorkspace ws;
    ws.init(mlp.layers(), W, chunk);
    std::size_t correct = 0;
    for (std::size_t s0 = 0; s0 < dataset.size(); s0 += chunk) {
        const std::size_t b = std::min(chunk, dataset.size() - s0);
        std::fill(ws.y[0].begin(), ws.y[0].begin() + b * W, 0.0);
        for (std::size_t i = 0; i < b; ++i)
            std::copy(dataset.samples[s0 + i].begin(), dataset.samples[s0 + i].end(),
                      ws.y[0].begin() + i * W + C);
        forward_batch(mlp, ws, b);
        const auto& yl = ws.y[mlp.layers()];
        for (std::size_t i = 0; i < b; ++i) {
            // softmax is monotone, so argmax over z^L decides
            if (argmax_lowest(&yl[i * W], C) == dataset.labels[s0 + i]) ++correct;
        }
    }
    return double(correct) / double(dataset.size());
}

std::vector<EpochMetrics> train(InterpretableMLP& mlp, const Dataset& train_set,
                                const Dataset& test_set, const TrainConfig& cfg,
                                const std::function<bool(const EpochMetrics&)>& on_epoch) {
    cfg.validate();
    check_dataset(mlp, train_set, "train");
    if (test_set.size() > 0) check_dataset(mlp, test_set, "train(test)");
    if (train_set.size() == 0) throw UsageError("train: empty training set");

    const std::size_t W = mlp.width(), C = mlp.config().class_count, L = mlp.layers();

    SeededRng shuffle_rng(cfg.shuffle_seed);

    // deterministic shuffle-and-take subset selection
    std::vector<std::size_t> pool(train_set.size());
    std::iota(pool.begin(), pool.end(), 0);
    if (cfg.train_subset && *cfg.train_subset < pool.size()) {
        for (std::size_t i = pool.size() - 1; i > 0; --i)
            std::swap(pool[i], pool[shuffle_rng.next_below(i + 1)]);
        pool.resize(*cfg.train_subset);
    }
    const std::size_t n_train = pool.size();

    const std::size_t B = std::min(cfg.batch_size, n_train);
    BatchWorkspace ws;
    ws.init(L, W, B);
    std::vector<double> delta(B * W);

    Gradients grads, velocity;
    grads.layer.assign(L, Matrix(W, W, 0.0));
    velocity.layer.assign(L, Matrix(W, W, 0.0));

    std::vector<EpochMetrics> metrics;
    std::string last_snapshot;

    CsvWriter csv(cfg.out_dir.empty() ? "" : cfg.out_dir + "/metrics.csv",
                  "epoch,train_loss,train_acc,test_acc,max_w_dev,frob_w_dev,wall_time_s");
    if (!cfg.out_dir.empty()) csv.flush();  // header exists even for 0-epoch runs

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        // fresh shuffle each epoch from the same deterministic stream
        for (std::size_t i = n_train - 1; i > 0; --i)
            std::swap(pool[i], pool[shuffle_rng.next_below(i + 1)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t s0 = 0; s0 < n_train; s0 += B) {
            const std::size_t b = std::min(B, n_train - s0);
            std::fill(ws.y[0].begin(), ws.y[0].begin() + b * W, 0.0);
            for (std::size_t i = 0; i < b; ++i) {
                const Vector& x = train_set.samples[pool[s0 + i]];
                std::copy(x.begin(), x.end(), ws.y[0].begin() + i * W + C);
            }
            forward_batch(mlp, ws, b);

            // softmax cross-entropy head on the class slots
            std::fill(delta.begin(), delta.begin() + b * W, 0.0);
            const auto& yl = ws.y[L];
            for (std::size_t i = 0; i < b; ++i) {
                const double* z = &yl[i * W];
                const std::size_t label = train_set.labels[pool[s0 + i]];
                double mx = z[0];
                for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, z[c]);
                double sum = 0.0;
                for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - mx);
                loss_sum += -(z[label] - mx - std::log(sum));
                if (argmax_lowest(z, C) == label) ++correct;
                for (std::size_t c = 0; c < C; ++c)
                    delta[i * W + c] = std::exp(z[c] - mx) / sum - (c == label ? 1.0 : 0.0);
            }
            if (!std::isfinite(loss_sum))
                throw DiagnosticError(
                    "train: non-finite loss in epoch " + std::to_string(epoch) +
                    (last_snapshot.empty() ? std::string("; no snapshot written yet")
                                           : "; last good checkpoint: " + last_snapshot));

            backward_batch(mlp, ws, delta, b, grads);

            // momentum update on batch-averaged gradients; grads reset in place
            const double inv_b = 1.0 / double(b);
            double clip_scale = 1.0;
            if (cfg.clip_gradients) {
                double norm2 = 0.0;
                for (std::size_t l = 0; l < L; ++l)
                    for (double g : grads.layer[l].data()) norm2 += g * g * inv_b * inv_b;
                double norm = std::sqrt(norm2);
                if (norm > cfg.clip_threshold) clip_scale = cfg.clip_threshold / norm;
            }
            for (std::size_t l = 0; l < L; ++l) {
                double* w = mlp.weight(l).data().data();
                double* v = velocity.layer[l].data().data();
                double* g = grads.layer[l].data().data();
                const std::size_t n = W * W;
                for (std::size_t j = 0; j < n; ++j) {
                    v[j] = cfg.momentum * v[j] - cfg.learning_rate * (g[j] * inv_b * clip_scale);
                    w[j] += v[j];
                    g[j] = 0.0;
                }
            }
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / double(n_train);
        m.train_accuracy = double(correct) / double(n_train);
        m.test_accuracy = test_set.size() > 0 ? evaluate(mlp, test_set) : 0.0;
        auto devs = weight_deviation(mlp);
        for (const auto& d : devs) {
            m.max_weight_deviation = std::max(m.max_weight_deviation, d.max_abs);
            m.frob_weight_deviation = std::max(m.frob_weight_deviation, d.frobenius);
        }
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        m.wall_time_s = cfg.record_timings ? elapsed : 0.0;
        metrics.push_back(m);

        std::printf("epoch %zu: loss %.4f train_acc %.4f test_acc %.4f max_dev %.4g (%.1fs)\n",
                    epoch, m.train_loss, m.train_accuracy, m.test_accuracy,
                    m.max_weight_deviation, elapsed);
        std::fflush(stdout);

        if (!cfg.out_dir.empty()) {
            csv.row({std::to_string(m.epoch), format_double(m.train_loss),
                     format_double(m.train_accuracy), format_double(m.test_accuracy),
                     format_double(m.max_weight_deviation),
                     format_double(m.frob_weight_deviation), format_double(m.wall_time_s)});
            csv.flush();
            if (cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0) {
                std::string ck = cfg.out_dir + "/ckpt_epoch" + std::to_string(epoch) + ".iimlp";
                save_checkpoint(mlp, ck);
                last_snapshot = ck;
                CsvWriter dev(cfg.out_dir + "/snapshot_epoch" + std::to_string(epoch) +
                                  "_weight_deviation.csv",
                              "layer,max_abs,frobenius");
                for (std::size_t l = 0; l < devs.size(); ++l)
                    dev.row({std::to_string(l + 1), format_double(devs[l].max_abs),
                             format_double(devs[l].frobenius)});
                dev.flush();
            }
        }

        if (on_epoch && !on_epoch(m)) break;
    }
    return metrics;
}

}  // namespace iimlp
