#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "iimlp/interpret.hpp"
#include "iimlp/io.hpp"
#include "iimlp/trainer.hpp"

using namespace iimlp;

namespace {

NetworkConfig cfg_of(std::size_t L, std::size_t C, std::size_t N, double sigma = 1.0) {
    NetworkConfig cfg;
    cfg.layers = L;
    cfg.class_count = C;
    cfg.data_width = N;
    cfg.sigma = sigma;
    cfg.q_star = 0.29;
    return cfg;
}

// minimal reference PGM/PPM decoder for the round-trip fixture
struct PnmImage {
    int kind = 0;  // 5 or 6
    std::size_t w = 0, h = 0;
    std::vector<unsigned char> bytes;
};

PnmImage decode_pnm(const std::string& path) {
    std::string raw = read_file_bytes(path);
    PnmImage img;
    std::istringstream in(raw);
    std::string magic;
    in >> magic;
    img.kind = magic == "P5" ? 5 : (magic == "P6" ? 6 : 0);
    std::size_t maxval = 0;
    in >> img.w >> img.h >> maxval;
    in.get();  // single whitespace after maxval
    std::size_t need = img.w * img.h * (img.kind == 6 ? 3 : 1);
    std::size_t off = std::size_t(in.tellg());
    img.bytes.assign(raw.begin() + off, raw.begin() + off + need);
    return img;
}

}  // namespace

TEST_CASE("contribution_map") {
    // untrained sigma=1 identity net with in-range input: zero at every layer
    NetworkConfig cfg = cfg_of(7, 2, 4);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);
    Vector x0{0.4, -0.3, 0.8, -0.9};
    LayerTrace t = forward(mlp, pad_input(x0, 2));
    for (std::size_t l = 1; l <= 7; ++l) {
        ContributionMap m = contribution_map(t, l);
        for (double v : m.values) CHECK(v == 0.0);
    }

    // saturated coordinate: clamp difference
    Vector xs{0.4, 3.0, 0.8, -0.9};
    LayerTrace ts = forward(mlp, pad_input(xs, 2));
    ContributionMap ms = contribution_map(ts, 3);
    CHECK(ms.values[0] == 0.0);
    CHECK(ms.values[1] == doctest::Approx(1.0 - 3.0).epsilon(1e-15));
    CHECK(ms.values[2] == 0.0);

    // independent recomputation from a fresh forward pass
    SeededRng rng(5);
    InterpretableMLP noisy = InterpretableMLP::init_identity(cfg);
    for (std::size_t l = 0; l < 7; ++l) {
        Vector g = gauss(rng, 0.0, 0.01, 36);
        for (std::size_t i = 0; i < 36; ++i) noisy.weight(l).data()[i] += g[i];
    }
    Vector u = pad_input(x0, 2);
    LayerTrace tn = forward(noisy, u);
    ContributionMap mn = contribution_map(tn, 5);
    LayerTrace fresh = forward(noisy, u);
    Vector x5 = fresh.x(5), xin = fresh.x(0);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(mn.values[i] == doctest::Approx(x5[i] - xin[i]).epsilon(1e-15));

    CHECK_THROWS_AS(contribution_map(t, 0), UsageError);
    CHECK_THROWS_AS(contribution_map(t, 8), UsageError);
}

TEST_CASE("layerwise_accuracy: endpoints") {
    SeededRng rng(9);
    Dataset ds = synth_blobs(3, 12, 30, 5.0, rng);
    ds = normalize(ds, NormalizationSpec{0.29});
    NetworkConfig cfg = cfg_of(5, 3, 12, 1.0 + 8e-4);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);

    // train a little so the curve is not flat
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 10;
    tc.learning_rate = 0.02;
    train(mlp, ds, Dataset{}, tc);

    LayerAccuracyCurve curve = layerwise_accuracy(mlp, ds);
    REQUIRE(curve.accuracy.size() == 6);
    double freq0 = 0.0;
    for (auto l : ds.labels) freq0 += (l == 0) ? 1.0 : 0.0;
    freq0 /= double(ds.size());
    CHECK(curve.accuracy[0] == doctest::Approx(freq0).epsilon(1e-15));
    CHECK(curve.accuracy[5] == doctest::Approx(evaluate(mlp, ds)).epsilon(1e-15));
}

TEST_CASE("cumulative_w12") {
    NetworkConfig cfg = cfg_of(4, 2, 3);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);
    for (std::size_t l = 1; l <= 4; ++l) {
        Matrix c = cumulative_w12(mlp, l);
        CHECK(c.rows() == 2);
        CHECK(c.cols() == 3);
        for (double v : c.data()) CHECK(v == 0.0);
    }

    // all-ones W12 in layer 1 only
    auto b0 = mlp.blocks(0);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) b0.w12.at(i, j) = 1.0;
    for (std::size_t l = 1; l <= 4; ++l) {
        Matrix c = cumulative_w12(mlp, l);
        for (double v : c.data()) CHECK(v == 1.0);
    }

    // random blocks against an independent per-layer summation oracle,
    // plus the difference identity cum(l) - cum(l-1) = W12(l)
    SeededRng rng(12);
    for (std::size_t l = 0; l < 4; ++l) {
        auto blk = mlp.blocks(l);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) blk.w12.at(i, j) = gauss(rng, 0.0, 1.0, 1)[0];
    }
    for (std::size_t l = 1; l <= 4; ++l) {
        Matrix c = cumulative_w12(mlp, l);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double expect = 0.0;
                for (std::size_t k = 0; k < l; ++k) expect += mlp.weight(k)(i, 2 + j);
                CHECK(c(i, j) == doctest::Approx(expect).epsilon(1e-15));
            }
        if (l > 1) {
            Matrix prev = cumulative_w12(mlp, l - 1);
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t j = 0; j < 3; ++j)
                    CHECK(c(i, j) - prev(i, j) ==
                          doctest::Approx(mlp.weight(l - 1)(i, 2 + j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("discriminability: untrained net gives the all-zero table") {
    SeededRng rng(4);
    Dataset ds = synth_blobs(2, 8, 10, 3.0, rng);
    ds = normalize(ds, NormalizationSpec{0.29});
    NetworkConfig cfg = cfg_of(3, 2, 8);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);
    DiscriminabilityTable t = discriminability(mlp, ds);
    for (double v : t.r) CHECK(v == 0.0);
}

TEST_CASE("discriminability: constructed fixture reaches r = 1 on the diagonal") {
    // One layer, linear region. W12 row 0 = target pattern r; W22 = I + E with
    // E x0 = r for the single class-0 sample, so x^1 - x^0 equals r exactly.
    const std::size_t C = 2, N = 4;
    NetworkConfig cfg = cfg_of(1, C, N);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);
    Vector x0{0.1, -0.05, 0.08, 0.02};
    Vector target{0.02, 0.05, -0.03, 0.01};
    double norm2 = dot(x0, x0);
    auto blk = mlp.blocks(0);
    for (std::size_t j = 0; j < N; ++j) blk.w12.at(0, j) = target[j];
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            blk.w22.at(i, j) += target[i] * x0[j] / norm2;  // E = r x0^T / |x0|^2

    Dataset ds;
    ds.data_width = N;
    ds.class_count = C;
    ds.samples = {x0};
    ds.labels = {0};
    DiscriminabilityTable t = discriminability(mlp, ds);
    CHECK(t.at(1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    // bounded in [-1, 1]
    for (double v : t.r) {
        CHECK(v <= 1.0 + 1e-12);
        CHECK(v >= -1.0 - 1e-12);
    }

    // cosine flavor agrees on this constructed case up to centering effects
    DiscriminabilityTable tc = discriminability(mlp, ds, 0, CorrelationKind::cosine);
    CHECK(tc.at(1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("discriminability reproducibility") {
    SeededRng rng(14);
    Dataset ds = synth_blobs(3, 9, 12, 4.0, rng);
    ds = normalize(ds, NormalizationSpec{0.29});
    NetworkConfig cfg = cfg_of(4, 3, 9, 1.0 + 8e-4);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);
    TrainConfig tcfg;
    tcfg.epochs = 8;
    tcfg.batch_size = 6;
    tcfg.learning_rate = 0.02;
    train(mlp, ds, Dataset{}, tcfg);
    DiscriminabilityTable a = discriminability(mlp, ds, 20);
    DiscriminabilityTable b = discriminability(mlp, ds, 20);
    CHECK(a.r == b.r);
}

TEST_CASE("export_map_image: PGM scaling fixture") {
    ContributionMap m;
    m.layer = 1;
    m.values = {0.0, 1.0, 2.0, 3.0};
    export_map_image(m, MapLayout::gray_sqrt, "t_map.pgm");
    PnmImage img = decode_pnm("t_map.pgm");
    CHECK(img.kind == 5);
    CHECK(img.w == 2);
    CHECK(img.h == 2);
    REQUIRE(img.bytes.size() == 4);
    CHECK(img.bytes[0] == 0);
    CHECK(img.bytes[1] == 85);
    CHECK(img.bytes[2] == 170);
    CHECK(img.bytes[3] == 255);
    std::remove("t_map.pgm");

    // constant map renders mid-gray
    ContributionMap flat;
    flat.values = Vector(9, 0.7);
    export_map_image(flat, MapLayout::gray_sqrt, "t_flat.pgm");
    PnmImage fi = decode_pnm("t_flat.pgm");
    for (unsigned char b : fi.bytes) CHECK(b == 128);
    std::remove("t_flat.pgm");

    ContributionMap bad;
    bad.values = Vector(5, 0.0);
    CHECK_THROWS_AS(export_map_image(bad, MapLayout::gray_sqrt, "t_bad.pgm"), UsageError);
}

TEST_CASE("export_map_image: PPM plane layout fixture") {
    // N = 12 = 3 * 2^2: planes R = v[0..3], G = v[4..7], B = v[8..11]
    ContributionMap m;
    m.values = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    export_map_image(m, MapLayout::rgb_planes, "t_map.ppm");
    PnmImage img = decode_pnm("t_map.ppm");
    CHECK(img.kind == 6);
    CHECK(img.w == 2);
    CHECK(img.h == 2);
    REQUIRE(img.bytes.size() == 12);
    // pixel (0,0): bytes from values 0, 4, 8 scaled by 255/11
    auto scaled = [](double v) { return (unsigned char)std::llround(v * 255.0 / 11.0); };
    CHECK(img.bytes[0] == scaled(0));
    CHECK(img.bytes[1] == scaled(4));
    CHECK(img.bytes[2] == scaled(8));
    CHECK(img.bytes[3] == scaled(1));
    CHECK(img.bytes[4] == scaled(5));
    CHECK(img.bytes[5] == scaled(9));
    std::remove("t_map.ppm");

    ContributionMap bad;
    bad.values = Vector(15, 0.0);  // 3*5, 5 not a square
    CHECK_THROWS_AS(export_map_image(bad, MapLayout::rgb_planes, "t_bad.ppm"), UsageError);
}

TEST_CASE("likelihood_series") {
    NetworkConfig cfg = cfg_of(5, 3, 4);
    InterpretableMLP mlp = InterpretableMLP::init_identity(cfg);
    Vector x0{0.2, -0.1, 0.4, 0.3};
    LayerTrace t = forward(mlp, pad_input(x0, 3));
    auto series = likelihood_series(t);
    REQUIRE(series.size() == 6);
    for (const Vector& z : series)
        for (double v : z) CHECK(v == 0.0);  // W12 = 0 keeps z at 0 through phi(0)=0

    // trained: argmax of z^L equals the evaluated prediction
    SeededRng rng(3);
    Dataset ds = synth_blobs(3, 4, 20, 6.0, rng);
    ds = normalize(ds, NormalizationSpec{0.29});
    TrainConfig tcfg;
    tcfg.epochs = 20;
    tcfg.batch_size = 10;
    tcfg.learning_rate = 0.03;
    train(mlp, ds, Dataset{}, tcfg);
    LayerTrace tt = forward(mlp, pad_input(ds.samples[0], 3));
    auto s2 = likelihood_series(tt);
    Vector zl = s2.back();
    std::size_t best = 0;
    for (std::size_t c = 1; c < zl.size(); ++c)
        if (zl[c] > zl[best]) best = c;
    Dataset single;
    single.data_width = 4;
    single.class_count = 3;
    single.samples = {ds.samples[0]};
    single.labels = {best};
    CHECK(evaluate(mlp, single) == 1.0);
}

TEST_CASE("csv writers: formats") {
    LayerAccuracyCurve curve;
    curve.accuracy = {0.1, 0.5, 1.0};
    write_layer_accuracy_csv(curve, "t_curve.csv");
    CHECK(read_file_bytes("t_curve.csv") == "layer,accuracy\n0,0.1\n1,0.5\n2,1\n");
    std::remove("t_curve.csv");

    DiscriminabilityTable table;
    table.layers = 1;
    table.classes = 2;
    table.r = {1.0, 0.0, -0.25, 0.5};
    write_discriminability_csv(table, "t_table.csv");
    CHECK(read_file_bytes("t_table.csv") ==
          "layer,true_class,probe_class,r\n1,0,0,1\n1,0,1,0\n1,1,0,-0.25\n1,1,1,0.5\n");
    std::remove("t_table.csv");
}
