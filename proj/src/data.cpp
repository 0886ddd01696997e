#include "iimlp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace iimlp {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DiagnosticError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::string& buf, std::size_t off) {
    return (std::uint32_t((unsigned char)buf[off]) << 24) |
           (std::uint32_t((unsigned char)buf[off + 1]) << 16) |
           (std::uint32_t((unsigned char)buf[off + 2]) << 8) |
           std::uint32_t((unsigned char)buf[off + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string img = read_file(images_path);
    const std::string lab = read_file(labels_path);

    if (img.size() < 16)
        throw DiagnosticError("load_idx: " + images_path + ": header truncated at " +
                              std::to_string(img.size()) + " bytes (need 16)");
    std::uint32_t img_magic = be32(img, 0);
    if (img_magic != 0x00000803)
        throw DiagnosticError("load_idx: " + images_path + ": magic mismatch at offset 0: got 0x" +
                              [&] { std::ostringstream o; o << std::hex << img_magic; return o.str(); }() +
                              ", want 0x803");
    const std::size_t count = be32(img, 4);
    const std::size_t rows = be32(img, 8);
    const std::size_t cols = be32(img, 12);
    const std::size_t n = rows * cols;
    if (n == 0 || count > (img.size() - 16) / n + 1)
        throw DiagnosticError("load_idx: " + images_path + ": header claims " +
                              std::to_string(count) + " images of " + std::to_string(n) +
                              " pixels, impossible for a " + std::to_string(img.size()) +
                              "-byte file");
    if (img.size() != 16 + count * n)
        throw DiagnosticError("load_idx: " + images_path + ": payload truncated: expected " +
                              std::to_string(16 + count * n) + " bytes, got " +
                              std::to_string(img.size()));

    if (lab.size() < 8)
        throw DiagnosticError("load_idx: " + labels_path + ": header truncated");
    std::uint32_t lab_magic = be32(lab, 0);
    if (lab_magic != 0x00000801)
        throw DiagnosticError("load_idx: " + labels_path + ": magic mismatch at offset 0: got 0x" +
                              [&] { std::ostringstream o; o << std::hex << lab_magic; return o.str(); }() +
                              ", want 0x801");
    const std::size_t lab_count = be32(lab, 4);
    if (lab.size() != 8 + lab_count)
        throw DiagnosticError("load_idx: " + labels_path + ": payload truncated: expected " +
                              std::to_string(8 + lab_count) + " bytes, got " +
                              std::to_string(lab.size()));
    if (lab_count != count)
        throw DiagnosticError("load_idx: image/label count mismatch: " + std::to_string(count) +
                              " images vs " + std::to_string(lab_count) + " labels");

    Dataset ds;
    ds.data_width = n;
    ds.name = "idx";
    ds.samples.reserve(count);
    ds.labels.reserve(count);
    std::size_t max_label = 0;
    for (std::size_t s = 0; s < count; ++s) {
        Vector v(n);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(img.data()) + 16 + s * n;
        for (std::size_t i = 0; i < n; ++i) v[i] = double(p[i]) / 255.0;
        ds.samples.push_back(std::move(v));
        std::size_t label = (unsigned char)lab[8 + s];
        max_label = std::max(max_label, label);
        ds.labels.push_back(label);
    }
    ds.class_count = max_label + 1;
    return ds;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kPixels = 3072;
    Dataset ds;
    ds.data_width = kPixels;
    ds.class_count = 10;
    ds.name = "cifar10";
    for (const std::string& path : batch_paths) {
        const std::string buf = read_file(path);
        if (buf.size() % kRecord != 0)
            throw DiagnosticError("load_cifar10: " + path + ": size " +
                                  std::to_string(buf.size()) +
                                  " not a multiple of 3073; first partial record at offset " +
                                  std::to_string(buf.size() - buf.size() % kRecord));
        const std::size_t count = buf.size() / kRecord;
        for (std::size_t s = 0; s < count; ++s) {
            const unsigned char* p =
                reinterpret_cast<const unsigned char*>(buf.data()) + s * kRecord;
            std::size_t label = p[0];
            if (label > 9)
                throw DiagnosticError("load_cifar10: " + path + ": label " +
                                      std::to_string(label) + " out of range at offset " +
                                      std::to_string(s * kRecord));
            Vector v(kPixels);
            for (std::size_t i = 0; i < kPixels; ++i) v[i] = double(p[1 + i]) / 255.0;
            ds.labels.push_back(label);
            ds.samples.push_back(std::move(v));
        }
    }
    return ds;
}

Dataset synth_blobs(std::size_t class_count, std::size_t data_width, std::size_t per_class,
                    double separation, SeededRng& rng) {
    if (class_count < 2) throw UsageError("synth_blobs: need at least 2 classes");
    if (data_width < 1 || per_class < 1)
        throw UsageError("synth_blobs: empty dataset requested");

    // fixed random unit direction per class, then isotropic unit noise
    std::vector<Vector> means(class_count);
    for (std::size_t c = 0; c < class_count; ++c) {
        Vector dir = gauss(rng, 0.0, 1.0, data_width);
        double norm = std::sqrt(dot(dir, dir));
        if (norm == 0.0) norm = 1.0;
        for (double& v : dir) v = v / norm * separation;
        means[c] = std::move(dir);
    }

    Dataset ds;
    ds.data_width = data_width;
    ds.class_count = class_count;
    ds.name = "synth_blobs";
    ds.samples.reserve(class_count * per_class);
    for (std::size_t s = 0; s < per_class; ++s) {
        for (std::size_t c = 0; c < class_count; ++c) {
            Vector v = gauss(rng, 0.0, 1.0, data_width);
            for (std::size_t i = 0; i < data_width; ++i) v[i] += means[c][i];
            ds.samples.push_back(std::move(v));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

Dataset normalize(const Dataset& dataset, const NormalizationSpec& spec) {
    if (!(spec.target_variance > 0.0))
        throw UsageError("normalize: target_variance must be positive");
    std::vector<std::size_t> degenerate;
    Dataset out;
    out.data_width = dataset.data_width;
    out.class_count = dataset.class_count;
    out.name = dataset.name;
    out.labels = dataset.labels;
    out.samples.reserve(dataset.samples.size());
    const double target_sd = std::sqrt(spec.target_variance);

    for (std::size_t s = 0; s < dataset.samples.size(); ++s) {
        const Vector& in = dataset.samples[s];
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= double(in.size());
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= double(in.size());  // population variance
        if (var == 0.0) {
            degenerate.push_back(s);
            out.samples.push_back(in);
            continue;
        }
        const double scale = target_sd / std::sqrt(var);
        Vector v(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) v[i] = (in[i] - mean) * scale;
        out.samples.push_back(std::move(v));
    }
    if (!degenerate.empty()) {
        std::ostringstream msg;
        msg << "normalize: zero-variance sample(s) at indices";
        for (std::size_t i = 0; i < degenerate.size() && i < 16; ++i) msg << " " << degenerate[i];
        if (degenerate.size() > 16) msg << " ... (" << degenerate.size() << " total)";
        throw DiagnosticError(msg.str());
    }
    return out;
}

}  // namespace iimlp
