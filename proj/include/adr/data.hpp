#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "adr/rng.hpp"
#include "adr/tensor.hpp"

namespace adr {

/// Labeled image set with values in [0, 1], stored N x C x H x W.
struct Dataset {
    std::int64_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> images; // n*c*h*w, row-major
    std::vector<int> labels;    // may be empty for unlabeled data
    std::int64_t num_classes = 0;
    std::string name;

    std::int64_t size() const { return n; }
    std::int64_t image_elems() const { return c * h * w; }

    const double* image_ptr(std::int64_t i) const { return images.data() + i * image_elems(); }

    Tensor image(std::int64_t i) const {
        return Tensor({1, c, h, w},
                      std::vector<double>(image_ptr(i), image_ptr(i) + image_elems()));
    }

    /// Gather rows by index into a batch tensor plus aligned labels.
    Tensor batch(const std::vector<std::int64_t>& idx, std::vector<int>* out_labels = nullptr) const {
        Tensor t = Tensor::zeros({static_cast<std::int64_t>(idx.size()), c, h, w});
        if (out_labels) out_labels->clear();
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::copy(image_ptr(idx[r]), image_ptr(idx[r]) + image_elems(),
                      t.data.data() + static_cast<std::int64_t>(r) * image_elems());
            if (out_labels) out_labels->push_back(labels[static_cast<std::size_t>(idx[r])]);
        }
        return t;
    }

    void validate() const {
        if (n != static_cast<std::int64_t>(labels.size()) && !labels.empty())
            throw parse_error("dataset: label count does not match image count");
        for (int l : labels)
            if (l < 0 || l >= num_classes)
                throw parse_error("dataset: label " + std::to_string(l) + " out of range");
        for (double v : images)
            if (v < 0.0 || v > 1.0)
                throw parse_error("dataset: image value outside [0, 1]");
    }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw parse_error(path + ": truncated header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

} // namespace detail

/// MNIST IDX pair: big-endian headers, image magic 0x00000803, label magic
/// 0x00000801, pixel bytes scaled to [0, 1] by /255.
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imf(images_path, std::ios::binary);
    if (!imf) throw parse_error(images_path + ": cannot open");
    const std::uint32_t im_magic = detail::read_be32(imf, images_path);
    if (im_magic != 0x00000803u)
        throw parse_error(images_path + ": bad image magic " + std::to_string(im_magic));
    const std::uint32_t n = detail::read_be32(imf, images_path);
    const std::uint32_t rows = detail::read_be32(imf, images_path);
    const std::uint32_t cols = detail::read_be32(imf, images_path);
    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * rows * cols);
    if (!imf.read(reinterpret_cast<char*>(pixels.data()),
                  static_cast<std::streamsize>(pixels.size())))
        throw parse_error(images_path + ": truncated image payload");

    std::ifstream lbf(labels_path, std::ios::binary);
    if (!lbf) throw parse_error(labels_path + ": cannot open");
    const std::uint32_t lb_magic = detail::read_be32(lbf, labels_path);
    if (lb_magic != 0x00000801u)
        throw parse_error(labels_path + ": bad label magic " + std::to_string(lb_magic));
    const std::uint32_t ln = detail::read_be32(lbf, labels_path);
    if (ln != n)
        throw parse_error(labels_path + ": label count " + std::to_string(ln) +
                          " does not match image count " + std::to_string(n));
    std::vector<unsigned char> raw_labels(ln);
    if (!lbf.read(reinterpret_cast<char*>(raw_labels.data()),
                  static_cast<std::streamsize>(raw_labels.size())))
        throw parse_error(labels_path + ": truncated label payload");

    Dataset ds;
    ds.n = n;
    ds.c = 1;
    ds.h = rows;
    ds.w = cols;
    ds.num_classes = 10;
    ds.name = "mnist";
    ds.images.resize(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) ds.images[i] = pixels[i] / 255.0;
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    for (int l : ds.labels)
        if (l > 9) throw parse_error(labels_path + ": label byte " + std::to_string(l) + " > 9");
    return ds;
}

/// CIFAR-10 binary batches: 3073-byte records of 1 label byte plus 3072
/// channel-major RGB bytes, 3 x 32 x 32 each.
inline Dataset load_cifar10_bin(const std::vector<std::string>& paths) {
    constexpr std::int64_t record = 3073;
    Dataset ds;
    ds.c = 3;
    ds.h = 32;
    ds.w = 32;
    ds.num_classes = 10;
    ds.name = "cifar10";
    for (const auto& path : paths) {
        std::ifstream f(path, std::ios::binary | std::ios::ate);
        if (!f) throw parse_error(path + ": cannot open");
        const std::int64_t len = static_cast<std::int64_t>(f.tellg());
        if (len % record != 0)
            throw parse_error(path + ": length " + std::to_string(len) +
                              " is not a multiple of 3073");
        f.seekg(0);
        std::vector<unsigned char> buf(static_cast<std::size_t>(len));
        if (!f.read(reinterpret_cast<char*>(buf.data()), len))
            throw parse_error(path + ": truncated payload");
        const std::int64_t count = len / record;
        for (std::int64_t r = 0; r < count; ++r) {
            const unsigned char* rec = buf.data() + r * record;
            if (rec[0] > 9)
                throw parse_error(path + ": label byte " + std::to_string(rec[0]) +
                                  " > 9 in record " + std::to_string(r));
            ds.labels.push_back(rec[0]);
            for (std::int64_t j = 0; j < 3072; ++j) ds.images.push_back(rec[1 + j] / 255.0);
        }
        ds.n += count;
    }
    return ds;
}

/// Procedural Gaussian-blob dataset: each class gets a template drawn once,
/// every image is template + sigma*noise clamped to [0, 1]. Linearly
/// separable at the default sigma.
inline Dataset synth_blobs(std::uint64_t seed, std::int64_t num_classes,
                           std::int64_t n_per_class, std::int64_t c, std::int64_t h,
                           std::int64_t w, double sigma = 0.1) {
    if (num_classes < 2 || n_per_class < 1)
        throw parameter_error("synth_blobs: need >= 2 classes and >= 1 example per class");
    Dataset ds;
    ds.c = c;
    ds.h = h;
    ds.w = w;
    ds.num_classes = num_classes;
    ds.name = "blobs";
    const std::int64_t d = c * h * w;
    std::vector<std::vector<double>> templates(static_cast<std::size_t>(num_classes));
    for (std::int64_t cls = 0; cls < num_classes; ++cls) {
        Rng rng = Rng::substream(seed, "blobs-template", static_cast<std::uint64_t>(cls));
        auto& t = templates[static_cast<std::size_t>(cls)];
        t.resize(static_cast<std::size_t>(d));
        for (auto& v : t) v = rng.uniform(0.25, 0.75);
    }
    Rng noise = Rng::substream(seed, "blobs-noise", 0);
    for (std::int64_t cls = 0; cls < num_classes; ++cls)
        for (std::int64_t i = 0; i < n_per_class; ++i) {
            for (std::int64_t j = 0; j < d; ++j) {
                double v = templates[static_cast<std::size_t>(cls)][static_cast<std::size_t>(j)] +
                           sigma * noise.normal();
                ds.images.push_back(std::clamp(v, 0.0, 1.0));
            }
            ds.labels.push_back(static_cast<int>(cls));
            ++ds.n;
        }
    return ds;
}

/// Seeded, stratified train/validation split.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction,
                                         std::uint64_t seed) {
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
        throw parameter_error("split: val_fraction must be in (0, 1)");
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::int64_t i = 0; i < ds.n; ++i)
        by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    std::vector<std::int64_t> train_idx, val_idx;
    for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
        auto& idx = by_class[cls];
        Rng rng = Rng::substream(seed, "split", static_cast<std::uint64_t>(cls));
        rng.shuffle(idx);
        const std::int64_t take =
            std::llround(val_fraction * static_cast<double>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (static_cast<std::int64_t>(i) < take ? val_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    auto subset = [&ds](const std::vector<std::int64_t>& idx, const char* tag) {
        Dataset out;
        out.c = ds.c;
        out.h = ds.h;
        out.w = ds.w;
        out.num_classes = ds.num_classes;
        out.name = ds.name + tag;
        for (auto i : idx) {
            out.images.insert(out.images.end(), ds.image_ptr(i), ds.image_ptr(i) + ds.image_elems());
            out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
            ++out.n;
        }
        return out;
    };
    return {subset(train_idx, "-train"), subset(val_idx, "-val")};
}

/// Mirror image columns in place (C x H x W).
inline void flip_horizontal(double* img, std::int64_t c, std::int64_t h, std::int64_t w) {
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t row = 0; row < h; ++row) {
            double* p = img + (ch * h + row) * w;
            std::reverse(p, p + w);
        }
}

/// Random crop with zero padding plus random horizontal flip. Identity when
/// pad == 0 and flip_prob == 0 (no random draws consumed in that case).
inline Tensor augment(const Tensor& batch, std::int64_t pad, double flip_prob, Rng& rng) {
    if (pad < 0) throw parameter_error("augment: pad must be >= 0");
    if (batch.shape.size() != 4)
        throw dimension_error("augment: expected NCHW batch, got " + shape_str(batch.shape));
    if (pad == 0 && flip_prob == 0.0) return batch;
    const std::int64_t n = batch.shape[0], c = batch.shape[1], h = batch.shape[2],
                       w = batch.shape[3];
    Tensor out = Tensor::zeros(batch.shape);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t oy = pad > 0 ? static_cast<std::int64_t>(rng.below(2 * pad + 1)) : 0;
        const std::int64_t ox = pad > 0 ? static_cast<std::int64_t>(rng.below(2 * pad + 1)) : 0;
        const bool flip = flip_prob > 0.0 && rng.uniform() < flip_prob;
        const double* src = batch.data.data() + i * c * h * w;
        double* dst = out.data.data() + i * c * h * w;
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    // crop window starts at (oy, ox) in the padded image
                    const std::int64_t sy = y + oy - pad;
                    const std::int64_t sx = x + ox - pad;
                    const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
                    dst[(ch * h + y) * w + x] = inside ? src[(ch * h + sy) * w + sx] : 0.0;
                }
        if (flip) flip_horizontal(dst, c, h, w);
    }
    return out;
}

} // namespace adr
