#pragma once

#include <fstream>

#include "axnn/tensor.hpp"

namespace axnn {

struct Dataset {
    Tensor images;  // [N, C, H, W] in [0, 1]
    std::vector<int> labels;
    int num_classes = 0;
    std::string split;

    int64_t size() const { return images.empty() ? 0 : images.shape[0]; }

    void validate() const {
        if (images.rank() != 4) throw std::invalid_argument("Dataset: images must be [N,C,H,W]");
        if (static_cast<int64_t>(labels.size()) != images.shape[0])
            throw std::invalid_argument("Dataset: label count mismatch");
        for (int y : labels)
            if (y < 0 || y >= num_classes) throw std::invalid_argument("Dataset: label out of range");
        for (float v : images.data)
            if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("Dataset: pixel outside [0,1]");
    }

    Tensor batch_images(const std::vector<int64_t>& idx) const {
        const int64_t c = images.shape[1], h = images.shape[2], w = images.shape[3];
        Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), c, h, w});
        const int64_t stride = c * h * w;
        for (size_t i = 0; i < idx.size(); ++i)
            std::copy_n(images.data.begin() + idx[i] * stride, stride, out.data.begin() + static_cast<int64_t>(i) * stride);
        return out;
    }

    std::vector<int> batch_labels(const std::vector<int64_t>& idx) const {
        std::vector<int> out(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) out[i] = labels[static_cast<size_t>(idx[i])];
        return out;
    }
};

namespace detail {

inline uint32_t read_be_u32(std::istream& is, const std::string& path, long offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("IDX parse error in " + path + ": truncated at byte offset " + std::to_string(offset));
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace detail

// MNIST-style IDX pair: big-endian magic 0x00000803 (images) / 0x00000801
// (labels); u8 pixels scaled by 1/255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("load_idx: cannot open " + images_path);
    const uint32_t img_magic = detail::read_be_u32(imgs, images_path, 0);
    if (img_magic != 0x00000803)
        throw std::runtime_error("load_idx: bad image magic in " + images_path + " at byte offset 0");
    const uint32_t n = detail::read_be_u32(imgs, images_path, 4);
    const uint32_t rows = detail::read_be_u32(imgs, images_path, 8);
    const uint32_t cols = detail::read_be_u32(imgs, images_path, 12);
    const int64_t expected = static_cast<int64_t>(n) * rows * cols;
    std::vector<unsigned char> pix(static_cast<size_t>(expected));
    imgs.read(reinterpret_cast<char*>(pix.data()), expected);
    if (imgs.gcount() != expected)
        throw std::runtime_error("load_idx: truncated image file " + images_path + ": expected " +
                                 std::to_string(expected + 16) + " bytes, got " + std::to_string(imgs.gcount() + 16));

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("load_idx: cannot open " + labels_path);
    const uint32_t lab_magic = detail::read_be_u32(labs, labels_path, 0);
    if (lab_magic != 0x00000801)
        throw std::runtime_error("load_idx: bad label magic in " + labels_path + " at byte offset 0");
    const uint32_t ln = detail::read_be_u32(labs, labels_path, 4);
    if (ln != n) throw std::runtime_error("load_idx: image/label count mismatch");
    std::vector<unsigned char> raw_labels(ln);
    labs.read(reinterpret_cast<char*>(raw_labels.data()), ln);
    if (labs.gcount() != static_cast<std::streamsize>(ln))
        throw std::runtime_error("load_idx: truncated label file " + labels_path + ": expected " +
                                 std::to_string(ln + 8) + " bytes, got " + std::to_string(labs.gcount() + 8));

    Dataset ds;
    ds.images = Tensor::zeros({n, 1, rows, cols});
    for (int64_t i = 0; i < expected; ++i) ds.images[i] = static_cast<float>(pix[static_cast<size_t>(i)]) / 255.0f;
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    ds.num_classes = 10;
    ds.split = "idx";
    ds.validate();
    return ds;
}

// CIFAR-10 binary batch: records of 3073 bytes, 1 label + 3072 channel-planar
// RGB pixels.
inline Dataset load_cifar_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("load_cifar_bin: cannot open " + path);
    const int64_t size = is.tellg();
    if (size % 3073 != 0)
        throw std::runtime_error("load_cifar_bin: file size " + std::to_string(size) +
                                 " is not a multiple of the 3073-byte record");
    const int64_t n = size / 3073;
    is.seekg(0);
    Dataset ds;
    ds.images = Tensor::zeros({n, 3, 32, 32});
    ds.labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> rec(3073);
    for (int64_t i = 0; i < n; ++i) {
        if (!is.read(reinterpret_cast<char*>(rec.data()), 3073))
            throw std::runtime_error("load_cifar_bin: truncated record " + std::to_string(i));
        if (rec[0] > 9) throw std::runtime_error("load_cifar_bin: label out of range in record " + std::to_string(i));
        ds.labels[static_cast<size_t>(i)] = rec[0];
        for (int64_t p = 0; p < 3072; ++p)
            ds.images[i * 3072 + p] = static_cast<float>(rec[static_cast<size_t>(p + 1)]) / 255.0f;
    }
    ds.num_classes = 10;
    ds.split = "cifar";
    ds.validate();
    return ds;
}

// CI-speed dataset: per-class base pattern plus uniform pixel noise,
// linearly separable by construction. Base patterns are a fixed function of
// the class index so differently seeded train/eval splits share the task.
inline Dataset synth_dataset(int classes, int64_t n, uint64_t seed, int64_t channels = 1, int64_t height = 12,
                             int64_t width = 12, float noise = 0.3f) {
    if (classes < 2 || n < classes) throw std::invalid_argument("synth_dataset: need n >= classes >= 2");
    Dataset ds;
    ds.images = Tensor::zeros({n, channels, height, width});
    ds.labels.resize(static_cast<size_t>(n));
    ds.num_classes = classes;
    ds.split = "synth";
    const int64_t chw = channels * height * width;

    std::vector<Tensor> base(static_cast<size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        Rng rng(mix(0xBA5Eull, static_cast<uint64_t>(c)));
        base[static_cast<size_t>(c)] = Tensor::uniform({channels, height, width}, 0.15f, 0.85f, rng);
    }
    Rng noise_rng(mix(seed, 0x0153ull, 0xD157ull));
    for (int64_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % classes);
        ds.labels[static_cast<size_t>(i)] = c;
        const Tensor& b = base[static_cast<size_t>(c)];
        for (int64_t p = 0; p < chw; ++p) {
            const float v = b[p] + noise_rng.uniform(-noise, noise);
            ds.images[i * chw + p] = std::min(1.0f, std::max(0.0f, v));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace axnn
