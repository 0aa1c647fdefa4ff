#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "srcnet/errors.hpp"
#include "srcnet/rng.hpp"

namespace srcnet {

struct ImageDataset {
    std::size_t n = 0, height = 0, width = 0;
    std::vector<double> pixels; // n * height * width, in [0, 1]
    std::vector<int> labels;    // n entries

    std::size_t features() const { return height * width; }

    std::span<const double> image(std::size_t i) const {
        return {pixels.data() + i * features(), features()};
    }

    void validate(int num_classes = -1) const {
        if (labels.size() != n || pixels.size() != n * features())
            data_error("dataset: inconsistent sizes (n=" + std::to_string(n) +
                       ", labels=" + std::to_string(labels.size()) + ")");
        for (double p : pixels)
            if (!(p >= 0.0 && p <= 1.0)) data_error("dataset: pixel outside [0, 1]");
        for (int l : labels) {
            if (l < 0) data_error("dataset: negative label");
            if (num_classes >= 0 && l >= num_classes)
                data_error("dataset: label " + std::to_string(l) + " >= num_classes " +
                           std::to_string(num_classes));
        }
    }

    ImageDataset subset(std::span<const std::size_t> idx) const {
        ImageDataset out;
        out.n = idx.size();
        out.height = height;
        out.width = width;
        out.pixels.reserve(out.n * features());
        out.labels.reserve(out.n);
        for (std::size_t i : idx) {
            auto img = image(i);
            out.pixels.insert(out.pixels.end(), img.begin(), img.end());
            out.labels.push_back(labels[i]);
        }
        return out;
    }
};

namespace detail {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) data_error("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                         const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) data_error("zlib init failed for " + path);
    std::vector<unsigned char> out;
    out.resize(in.size() * 4 + 1024);
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            data_error("corrupt gzip stream in " + path);
        }
        written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

// plain or gzipped file contents, sniffed by magic
inline std::vector<unsigned char> read_maybe_gz(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b)
        return gunzip(bytes, path);
    return bytes;
}

inline std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void put_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace detail

// IDX format as distributed for MNIST: big-endian magic + dims, then raw
// unsigned bytes. Gzipped files are accepted transparently.
inline ImageDataset load_idx(const std::string& images_path,
                             const std::string& labels_path) {
    auto img = detail::read_maybe_gz(images_path);
    auto lab = detail::read_maybe_gz(labels_path);

    if (img.size() < 16) data_error("truncated IDX image file: " + images_path);
    std::uint32_t magic = detail::be32(img.data());
    if (magic != detail::kIdxImagesMagic) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        data_error("bad magic " + std::string(buf) + " in " + images_path +
                   " (expected 0x00000803 for images)");
    }
    std::size_t n = detail::be32(img.data() + 4);
    std::size_t h = detail::be32(img.data() + 8);
    std::size_t w = detail::be32(img.data() + 12);
    if (img.size() != 16 + n * h * w)
        data_error("IDX image payload size mismatch in " + images_path + ": expected " +
                   std::to_string(16 + n * h * w) + " bytes, got " +
                   std::to_string(img.size()));

    if (lab.size() < 8) data_error("truncated IDX label file: " + labels_path);
    std::uint32_t lmagic = detail::be32(lab.data());
    if (lmagic != detail::kIdxLabelsMagic) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", lmagic);
        data_error("bad magic " + std::string(buf) + " in " + labels_path +
                   " (expected 0x00000801 for labels)");
    }
    std::size_t ln = detail::be32(lab.data() + 4);
    if (lab.size() != 8 + ln)
        data_error("IDX label payload size mismatch in " + labels_path);
    if (ln != n)
        data_error("image/label count mismatch: " + std::to_string(n) + " images vs " +
                   std::to_string(ln) + " labels");

    ImageDataset ds;
    ds.n = n;
    ds.height = h;
    ds.width = w;
    ds.pixels.resize(n * h * w);
    for (std::size_t i = 0; i < ds.pixels.size(); ++i)
        ds.pixels[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(lab[8 + i]);
    ds.validate();
    return ds;
}

// uncompressed IDX pair; inverse of load_idx for byte-exact round trips
inline void save_idx(const ImageDataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) data_error("cannot write file: " + images_path);
    detail::put_be32(img, detail::kIdxImagesMagic);
    detail::put_be32(img, static_cast<std::uint32_t>(ds.n));
    detail::put_be32(img, static_cast<std::uint32_t>(ds.height));
    detail::put_be32(img, static_cast<std::uint32_t>(ds.width));
    for (double p : ds.pixels) {
        auto b = static_cast<unsigned char>(std::lround(p * 255.0));
        img.write(reinterpret_cast<const char*>(&b), 1);
    }

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) data_error("cannot write file: " + labels_path);
    detail::put_be32(lab, detail::kIdxLabelsMagic);
    detail::put_be32(lab, static_cast<std::uint32_t>(ds.n));
    for (int l : ds.labels) {
        auto b = static_cast<unsigned char>(l);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// Deterministic class-templated images: each class owns a contiguous chunk
// of the flattened pixel grid that is bright, the rest stays dim. Labels
// round-robin. Linearly separable from spike rates, which is what the
// trainer tests need.
inline ImageDataset synthetic_dataset(std::size_t num_samples, std::size_t num_classes,
                                      std::size_t image_size, std::uint64_t seed) {
    if (num_samples == 0 || num_classes == 0 || image_size == 0)
        config_error("synthetic_dataset: sizes must be positive");
    std::size_t f = image_size * image_size;
    if (num_classes > f)
        config_error("synthetic_dataset: more classes than pixels");

    Rng rng(derive_seed(seed, 0x5D47A));
    ImageDataset ds;
    ds.n = num_samples;
    ds.height = ds.width = image_size;
    ds.pixels.resize(num_samples * f);
    ds.labels.resize(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i) {
        int c = static_cast<int>(i % num_classes);
        std::size_t lo = f * c / num_classes;
        std::size_t hi = f * (c + 1) / num_classes;
        double* px = ds.pixels.data() + i * f;
        for (std::size_t j = 0; j < f; ++j)
            px[j] = (j >= lo && j < hi) ? rng.uniform(0.7, 1.0) : rng.uniform(0.0, 0.1);
        ds.labels[i] = c;
    }
    return ds;
}

} // namespace srcnet
