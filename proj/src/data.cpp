// SPDX-License-Identifier: Apache-2.0
#include "pnoma/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>

#include "pnoma/errors.hpp"

namespace pnoma {

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

std::vector<Tensor> read_cifar10_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw FormatError("cannot open CIFAR-10 file " + file.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
        throw FormatError(file.string() + ": truncated record at byte offset " + std::to_string(offset) + " (" +
                          std::to_string(bytes.size() - offset) + " of " + std::to_string(kCifarRecordBytes) +
                          " bytes)");
    }
    std::vector<Tensor> images;
    images.reserve(bytes.size() / kCifarRecordBytes);
    constexpr std::size_t pixels = 3 * kCifarSide * kCifarSide;
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
        std::vector<double> v(pixels);
        // byte 0 is the label; pixels follow in R, G, B planes
        for (std::size_t i = 0; i < pixels; ++i) v[i] = static_cast<double>(bytes[off + 1 + i]) / 255.0;
        images.push_back(Tensor::from({3, kCifarSide, kCifarSide}, std::move(v)));
    }
    return images;
}

SplitIndices split_train_val(std::size_t total, std::size_t val_count, RngStream& stream) {
    if (val_count > total) throw ContractViolation("split_train_val: validation part larger than dataset");
    const auto perm = stream.permutation(total);
    SplitIndices out;
    out.train.assign(perm.begin(), perm.end() - static_cast<long>(val_count));
    out.val.assign(perm.end() - static_cast<long>(val_count), perm.end());
    return out;
}

ImageDataset load_cifar10(const std::filesystem::path& dir, Split split, std::uint64_t seed, std::size_t val_count) {
    ImageDataset ds;
    ds.split = split;
    ds.source = DataSource::Cifar10;
    if (split == Split::Test) {
        ds.images = read_cifar10_file(dir / "test_batch.bin");
        return ds;
    }
    std::vector<Tensor> all;
    for (int b = 1; b <= 5; ++b) {
        auto part = read_cifar10_file(dir / ("data_batch_" + std::to_string(b) + ".bin"));
        std::move(part.begin(), part.end(), std::back_inserter(all));
    }
    RngStream stream(seed, StreamId::DataSplit);
    const auto idx = split_train_val(all.size(), val_count, stream);
    for (auto i : split == Split::Train ? idx.train : idx.val) ds.images.push_back(all[i]);
    return ds;
}

ImageDataset gen_synthetic(std::size_t count, std::size_t width, std::size_t height, RngStream& stream, Split split) {
    if (count == 0) throw ContractViolation("gen_synthetic: count must be at least 1");
    if (width == 0 || height == 0) throw ContractViolation("gen_synthetic: empty image size");
    ImageDataset ds;
    ds.split = split;
    ds.source = DataSource::Synthetic;
    const double scale = static_cast<double>(std::max(width, height));
    for (std::size_t n = 0; n < count; ++n) {
        std::vector<double> v(3 * width * height);
        double base[3], gx[3], gy[3];
        for (int c = 0; c < 3; ++c) {
            base[c] = stream.uniform(0.25, 0.75);
            gx[c] = stream.uniform(-0.3, 0.3);
            gy[c] = stream.uniform(-0.3, 0.3);
        }
        const std::size_t blobs = 2 + stream.below(4);
        struct Blob {
            double cx, cy, radius, amp[3];
        };
        std::vector<Blob> bs(blobs);
        for (auto& b : bs) {
            b.cx = stream.uniform(0.0, static_cast<double>(width));
            b.cy = stream.uniform(0.0, static_cast<double>(height));
            b.radius = stream.uniform(0.1, 0.3) * scale;
            for (auto& a : b.amp) a = stream.uniform(-0.6, 0.6);
        }
        for (int c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    const double fx = static_cast<double>(x) / scale - 0.5;
                    const double fy = static_cast<double>(y) / scale - 0.5;
                    double val = base[c] + gx[c] * fx + gy[c] * fy;
                    for (const auto& b : bs) {
                        const double dx = static_cast<double>(x) - b.cx, dy = static_cast<double>(y) - b.cy;
                        val += b.amp[c] * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
                    }
                    v[(c * height + y) * width + x] = std::clamp(val, 0.0, 1.0);
                }
        ds.images.push_back(Tensor::from({3, height, width}, std::move(v)));
    }
    return ds;
}

TupleIndexSet build_train_tuples(std::size_t dataset_size, std::size_t n, std::size_t tuple_count,
                                 RngStream& stream) {
    if (n == 0 || dataset_size < n || tuple_count == 0)
        throw ContractViolation("build_train_tuples: require N >= n >= 1 and T >= 1");
    const auto perm = stream.permutation(n * tuple_count);
    TupleIndexSet out{n, std::vector<std::vector<std::size_t>>(tuple_count, std::vector<std::size_t>(n))};
    for (std::size_t t = 0; t < tuple_count; ++t)
        for (std::size_t u = 0; u < n; ++u) out.rows[t][u] = perm[t * n + u] % dataset_size;
    return out;
}

TupleIndexSet build_eval_tuples(std::size_t dataset_size, std::size_t n, RngStream& stream) {
    if (n == 0 || dataset_size < n)
        throw ContractViolation("build_eval_tuples: need at least n = " + std::to_string(n) + " images, got " +
                                std::to_string(dataset_size));
    const auto perm = stream.permutation(dataset_size);
    const std::size_t rows = dataset_size / n;
    if (rows * n != dataset_size)
        std::cerr << "warning: " << dataset_size - rows * n << " evaluation images dropped (" << dataset_size
                  << " not divisible by n = " << n << ")\n";
    TupleIndexSet out{n, std::vector<std::vector<std::size_t>>(rows, std::vector<std::size_t>(n))};
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t u = 0; u < n; ++u) out.rows[t][u] = perm[t * n + u];
    return out;
}

}  // namespace pnoma
