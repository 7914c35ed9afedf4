// SPDX-License-Identifier: Apache-2.0
//
// Image datasets and co-transmission tuples.
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pnoma/rng.hpp"
#include "pnoma/tensor.hpp"

namespace pnoma {

enum class Split { Train, Val, Test };
enum class DataSource { Cifar10, Synthetic };

std::string to_string(Split split);

struct ImageDataset {
    std::vector<Tensor> images;  // (C, H, W), values in [0, 1]
    Split split = Split::Train;
    DataSource source = DataSource::Synthetic;

    std::size_t size() const { return images.size(); }
    const Tensor& operator[](std::size_t i) const { return images.at(i); }
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarSide = 32;

/// Parses one CIFAR-10 binary file (label byte + 3072 CHW pixel bytes per
/// record). Throws FormatError naming the byte offset of a truncated record.
std::vector<Tensor> read_cifar10_file(const std::filesystem::path& file);

/// Seeded split of [0, total) into (train, val) index lists; the last
/// `val_count` entries of a permutation form the validation part.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};
SplitIndices split_train_val(std::size_t total, std::size_t val_count, RngStream& stream);

/// Loads a CIFAR-10 split from `dir`. Train and Val come from
/// data_batch_1..5.bin, separated by split_train_val with `val_count`
/// validation images (5000 by default); Test comes from test_batch.bin.
ImageDataset load_cifar10(const std::filesystem::path& dir, Split split, std::uint64_t seed,
                          std::size_t val_count = 5000);

/// Smooth random images: a sum of coloured Gaussian blobs over a low-frequency
/// gradient, clipped to [0, 1].
ImageDataset gen_synthetic(std::size_t count, std::size_t width, std::size_t height, RngStream& stream,
                           Split split = Split::Train);

struct TupleIndexSet {
    std::size_t n = 1;
    std::vector<std::vector<std::size_t>> rows;  // T rows of n dataset indices

    std::size_t size() const { return rows.size(); }
};

/// Training tuples: permute [0, nT), reduce mod N, reshape to T x n.
TupleIndexSet build_train_tuples(std::size_t dataset_size, std::size_t n, std::size_t tuple_count,
                                 RngStream& stream);

/// Evaluation tuples: a permutation of [0, M) reshaped to floor(M/n) x n.
/// Leftover indices (n not dividing M) are dropped with a warning on stderr.
TupleIndexSet build_eval_tuples(std::size_t dataset_size, std::size_t n, RngStream& stream);

}  // namespace pnoma
