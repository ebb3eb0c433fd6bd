#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tpap/error.hpp"
#include "tpap/rng.hpp"
#include "tpap/tensor.hpp"

namespace tpap {

/// Labeled images with pixels in [0,1], stored N x C x H x W.
struct Dataset {
  std::string name;
  Tensor images;
  Labels labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  /// C, H, W of one example.
  Shape example_shape() const;
  /// Throws ValidationError unless pixels are in [0,1], labels are in range
  /// and the image count equals the label count.
  void validate() const;
};

class DataError : public Error {
 public:
  enum class Kind { missing_file, bad_magic, truncated, count_mismatch, record_size };

  DataError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Reads an MNIST-style IDX pair (images magic 0x00000803, labels 0x00000801,
/// big-endian headers). Pixels are scaled by 1/255; shape N x 1 x rows x cols.
Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

enum class Split { train, test };

/// Reads the CIFAR-10 binary release from `dir`: data_batch_1..5.bin for the
/// train split, test_batch.bin for the test split. Each record is one label
/// byte followed by 3072 channel-major pixel bytes.
Dataset load_cifar10_bin(const std::filesystem::path& dir, Split split);
/// One CIFAR-10 batch file.
Dataset load_cifar10_batch(const std::filesystem::path& file);

/// Examples at `indices`, in that order.
Dataset take(const Dataset& ds, std::span<const std::size_t> indices);
/// The first min(n, size) examples.
Dataset head(const Dataset& ds, std::size_t n);

struct AugmentSpec {
  std::size_t pad_crop = 0;  // 0 disables padding + random crop
  bool hflip = false;
  std::uint64_t seed = 0;
};

/// Per-image: zero-pad by pad_crop on each side, crop back to H x W at a
/// uniformly random offset, then mirror horizontally with probability 1/2.
Tensor augment(const Tensor& batch, const AugmentSpec& spec, Rng& rng);

/// Isotropic unit-variance Gaussian blobs in `dims` dimensions whose centers
/// are pairwise at least `separation` apart, mapped into [0,1] by a fixed affine
/// map of the centers' bounding box widened by 5 (values beyond are clamped).
/// Images are N x 1 x 1 x dims, class-major order.
Dataset make_synthetic_blobs(std::size_t num_classes, std::size_t n_per_class, std::size_t dims, double separation,
                             std::uint64_t seed);

/// Splits a seeded permutation of [0, n) into batches. The permutation depends
/// only on (shuffle_seed, epoch); the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                    std::size_t epoch, bool shuffle = true);

struct Batch {
  Tensor images;
  Labels labels;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);
/// Contiguous rows [begin, end).
Batch slice(const Dataset& ds, std::size_t begin, std::size_t end);

}  // namespace tpap
