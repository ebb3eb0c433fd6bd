#include "tpap/data.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>

namespace tpap {

namespace fs = std::filesystem;

Shape Dataset::example_shape() const {
  if (images.rank() != 4) return {};
  return {images.dim(1), images.dim(2), images.dim(3)};
}

void Dataset::validate() const {
  if (images.rank() != 4) throw ValidationError("dataset.images", "expected N x C x H x W, got " + shape_str(images.shape()));
  if (images.dim(0) != labels.size())
    throw ValidationError("dataset.labels", std::to_string(images.dim(0)) + " images but " +
                                                std::to_string(labels.size()) + " labels");
  for (float v : images.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("dataset.images", "pixel outside [0,1]");
  for (Label y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw ValidationError("dataset.labels", "label " + std::to_string(y) + " outside [0, " +
                                                  std::to_string(num_classes) + ")");
}

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::missing_file, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const fs::path& path) {
  if (off + 4 > buf.size()) throw DataError(DataError::Kind::truncated, path.string() + ": truncated header");
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
         std::uint32_t{buf[off + 3]};
}

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_mnist_idx(const fs::path& images_path, const fs::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const auto img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImages)
    throw DataError(DataError::Kind::bad_magic,
                    images_path.string() + ": bad magic " + hex(img_magic) + ", expected " + hex(kIdxImages));
  const auto lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabels)
    throw DataError(DataError::Kind::bad_magic,
                    labels_path.string() + ": bad magic " + hex(lab_magic) + ", expected " + hex(kIdxLabels));

  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (n != n_labels)
    throw DataError(DataError::Kind::count_mismatch,
                    "IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  if (img.size() < 16 + n * rows * cols)
    throw DataError(DataError::Kind::truncated, images_path.string() + ": truncated pixel data");
  if (lab.size() < 8 + n) throw DataError(DataError::Kind::truncated, labels_path.string() + ": truncated label data");

  Dataset ds;
  ds.name = "mnist";
  ds.num_classes = 10;
  ds.images = Tensor(Shape{n, 1, std::max<std::size_t>(rows, 1), std::max<std::size_t>(cols, 1)});
  float* px = ds.images.ptr();
  for (std::size_t i = 0; i < n * rows * cols; ++i) px[i] = static_cast<float>(img[16 + i]) / 255.0f;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<Label>(lab[8 + i]);
    if (ds.labels[i] > 9)
      throw DataError(DataError::Kind::count_mismatch, labels_path.string() + ": label out of range at " + std::to_string(i));
  }
  return ds;
}

Dataset load_cifar10_batch(const fs::path& file) {
  constexpr std::size_t kRecord = 1 + 3072;
  const auto buf = read_file(file);
  if (buf.size() % kRecord != 0)
    throw DataError(DataError::Kind::record_size, file.string() + ": size " + std::to_string(buf.size()) +
                                                       " is not a multiple of the " + std::to_string(kRecord) +
                                                       "-byte record");
  const std::size_t n = buf.size() / kRecord;
  Dataset ds;
  ds.name = "cifar10";
  ds.num_classes = 10;
  ds.images = Tensor(Shape{n, 3, 32, 32});
  ds.labels.resize(n);
  float* px = ds.images.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = buf.data() + i * kRecord;
    if (rec[0] > 9) throw DataError(DataError::Kind::record_size, file.string() + ": label byte out of range");
    ds.labels[i] = rec[0];
    for (std::size_t j = 0; j < 3072; ++j) px[i * 3072 + j] = static_cast<float>(rec[1 + j]) / 255.0f;
  }
  return ds;
}

Dataset load_cifar10_bin(const fs::path& dir, Split split) {
  std::vector<fs::path> files;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  for (const auto& f : files)
    if (!fs::exists(f)) throw DataError(DataError::Kind::missing_file, "missing CIFAR-10 file " + f.string());

  std::vector<Tensor> parts;
  Dataset ds;
  ds.name = split == Split::train ? "cifar10-train" : "cifar10-test";
  ds.num_classes = 10;
  for (const auto& f : files) {
    Dataset part = load_cifar10_batch(f);
    ds.labels.insert(ds.labels.end(), part.labels.begin(), part.labels.end());
    parts.push_back(std::move(part.images));
  }
  ds.images = concat_rows(parts);
  return ds;
}

Dataset take(const Dataset& ds, std::span<const std::size_t> indices) {
  Batch b = gather(ds, indices);
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.images = std::move(b.images);
  out.labels = std::move(b.labels);
  return out;
}

Dataset head(const Dataset& ds, std::size_t n) {
  n = std::min(n, ds.size());
  Batch b = slice(ds, 0, n);
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.images = std::move(b.images);
  out.labels = std::move(b.labels);
  return out;
}

Tensor augment(const Tensor& batch, const AugmentSpec& spec, Rng& rng) {
  if (batch.rank() != 4) throw ShapeError("augment: expected N x C x H x W, got " + shape_str(batch.shape()));
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (spec.pad_crop >= std::min(h, w))
    throw ValidationError("augment.pad_crop", "must be smaller than the image side");
  if (spec.pad_crop == 0 && !spec.hflip) return batch;

  Tensor out(batch.shape());
  const auto p = static_cast<std::ptrdiff_t>(spec.pad_crop);
  const std::size_t image = c * h * w;
  for (std::size_t i = 0; i < n; ++i) {
    std::ptrdiff_t dy = 0, dx = 0;
    if (spec.pad_crop > 0) {
      dy = static_cast<std::ptrdiff_t>(rng.below(2 * spec.pad_crop + 1)) - p;
      dx = static_cast<std::ptrdiff_t>(rng.below(2 * spec.pad_crop + 1)) - p;
    }
    const bool flip = spec.hflip && rng.coin();
    const float* src = batch.ptr() + i * image;
    float* dst = out.ptr() + i * image;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          const std::size_t xo = flip ? w - 1 - x : x;
          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xo) + dx;
          float v = 0.0f;
          if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 && sx < static_cast<std::ptrdiff_t>(w))
            v = src[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
          dst[(ch * h + y) * w + x] = v;
        }
  }
  return out;
}

Dataset make_synthetic_blobs(std::size_t num_classes, std::size_t n_per_class, std::size_t dims, double separation,
                             std::uint64_t seed) {
  if (dims < 2) throw ValidationError("blobs.dims", "must be at least 2");
  if (!(separation > 0.0)) throw ValidationError("blobs.separation", "must be positive");
  if (num_classes < 1) throw ValidationError("blobs.num_classes", "must be at least 1");

  // Centers: scaled axis vectors when they fit (pairwise distance exactly
  // `separation`), otherwise a regular polygon in the first two coordinates.
  std::vector<std::vector<double>> centers(num_classes, std::vector<double>(dims, 0.0));
  if (num_classes <= dims) {
    for (std::size_t k = 0; k < num_classes; ++k) centers[k][k] = separation / std::sqrt(2.0);
  } else {
    const double pi = 3.14159265358979323846;
    const double radius = separation / (2.0 * std::sin(pi / static_cast<double>(num_classes)));
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double a = 2.0 * pi * static_cast<double>(k) / static_cast<double>(num_classes);
      centers[k][0] = radius * std::cos(a);
      centers[k][1] = radius * std::sin(a);
    }
  }

  const std::size_t n = num_classes * n_per_class;
  std::vector<double> raw(n * dims);
  Rng rng(seed);
  for (std::size_t k = 0; k < num_classes; ++k)
    for (std::size_t i = 0; i < n_per_class; ++i)
      for (std::size_t d = 0; d < dims; ++d) raw[(k * n_per_class + i) * dims + d] = centers[k][d] + rng.normal();

  // The map into [0,1] depends only on the centers (5 sigma margin), so sets
  // drawn with different seeds share one pixel scale.
  double lo = 0.0, hi = 0.0;
  for (const auto& c : centers)
    for (double v : c) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  lo -= 5.0;
  hi += 5.0;
  const double span = hi > lo ? hi - lo : 1.0;

  Dataset ds;
  ds.name = "blobs";
  ds.num_classes = num_classes;
  ds.images = Tensor(Shape{n, 1, 1, dims});
  for (std::size_t i = 0; i < raw.size(); ++i)
    ds.images[i] = std::clamp(static_cast<float>((raw[i] - lo) / span), 0.0f, 1.0f);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<Label>(i / std::max<std::size_t>(n_per_class, 1));
  return ds;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                    std::size_t epoch, bool shuffle) {
  if (batch_size == 0) throw ValidationError("batch_size", "must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng = Rng(shuffle_seed).split(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  return batches;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  const Shape ex = ds.example_shape();
  const std::size_t stride = shape_numel(ex);
  Batch b;
  b.images = Tensor(Shape{indices.size(), ex.at(0), ex.at(1), ex.at(2)});
  b.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t j = indices[i];
    if (j >= ds.size()) throw ShapeError("gather: index " + std::to_string(j) + " out of " + std::to_string(ds.size()));
    std::copy_n(ds.images.ptr() + j * stride, stride, b.images.ptr() + i * stride);
    b.labels[i] = ds.labels[j];
  }
  return b;
}

Batch slice(const Dataset& ds, std::size_t begin, std::size_t end) {
  Batch b;
  b.images = slice_rows(ds.images, begin, end);
  b.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return b;
}

}  // namespace tpap
