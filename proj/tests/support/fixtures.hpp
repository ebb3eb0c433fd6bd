#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "tpap/data.hpp"
#include "tpap/nn.hpp"
#include "tpap/rng.hpp"
#include "tpap/tensor.hpp"
#include "tpap/training.hpp"

namespace tpap::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem = "tpap_test") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor uniform_tensor(Shape shape, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Labels random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  Labels y(n);
  for (auto& l : y) l = static_cast<Label>(rng.below(classes));
  return y;
}

/// Small blobs problem with a short clean-training recipe; trains in well
/// under a second.
struct BlobsProblem {
  Dataset train = make_synthetic_blobs(3, 100, 8, 10.0, 1);
  Dataset test = make_synthetic_blobs(3, 50, 8, 10.0, 2);
  Architecture arch = mlp_architecture({1, 1, 8}, {16}, 3);

  TrainSpec spec(int epochs = 5) const {
    TrainSpec s;
    s.epochs = epochs;
    s.batch_size = 32;
    s.lr0 = 0.05f;
    s.lr_drops = scaled_lr_drops(epochs);
    s.seed = 7;
    s.eval_train_examples = 0;
    s.eval_test_examples = 0;
    s.eval_pgd = AttackSpec::pgd(8.0f / 255.0f, 3);
    return s;
  }
};

}  // namespace tpap::testing
