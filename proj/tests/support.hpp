#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>
#include <unistd.h>

#include "ptgan/random.hpp"
#include "ptgan/tensor.hpp"

namespace ptgan::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ptgan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

template <typename S>
Tensor<S> random_tensor(Rng& rng, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(c, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <typename S>
ForegroundMask<S> random_mask(Rng& rng, int h, int w, bool binary = false) {
  ForegroundMask<S> m(h, w);
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) {
    m.weights.data()[i] = static_cast<S>(binary ? (rng.coin(0.5) ? 1.0 : 0.0) : rng.uniform());
  }
  return m;
}

/// Random retrieval instance: features in d dims, a few identities over a few cameras.
struct RetrievalCase {
  Matrix<float> qf, gf;
  std::vector<std::string> q_id, g_id;
  std::vector<int> q_cam, g_cam;
};

inline RetrievalCase random_retrieval_case(Rng& rng, int max_queries = 20, int max_gallery = 50, int dim = 6) {
  RetrievalCase rc;
  const int nq = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_queries)));
  const int ng = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_gallery)));
  const int ids = 2 + static_cast<int>(rng.index(6));
  rc.qf.resize(nq, dim);
  rc.gf.resize(ng, dim);
  for (Eigen::Index i = 0; i < rc.qf.size(); ++i) rc.qf.data()[i] = static_cast<float>(rng.normal());
  for (Eigen::Index i = 0; i < rc.gf.size(); ++i) rc.gf.data()[i] = static_cast<float>(rng.normal());
  for (int i = 0; i < nq; ++i) {
    rc.q_id.push_back(std::to_string(rng.index(static_cast<std::uint64_t>(ids))));
    rc.q_cam.push_back(1 + static_cast<int>(rng.index(3)));
  }
  for (int i = 0; i < ng; ++i) {
    rc.g_id.push_back(std::to_string(rng.index(static_cast<std::uint64_t>(ids))));
    rc.g_cam.push_back(1 + static_cast<int>(rng.index(3)));
  }
  return rc;
}

inline bool rel_close(double a, double b, double rel = 1e-6, double abs_floor = 1e-12) {
  return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), abs_floor});
}

}  // namespace ptgan::testing
