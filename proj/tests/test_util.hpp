#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "trafficshape/matrix.hpp"
#include "trafficshape/rng.hpp"

namespace trafficshape::testing {

inline Matrix random_int_matrix(Rng& rng, int m, int lo, int hi) {
  Matrix out(m);
  for (int d = 0; d < m; ++d)
    for (int p = 0; p < m; ++p) out(d, p) = double(rng.uniform_int(lo, hi));
  return out;
}

inline Matrix random_real_matrix(Rng& rng, int m, double lo, double hi) {
  Matrix out(m);
  for (int d = 0; d < m; ++d)
    for (int p = 0; p < m; ++p) out(d, p) = rng.uniform(lo, hi);
  return out;
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("trafficshape_" + tag + "_" + std::to_string(uint64_t(::getpid())));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

 private:
  std::filesystem::path dir_;
};

}  // namespace trafficshape::testing
