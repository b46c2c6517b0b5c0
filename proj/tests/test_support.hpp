#pragma once

#include "comind/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace comind::test {

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("comind_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path mnist_dir() {
  const char* env = std::getenv("COMIND_MNIST_DIR");
  return env != nullptr ? std::filesystem::path(env) : std::filesystem::path("/root/data/mnist");
}

/// Relative L2 error between backward() and central differences of `out`
/// over every entry of `leaves`. Other leaves keep their recorded values.
inline double fd_gradient_error(ad::Tape& tape, ad::Var out, const std::vector<ad::Var>& leaves,
                                double h = 1e-6) {
  const ad::GradientSet grads = tape.backward(out, leaves);
  ad::Bindings base;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    const ad::Var v{&tape, static_cast<int>(id)};
    if (tape.op(v) == ad::Op::Leaf) base.set(v, v.value());
  }
  const ad::Var outs[1] = {out};
  double num = 0.0;
  double den = 0.0;
  for (const ad::Var& l : leaves) {
    for (std::size_t i = 0; i < l.value().size(); ++i) {
      ad::Bindings plus = base;
      ad::Bindings minus = base;
      ad::Tensor tp = l.value();
      ad::Tensor tm = l.value();
      tp[i] += h;
      tm[i] -= h;
      plus.set(l, tp);
      minus.set(l, tm);
      const double fd = (tape.evaluate(plus, outs)[0].item() - tape.evaluate(minus, outs)[0].item()) / (2 * h);
      const double g = grads[l][i];
      num += (fd - g) * (fd - g);
      den += fd * fd;
    }
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace comind::test
