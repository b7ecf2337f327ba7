#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace etomo {

/// Stack of equally sized slices, slice-major then row-major.
struct Volume3D {
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Volume3D() = default;
  Volume3D(int d, int h, int w, double fill = 0.0)
      : depth(d), height(h), width(w), data(static_cast<std::size_t>(d) * h * w, fill) {}

  double& at(int z, int y, int x) { return data[index(z, y, x)]; }
  double at(int z, int y, int x) const { return data[index(z, y, x)]; }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * height + y) * width + x;
  }
  std::size_t size() const { return data.size(); }
};

/// Integer label per pixel or voxel, 0 = background. `dims` is {H, W} or
/// {D, H, W}.
struct LabelMap {
  std::vector<int> dims;
  std::vector<std::int64_t> labels;
  std::int64_t count = 0;

  std::size_t size() const { return labels.size(); }
};

/// Binary mask with the same dimension convention as LabelMap.
struct Mask {
  std::vector<int> dims;
  std::vector<std::uint8_t> on;

  std::size_t size() const { return on.size(); }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : on) n += v != 0;
    return n;
  }
};

inline std::size_t product(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d < 0) throw std::invalid_argument("negative extent " + std::to_string(d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace etomo
