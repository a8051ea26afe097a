#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace ctpnp {

struct Dims3 {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t slice_count() const { return nx * ny; }
  bool operator==(const Dims3&) const = default;
};

/// Attenuation volume in mm^-1. Storage is z-major, then y, then x:
/// index(i, j, k) = (k * ny + j) * nx + i.
struct Volume {
  Dims3 dims;
  double voxel_size_mm = 1.0;
  std::vector<double> data;

  Volume() = default;
  Volume(Dims3 d, double voxel_size)
      : dims(d), voxel_size_mm(voxel_size), data(d.count(), 0.0) {}

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (k * dims.ny + j) * dims.nx + i;
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }

  std::span<double> slice(std::size_t k) {
    return {data.data() + k * dims.slice_count(), dims.slice_count()};
  }
  std::span<const double> slice(std::size_t k) const {
    return {data.data() + k * dims.slice_count(), dims.slice_count()};
  }
};

/// Line-integral measurements, one detector image per view.
/// index(v, r, c) = (v * det_rows + r) * det_cols + c.
struct ProjectionSet {
  std::size_t n_views = 0;
  std::size_t det_rows = 0;
  std::size_t det_cols = 0;
  std::vector<double> angles_deg;
  std::vector<double> data;

  ProjectionSet() = default;
  ProjectionSet(std::size_t views, std::size_t rows, std::size_t cols, std::vector<double> angles)
      : n_views(views), det_rows(rows), det_cols(cols), angles_deg(std::move(angles)),
        data(views * rows * cols, 0.0) {}

  std::size_t index(std::size_t v, std::size_t r, std::size_t c) const {
    return (v * det_rows + r) * det_cols + c;
  }
  double& at(std::size_t v, std::size_t r, std::size_t c) { return data[index(v, r, c)]; }
  double at(std::size_t v, std::size_t r, std::size_t c) const { return data[index(v, r, c)]; }
  std::size_t view_count() const { return det_rows * det_cols; }
};

}  // namespace ctpnp
