#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "s2s/types.hpp"

// In-memory rasters. Storage is acquisition-major (band-major): element
// (band, row, col) sits at (band * rows + row) * cols + col.
namespace s2s {

/// Single-look complex stack, N acquisitions x rows x cols, stored as
/// complex float so that write/read round trips are exact.
struct SlcStack {
  int n_acquisitions = 0;
  int rows = 0;
  int cols = 0;
  std::string provenance;
  std::vector<std::complex<float>> data;

  SlcStack() = default;
  SlcStack(int n, int r, int c) : n_acquisitions(n), rows(r), cols(c), data(std::size_t(n) * r * c) {}

  std::size_t offset(int band, int row, int col) const noexcept {
    return (std::size_t(band) * rows + row) * cols + col;
  }
  std::complex<float>& at(int band, int row, int col) { return data[offset(band, row, col)]; }
  const std::complex<float>& at(int band, int row, int col) const { return data[offset(band, row, col)]; }

  /// Temporal vector of one pixel, promoted to double.
  CVector pixel(int row, int col) const;

  /// Throws InvalidArgument if the dimensions do not match the payload.
  void validate() const;
};

/// Real multi-band raster (bands x rows x cols), double in memory.
struct Raster {
  int bands = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int b, int r, int c, double fill = 0.0) : bands(b), rows(r), cols(c), data(std::size_t(b) * r * c, fill) {}

  std::size_t offset(int band, int row, int col) const noexcept {
    return (std::size_t(band) * rows + row) * cols + col;
  }
  double& at(int band, int row, int col) { return data[offset(band, row, col)]; }
  double at(int band, int row, int col) const { return data[offset(band, row, col)]; }

  void validate() const;
};

}  // namespace s2s
