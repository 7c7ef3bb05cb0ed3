#include "s2s/raster.hpp"

#include "s2s/errors.hpp"

namespace s2s {

CVector SlcStack::pixel(int row, int col) const {
  CVector v(n_acquisitions);
  for (int b = 0; b < n_acquisitions; ++b) {
    const auto& x = at(b, row, col);
    v(b) = cdouble(x.real(), x.imag());
  }
  return v;
}

void SlcStack::validate() const {
  if (n_acquisitions < 1 || rows < 1 || cols < 1) throw InvalidArgument("stack: dimensions must be >= 1");
  if (data.size() != std::size_t(n_acquisitions) * rows * cols)
    throw InvalidArgument("stack: payload holds " + std::to_string(data.size()) + " samples, dimensions need " +
                          std::to_string(std::size_t(n_acquisitions) * rows * cols));
}

void Raster::validate() const {
  if (bands < 1 || rows < 1 || cols < 1) throw InvalidArgument("raster: dimensions must be >= 1");
  if (data.size() != std::size_t(bands) * rows * cols)
    throw InvalidArgument("raster: payload holds " + std::to_string(data.size()) + " values, dimensions need " +
                          std::to_string(std::size_t(bands) * rows * cols));
}

}  // namespace s2s
