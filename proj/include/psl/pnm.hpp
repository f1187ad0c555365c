#pragma once

#include <string>

#include "psl/tensor.hpp"

namespace psl {

/// Binary PNM with maxval 255: P5 grayscale and P6 RGB. Images travel as
/// CxHxW tensors scaled to [0,1]; the write path rounds half-up, so the
/// 8-bit round trip is exact. Class-index masks use the raw-byte variants
/// below (pixel value = class index, no scaling).
Tensor read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Tensor& image);

/// HxW tensor of small integer values stored byte-for-byte in a P5 file.
Tensor read_mask_pgm(const std::string& path);
void write_mask_pgm(const std::string& path, const Tensor& mask);

}  // namespace psl
