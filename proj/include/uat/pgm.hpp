#pragma once

#include <string>

#include "uat/tensor.hpp"

namespace uat {

// Binary PGM (P5), maxval 255. Pixels load as value/255 in [0,1];
// writes round-and-clamp. Images are single channel, tensor shape [1,H,W].
Tensor read_pgm(const std::string& path);
void write_pgm(const Tensor& image, const std::string& path);

}  // namespace uat
