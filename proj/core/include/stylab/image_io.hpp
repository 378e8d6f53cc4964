#pragma once

#include <string>
#include <vector>

#include "stylab/tensor.hpp"

namespace stylab {

/// Binary PPM (P6, 8-bit). Pixels map linearly between [0,1] floats and
/// 0..255 bytes; writes are deterministic.
Tensor read_ppm(const std::string& path);
void write_ppm(const Tensor& image, const std::string& path);

/// Sorted .ppm paths directly inside a directory.
std::vector<std::string> list_ppm_files(const std::string& dir);

/// Load every .ppm in a directory, sorted by filename. Errors if none.
std::vector<Tensor> load_image_dir(const std::string& dir);

}  // namespace stylab
