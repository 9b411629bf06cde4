#pragma once

#include <string>
#include <vector>

#include "found/tensor.hpp"

namespace found::imageio {

/// Binary PPM (P6) with 8-bit channels. Values map [-1,1] <-> [0,255].
/// Comments (written as '#' header lines) survive round-trips of the pixel
/// data but are not read back.
void write_ppm(const std::string& path, const Tensor& image,
               const std::vector<std::string>& comments = {});

/// Reads a P6 file into a (1,3,H,W) tensor in [-1,1].
Tensor read_ppm(const std::string& path);

/// Formats the perturbation would not survive (or that we cannot write).
bool is_lossy_extension(const std::string& path);
bool is_supported_extension(const std::string& path);

}  // namespace found::imageio
