#include "stylab/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace stylab {

namespace {

// Reads one whitespace/comment-delimited header token.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      while (in.get(c) && c != '\n') {
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("read_ppm: cannot open '" + path + "'");
  if (next_token(in) != "P6") fail("read_ppm: '" + path + "' is not a binary PPM (P6)");
  const std::string ws = next_token(in), hs = next_token(in), ms = next_token(in);
  int64_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoll(ws);
    h = std::stoll(hs);
    maxval = std::stoll(ms);
  } catch (const std::exception&) {
    fail("read_ppm: malformed header in '" + path + "'");
  }
  if (w < 1 || h < 1) fail("read_ppm: invalid dimensions in '" + path + "'");
  if (maxval != 255) fail("read_ppm: only maxval 255 supported, got " + std::to_string(maxval));

  std::vector<char> raw(static_cast<size_t>(3 * w * h));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    fail("read_ppm: truncated pixel data in '" + path + "'");

  Tensor img({3, h, w});
  const int64_t hw = h * w;
  for (int64_t i = 0; i < hw; ++i)
    for (int64_t c = 0; c < 3; ++c)
      img[c * hw + i] = static_cast<float>(static_cast<uint8_t>(raw[static_cast<size_t>(3 * i + c)])) / 255.0f;
  return img;
}

void write_ppm(const Tensor& image, const std::string& path) {
  if (image.rank() != 3 || image.shape[0] != 3)
    fail("write_ppm: need [3,H,W], got " + shape_str(image.shape));
  const int64_t h = image.shape[1], w = image.shape[2], hw = h * w;
  std::string bytes = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  bytes.reserve(bytes.size() + static_cast<size_t>(3 * hw));
  for (int64_t i = 0; i < hw; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      const float v = std::min(1.0f, std::max(0.0f, image[c * hw + i]));
      bytes.push_back(static_cast<char>(static_cast<uint8_t>(std::lround(v * 255.0f))));
    }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("write_ppm: cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("write_ppm: short write to '" + path + "'");
}

std::vector<std::string> list_ppm_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail("'" + dir + "' is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

std::vector<Tensor> load_image_dir(const std::string& dir) {
  std::vector<Tensor> images;
  for (const std::string& p : list_ppm_files(dir)) images.push_back(read_ppm(p));
  if (images.empty()) fail("no .ppm images found in '" + dir + "'");
  return images;
}

}  // namespace stylab
