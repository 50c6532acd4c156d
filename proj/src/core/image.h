#pragma once

#include <opencv2/core.hpp>

#include <filesystem>
#include <string>

namespace trapkit {

// Decoded 8-bit BGR pixels plus the file they came from. Detectors that read
// per-image annotations (the synthetic oracle) locate them through `source`.
struct Image {
    cv::Mat pixels;
    std::filesystem::path source;

    int width() const noexcept { return pixels.cols; }
    int height() const noexcept { return pixels.rows; }
};

// Throws ImageDecodeError when the file is missing or not a decodable image.
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const cv::Mat& pixels);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace trapkit
