#include "core/image.h"

#include "core/error.h"

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include <fstream>
#include <iterator>
#include <vector>

namespace trapkit {

Image load_image(const std::filesystem::path& path) {
    const std::string bytes = [&] {
        try {
            return read_file(path);
        } catch (const Error& e) {
            throw Error(ErrorCode::ImageDecodeError, e.what());
        }
    }();
    std::vector<uchar> buffer(bytes.begin(), bytes.end());
    cv::Mat pixels;
    try {
        pixels = cv::imdecode(buffer, cv::IMREAD_COLOR | cv::IMREAD_IGNORE_ORIENTATION);
    } catch (const cv::Exception&) {
        pixels.release();
    }
    if (pixels.empty()) {
        throw Error(ErrorCode::ImageDecodeError,
                    fmt::format("cannot decode image '{}'", path.string()));
    }
    return {pixels, path};
}

void save_image(const std::filesystem::path& path, const cv::Mat& pixels) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), pixels);
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) {
        throw Error(ErrorCode::IoError, fmt::format("cannot write image '{}'", path.string()));
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, fmt::format("cannot open '{}'", path.string()));
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, fmt::format("cannot write '{}'", path.string()));
    }
}

}  // namespace trapkit
