#include "core/geometry.h"

#include "core/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace trapkit {

double iou(const BBox& a, const BBox& b) {
    if (a == b) {
        return 1.0;
    }
    const double ix = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double iy = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    if (ix <= 0.0 || iy <= 0.0) {
        return 0.0;
    }
    const double inter = ix * iy;
    // Summing the two areas in a fixed order keeps the result symmetric bit-for-bit.
    const double area_sum = std::min(a.area(), b.area()) + std::max(a.area(), b.area());
    const double uni = area_sum - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

PixelBox to_absolute(const BBox& box, int width_px, int height_px) {
    if (width_px < 1 || height_px < 1) {
        throw Error(ErrorCode::MissingDimensions,
                    fmt::format("image dimensions {}x{} are invalid", width_px, height_px));
    }
    // std::round is round-half-away-from-zero.
    long x = std::lround(box.x_min() * width_px);
    long y = std::lround(box.y_min() * height_px);
    long w = std::lround(box.width() * width_px);
    long h = std::lround(box.height() * height_px);

    x = std::clamp(x, 0L, static_cast<long>(width_px) - 1);
    y = std::clamp(y, 0L, static_cast<long>(height_px) - 1);
    w = std::clamp(w, 1L, static_cast<long>(width_px) - x);
    h = std::clamp(h, 1L, static_cast<long>(height_px) - y);
    return {static_cast<int>(x), static_cast<int>(y), static_cast<int>(w), static_cast<int>(h)};
}

}  // namespace trapkit
