#pragma once

#include "core/types.h"

namespace trapkit {

struct PixelBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const PixelBox&) const = default;
};

// Intersection over union of two normalized boxes; symmetric, 0 when disjoint.
double iou(const BBox& a, const BBox& b);

// Rounds half away from zero, then clamps so the box lies inside the image with w,h >= 1.
PixelBox to_absolute(const BBox& box, int width_px, int height_px);

}  // namespace trapkit
