#include "diffpose/crop.hpp"

#include <algorithm>
#include <cmath>

#include "diffpose/errors.hpp"

namespace diffpose {

double BBox::diag() const { return std::sqrt(w * w + h * h); }

BBox enlarge_bbox(const BBox& box, double factor) {
    if (box.w <= 0.0 || box.h <= 0.0) throw CropError("enlarge_bbox: degenerate box");
    const double cx = box.x + box.w / 2.0, cy = box.y + box.h / 2.0;
    const double nw = box.w * factor, nh = box.h * factor;
    return {cx - nw / 2.0, cy - nh / 2.0, nw, nh};
}

void CropTransform::to_crop(double x, double y, double& u, double& v) const {
    u = (x - x0 + 0.5) * sx - 0.5;
    v = (y - y0 + 0.5) * sy - 0.5;
}

void CropTransform::to_scene(double u, double v, double& x, double& y) const {
    x = (u + 0.5) / sx - 0.5 + x0;
    y = (v + 0.5) / sy - 0.5 + y0;
}

namespace {

double bilinear(const Tensor& img, int c, double y, double x) {
    const int h = img.dim(1), w = img.dim(2);
    const double cx = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = cx - x0, fy = cy - y0;
    return (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
           fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
}

}  // namespace

ClipTensor crop_person_clip(const ClipTensor& frames, const BBox& bbox, int target_h, int target_w,
                            CropTransform* transform) {
    frames.validate();
    if (target_h <= 0 || target_w <= 0) throw CropError("crop: target size must be positive");
    const int img_h = frames.frames.front().dim(1);
    const int img_w = frames.frames.front().dim(2);
    const BBox big = enlarge_bbox(bbox, 1.25);
    const double x0 = std::max(big.x, 0.0);
    const double y0 = std::max(big.y, 0.0);
    const double x1 = std::min(big.x + big.w, static_cast<double>(img_w));
    const double y1 = std::min(big.y + big.h, static_cast<double>(img_h));
    if (x1 <= x0 || y1 <= y0) throw CropError("crop: box does not intersect the image");
    const double cw = x1 - x0, ch = y1 - y0;

    CropTransform tf;
    tf.x0 = x0;
    tf.y0 = y0;
    tf.sx = target_w / cw;
    tf.sy = target_h / ch;
    if (transform) *transform = tf;

    ClipTensor out;
    out.delta = frames.delta;
    out.frames.reserve(frames.frames.size());
    const int c_img = frames.frames.front().dim(0);
    for (const Tensor& src : frames.frames) {
        Tensor dst({c_img, target_h, target_w});
        for (int c = 0; c < c_img; ++c) {
            for (int v = 0; v < target_h; ++v) {
                for (int u = 0; u < target_w; ++u) {
                    double sx, sy;
                    tf.to_scene(u, v, sx, sy);
                    dst.at(c, v, u) = bilinear(src, c, sy, sx);
                }
            }
        }
        out.frames.push_back(std::move(dst));
    }
    return out;
}

}  // namespace diffpose
