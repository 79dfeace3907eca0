#pragma once

#include "diffpose/strl.hpp"
#include "diffpose/tensor.hpp"

namespace diffpose {

struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double diag() const;
};

// Center-preserving inflation by `factor` (1.25 = the 25% enlargement).
BBox enlarge_bbox(const BBox& box, double factor);

// Affine map between scene coordinates and crop-resize target coordinates
// (pixel-center convention: target pixel u samples scene x = (u+0.5)/sx - 0.5
// + x0).
struct CropTransform {
    double x0 = 0.0, y0 = 0.0;  // crop origin in scene coordinates
    double sx = 1.0, sy = 1.0;  // target pixels per scene pixel

    void to_crop(double x, double y, double& u, double& v) const;
    void to_scene(double u, double v, double& x, double& y) const;
};

// Enlarges the box by 25%, clamps it to the image, crops the same region from
// every frame and bilinearly resizes to target_h x target_w.
ClipTensor crop_person_clip(const ClipTensor& frames, const BBox& bbox, int target_h, int target_w,
                            CropTransform* transform = nullptr);

}  // namespace diffpose
