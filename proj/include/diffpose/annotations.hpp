#pragma once

#include <string>
#include <vector>

#include "diffpose/config.hpp"
#include "diffpose/crop.hpp"
#include "diffpose/heatmap_codec.hpp"

namespace diffpose {

// COCO-style keypoint record: (x, y, v) triplets with v in {0: unlabeled,
// 1: labeled-invisible, 2: labeled-visible}.
struct AnnotationRecord {
    std::string image_id;
    int person_id = 0;
    BBox bbox;
    std::vector<double> keypoints;  // 3K flat

    int joint_count() const { return static_cast<int>(keypoints.size()) / 3; }
    // v == 2 maps to visible.
    KeypointSet to_keypoints() const;
    static AnnotationRecord from_keypoints(const std::string& image_id, int person_id,
                                           const BBox& bbox, const KeypointSet& kps);
};

// Accepts either a top-level array of records or an object holding an
// "annotations" array.  Malformed entries raise ParseError naming the record
// index.
std::vector<AnnotationRecord> load_keypoint_annotations(const std::string& path);

Json annotations_to_json(const std::vector<AnnotationRecord>& records);
AnnotationRecord annotation_from_json(const Json& j, std::size_t index);

// top_level_array: write a bare JSON array (prediction files); otherwise wrap
// in {"annotations": [...]}.
void save_annotations(const std::vector<AnnotationRecord>& records, const std::string& path,
                      bool top_level_array);

}  // namespace diffpose
