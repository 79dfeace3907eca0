#include "diffpose/annotations.hpp"

#include <cmath>
#include <fstream>

#include "diffpose/errors.hpp"

namespace diffpose {

KeypointSet AnnotationRecord::to_keypoints() const {
    KeypointSet out;
    const int k = joint_count();
    out.joints.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j)
        out.joints.push_back({keypoints[static_cast<std::size_t>(3 * j)],
                              keypoints[static_cast<std::size_t>(3 * j + 1)],
                              keypoints[static_cast<std::size_t>(3 * j + 2)] == 2.0});
    return out;
}

AnnotationRecord AnnotationRecord::from_keypoints(const std::string& image_id, int person_id,
                                                  const BBox& bbox, const KeypointSet& kps) {
    AnnotationRecord rec;
    rec.image_id = image_id;
    rec.person_id = person_id;
    rec.bbox = bbox;
    rec.keypoints.reserve(kps.joints.size() * 3);
    for (const Keypoint& kp : kps.joints) {
        rec.keypoints.push_back(kp.x);
        rec.keypoints.push_back(kp.y);
        rec.keypoints.push_back(kp.visible ? 2.0 : 1.0);
    }
    return rec;
}

AnnotationRecord annotation_from_json(const Json& j, std::size_t index) {
    const std::string where = "annotation[" + std::to_string(index) + "]";
    if (!j.is_object()) throw ParseError(where + ": entry must be an object");
    AnnotationRecord rec;
    if (!j.contains("image_id")) throw ParseError(where + ": missing 'image_id'");
    const Json& id = j.at("image_id");
    if (id.is_string()) rec.image_id = id.get<std::string>();
    else if (id.is_number_integer()) rec.image_id = std::to_string(id.get<long long>());
    else throw ParseError(where + ": 'image_id' must be a string or integer");
    if (!j.contains("person_id") || !j.at("person_id").is_number_integer())
        throw ParseError(where + ": missing integer 'person_id'");
    rec.person_id = j.at("person_id").get<int>();
    if (!j.contains("bbox") || !j.at("bbox").is_array() || j.at("bbox").size() != 4)
        throw ParseError(where + ": 'bbox' must be an array of 4 numbers");
    for (const Json& v : j.at("bbox"))
        if (!v.is_number()) throw ParseError(where + ": 'bbox' must hold numbers");
    rec.bbox = {j.at("bbox")[0].get<double>(), j.at("bbox")[1].get<double>(),
                j.at("bbox")[2].get<double>(), j.at("bbox")[3].get<double>()};
    if (rec.bbox.w <= 0.0 || rec.bbox.h <= 0.0)
        throw ParseError(where + ": bbox width and height must be positive");
    if (!j.contains("keypoints") || !j.at("keypoints").is_array())
        throw ParseError(where + ": missing 'keypoints' array");
    const Json& kp = j.at("keypoints");
    if (kp.empty() || kp.size() % 3 != 0)
        throw ParseError(where + ": keypoints length " + std::to_string(kp.size()) +
                         " is not a positive multiple of 3");
    rec.keypoints.reserve(kp.size());
    for (std::size_t i = 0; i < kp.size(); ++i) {
        if (!kp[i].is_number()) throw ParseError(where + ": keypoints must hold numbers");
        const double v = kp[i].get<double>();
        if (i % 3 == 2 && v != 0.0 && v != 1.0 && v != 2.0)
            throw ParseError(where + ": visibility flags must be 0, 1 or 2");
        rec.keypoints.push_back(v);
    }
    return rec;
}

std::vector<AnnotationRecord> load_keypoint_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("annotations: cannot open '" + path + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ParseError("annotations: invalid JSON in '" + path + "': " + e.what());
    }
    const Json* arr = nullptr;
    if (j.is_array()) {
        arr = &j;
    } else if (j.is_object() && j.contains("annotations") && j.at("annotations").is_array()) {
        arr = &j.at("annotations");
    } else {
        throw ParseError("annotations: expected a top-level array or an 'annotations' array");
    }
    std::vector<AnnotationRecord> out;
    out.reserve(arr->size());
    for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(annotation_from_json((*arr)[i], i));
    return out;
}

Json annotations_to_json(const std::vector<AnnotationRecord>& records) {
    Json arr = Json::array();
    for (const AnnotationRecord& rec : records) {
        Json j = Json::object();
        j["image_id"] = rec.image_id;
        j["person_id"] = rec.person_id;
        j["bbox"] = {rec.bbox.x, rec.bbox.y, rec.bbox.w, rec.bbox.h};
        j["keypoints"] = rec.keypoints;
        arr.push_back(std::move(j));
    }
    return arr;
}

void save_annotations(const std::vector<AnnotationRecord>& records, const std::string& path,
                      bool top_level_array) {
    std::ofstream out(path);
    if (!out) throw IoError("annotations: cannot write '" + path + "'");
    Json arr = annotations_to_json(records);
    if (top_level_array) {
        out << arr.dump(2) << "\n";
    } else {
        Json j = Json::object();
        j["annotations"] = std::move(arr);
        out << j.dump(2) << "\n";
    }
}

}  // namespace diffpose
