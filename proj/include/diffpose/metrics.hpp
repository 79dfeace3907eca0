#pragma once

#include <optional>
#include <string>
#include <vector>

#include "diffpose/annotations.hpp"
#include "diffpose/heatmap_codec.hpp"

namespace diffpose {

// Single-pair PCK: a visible gt joint is correct iff the prediction lies
// within r * diag.  Invisible joints are excluded from numerator and
// denominator; with no visible joint the mean is absent.
struct PckResult {
    std::vector<std::optional<double>> per_joint;
    std::optional<double> mean;
};

PckResult pck(const KeypointSet& pred, const KeypointSet& gt, double diag, double r);

struct MetricReport {
    std::vector<double> thresholds;
    int joint_count = 0;
    int clip_count = 0;
    // per_joint[threshold][joint]; absent when the joint was never visible.
    std::vector<std::vector<std::optional<double>>> per_joint;
    std::vector<std::optional<double>> mean;  // per threshold
    Json config_echo;

    Json to_json() const;
    // Header row, one row per joint, then a `mean` row; absent cells empty.
    std::string to_csv() const;
};

// Matches predictions to ground truth by (image_id, person_id); every gt
// record must have a prediction.  Distances are normalized by the gt bbox
// diagonal.
MetricReport evaluate_predictions(const std::vector<AnnotationRecord>& predictions,
                                  const std::vector<AnnotationRecord>& ground_truth,
                                  const std::vector<double>& thresholds);

}  // namespace diffpose
