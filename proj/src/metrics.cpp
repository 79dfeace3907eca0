#include "diffpose/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "diffpose/errors.hpp"

namespace diffpose {

PckResult pck(const KeypointSet& pred, const KeypointSet& gt, double diag, double r) {
    if (pred.joints.size() != gt.joints.size())
        throw ShapeError("pck: prediction and ground truth joint counts differ");
    if (!(r > 0.0)) throw RangeError("pck: threshold r must be positive");
    if (!(diag > 0.0)) throw RangeError("pck: bbox diagonal must be positive");
    PckResult out;
    out.per_joint.resize(pred.joints.size());
    double sum = 0.0;
    int visible = 0;
    for (std::size_t j = 0; j < gt.joints.size(); ++j) {
        if (!gt.joints[j].visible) continue;
        const double dx = pred.joints[j].x - gt.joints[j].x;
        const double dy = pred.joints[j].y - gt.joints[j].y;
        const double hit = std::sqrt(dx * dx + dy * dy) <= r * diag ? 1.0 : 0.0;
        out.per_joint[j] = hit;
        sum += hit;
        ++visible;
    }
    if (visible > 0) out.mean = sum / visible;
    return out;
}

MetricReport evaluate_predictions(const std::vector<AnnotationRecord>& predictions,
                                  const std::vector<AnnotationRecord>& ground_truth,
                                  const std::vector<double>& thresholds) {
    if (ground_truth.empty()) throw ConfigError("evaluate: ground truth is empty");
    if (thresholds.empty()) throw ConfigError("evaluate: no thresholds given");
    const int k = ground_truth.front().joint_count();
    std::map<std::pair<std::string, int>, const AnnotationRecord*> by_id;
    for (const AnnotationRecord& p : predictions) {
        if (!by_id.emplace(std::make_pair(p.image_id, p.person_id), &p).second)
            throw ConfigError("evaluate: duplicate prediction for image '" + p.image_id + "'");
    }

    // hits[threshold][joint], totals[joint]
    std::vector<std::vector<std::int64_t>> hits(thresholds.size(),
                                                std::vector<std::int64_t>(static_cast<std::size_t>(k), 0));
    std::vector<std::int64_t> totals(static_cast<std::size_t>(k), 0);
    for (const AnnotationRecord& gt : ground_truth) {
        if (gt.joint_count() != k)
            throw ShapeError("evaluate: inconsistent joint count in ground truth");
        auto it = by_id.find(std::make_pair(gt.image_id, gt.person_id));
        if (it == by_id.end())
            throw ConfigError("evaluate: no prediction for image '" + gt.image_id + "' person " +
                              std::to_string(gt.person_id));
        const AnnotationRecord& pr = *it->second;
        if (pr.joint_count() != k)
            throw ShapeError("evaluate: prediction joint count mismatch for '" + gt.image_id + "'");
        const KeypointSet gt_kp = gt.to_keypoints();
        const KeypointSet pr_kp = pr.to_keypoints();
        const double diag = gt.bbox.diag();
        for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
            const PckResult res = pck(pr_kp, gt_kp, diag, thresholds[ti]);
            for (int j = 0; j < k; ++j)
                if (res.per_joint[static_cast<std::size_t>(j)].has_value() &&
                    *res.per_joint[static_cast<std::size_t>(j)] > 0.5)
                    ++hits[ti][static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < k; ++j)
            if (gt_kp.joints[static_cast<std::size_t>(j)].visible) ++totals[static_cast<std::size_t>(j)];
    }

    MetricReport rep;
    rep.thresholds = thresholds;
    rep.joint_count = k;
    rep.clip_count = static_cast<int>(ground_truth.size());
    rep.per_joint.resize(thresholds.size());
    rep.mean.resize(thresholds.size());
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        rep.per_joint[ti].resize(static_cast<std::size_t>(k));
        double sum = 0.0;
        int evaluated = 0;
        for (int j = 0; j < k; ++j) {
            if (totals[static_cast<std::size_t>(j)] == 0) continue;
            const double v = static_cast<double>(hits[ti][static_cast<std::size_t>(j)]) /
                             static_cast<double>(totals[static_cast<std::size_t>(j)]);
            rep.per_joint[ti][static_cast<std::size_t>(j)] = v;
            sum += v;
            ++evaluated;
        }
        if (evaluated > 0) rep.mean[ti] = sum / evaluated;
    }
    return rep;
}

Json MetricReport::to_json() const {
    Json j = Json::object();
    j["clip_count"] = clip_count;
    j["joint_count"] = joint_count;
    Json table = Json::array();
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        Json row = Json::object();
        row["threshold"] = thresholds[ti];
        Json joints = Json::array();
        for (const auto& v : per_joint[ti]) {
            if (v.has_value()) joints.push_back(*v);
            else joints.push_back(nullptr);
        }
        row["per_joint"] = std::move(joints);
        if (mean[ti].has_value()) row["mean"] = *mean[ti];
        else row["mean"] = nullptr;
        table.push_back(std::move(row));
    }
    j["pck"] = std::move(table);
    if (!config_echo.is_null()) j["config"] = config_echo;
    return j;
}

std::string MetricReport::to_csv() const {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    std::string csv = "joint";
    for (double r : thresholds) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "pck@%g", r);
        csv += ",";
        csv += buf;
    }
    csv += "\n";
    for (int j = 0; j < joint_count; ++j) {
        csv += "joint_" + std::to_string(j);
        for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
            csv += ",";
            if (per_joint[ti][static_cast<std::size_t>(j)].has_value())
                csv += fmt(*per_joint[ti][static_cast<std::size_t>(j)]);
        }
        csv += "\n";
    }
    csv += "mean";
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        csv += ",";
        if (mean[ti].has_value()) csv += fmt(*mean[ti]);
    }
    csv += "\n";
    return csv;
}

}  // namespace diffpose
