#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffpose/annotations.hpp"
#include "diffpose/config.hpp"
#include "diffpose/crop.hpp"
#include "diffpose/engine.hpp"
#include "diffpose/synthetic.hpp"

namespace diffpose {

// Binary PGM (P5, maxval 255).  Frames store values as n/255, so a write/read
// cycle is exact for anything that came out of the synthetic generator.
void write_pgm(const std::string& path, const Tensor& image);
Tensor read_pgm(const std::string& path);

enum class Difficulty { kEasy, kHard };

const char* difficulty_name(Difficulty d);
Difficulty difficulty_from_name(const std::string& name);

// Easy clips tone down the stress knobs: slower motion, rare occlusion, no
// frame corruption.  Hard clips use the base scene values unchanged.
SyntheticSceneConfig apply_difficulty(const SyntheticSceneConfig& scene, Difficulty d);

struct DatasetClip {
    int id = 0;
    std::uint64_t seed = 0;
    Difficulty difficulty = Difficulty::kEasy;
    SyntheticClip data;
};

struct Dataset {
    SyntheticSceneConfig scene;  // base (hard) knob set
    std::vector<DatasetClip> clips;
};

// Deterministic generation: clip i uses a seed derived from (seed, i), and the
// hard/easy split is a seeded permutation rounding hard_fraction * clip_count.
Dataset make_dataset(const SyntheticSceneConfig& scene, int clip_count, double hard_fraction,
                     std::uint64_t seed);

// Layout: manifest.json + annotations.json + clips/clip_%05d/{frame_%02d.pgm,
// gt.json}.  write -> load -> write is byte-identical.
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Keyframe annotations (scene coordinates, image_id = clip id, person_id = 0).
std::vector<AnnotationRecord> dataset_annotations(const Dataset& ds);

// Keypoint scaling between the cropped input image and the heatmap grid
// (pixel-center convention, matching the crop resampler).
KeypointSet input_to_heatmap(const KeypointSet& kp, int in_h, int in_w, int hm_h, int hm_w);
KeypointSet heatmap_to_input(const KeypointSet& kp, int in_h, int in_w, int hm_h, int hm_w);

// A dataset clip after crop + coordinate conversion: ready to train on, with
// the transform kept so predictions can be mapped back to scene coordinates.
struct PreparedClip {
    int id = 0;
    Difficulty difficulty = Difficulty::kEasy;
    bool corrupted_keyframe = false;
    BBox bbox;
    TrainSample sample;  // cropped clip + keyframe gt in heatmap coordinates
    CropTransform crop;  // scene <-> input map
};

std::vector<PreparedClip> prepare_clips(const Dataset& ds, const PipelineConfig& cfg);

}  // namespace diffpose
