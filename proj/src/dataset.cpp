#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "diffpose/dataset.hpp"
#include "diffpose/errors.hpp"
#include "diffpose/parallel.hpp"

namespace diffpose {

namespace {

namespace fs = std::filesystem;

constexpr const char* kDatasetFormatTag = "diffpose-dataset-v1";

std::string clip_dir_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05d", id);
    return buf;
}

std::string frame_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%02d.pgm", index);
    return buf;
}

Json scene_to_json(const SyntheticSceneConfig& s) {
    Json j = Json::object();
    j["joints"] = s.joints;
    j["height"] = s.height;
    j["width"] = s.width;
    j["delta"] = s.delta;
    j["motion_amplitude"] = s.motion_amplitude;
    j["motion_frequency"] = s.motion_frequency;
    j["limb_thickness"] = s.limb_thickness;
    j["blob_radius"] = s.blob_radius;
    j["background_noise_std"] = s.background_noise_std;
    j["occlusion_prob"] = s.occlusion_prob;
    j["frame_corruption_prob"] = s.frame_corruption_prob;
    return j;
}

SyntheticSceneConfig scene_from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("dataset: 'scene' must be a JSON object");
    SyntheticSceneConfig s;
    try {
        s.joints = j.at("joints").get<int>();
        s.height = j.at("height").get<int>();
        s.width = j.at("width").get<int>();
        s.delta = j.at("delta").get<int>();
        s.motion_amplitude = j.at("motion_amplitude").get<double>();
        s.motion_frequency = j.at("motion_frequency").get<double>();
        s.limb_thickness = j.at("limb_thickness").get<double>();
        s.blob_radius = j.at("blob_radius").get<double>();
        s.background_noise_std = j.at("background_noise_std").get<double>();
        s.occlusion_prob = j.at("occlusion_prob").get<double>();
        s.frame_corruption_prob = j.at("frame_corruption_prob").get<double>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("dataset: bad scene config: ") + e.what());
    }
    s.validate();
    return s;
}

Json keypoints_to_json(const KeypointSet& kp) {
    Json arr = Json::array();
    for (const Keypoint& k : kp.joints) {
        Json triple = Json::array();
        triple.push_back(k.x);
        triple.push_back(k.y);
        triple.push_back(k.visible);
        arr.push_back(std::move(triple));
    }
    return arr;
}

KeypointSet keypoints_from_json(const Json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError("dataset: " + where + " must be an array");
    KeypointSet kp;
    for (const Json& triple : arr) {
        if (!triple.is_array() || triple.size() != 3 || !triple[0].is_number() ||
            !triple[1].is_number() || !triple[2].is_boolean())
            throw ParseError("dataset: " + where + " entries must be [x, y, visible]");
        kp.joints.push_back({triple[0].get<double>(), triple[1].get<double>(),
                             triple[2].get<bool>()});
    }
    return kp;
}

void write_json_file(const fs::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("dataset: cannot write '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

Json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("dataset: cannot open '" + path.string() + "'");
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ParseError("dataset: invalid JSON in '" + path.string() + "': " + e.what());
    }
    return j;
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& image) {
    int h = 0;
    int w = 0;
    if (image.shape().size() == 2) {
        h = image.shape()[0];
        w = image.shape()[1];
    } else if (image.shape().size() == 3 && image.shape()[0] == 1) {
        h = image.shape()[1];
        w = image.shape()[2];
    } else {
        throw ShapeError("write_pgm: expected (H,W) or (1,H,W), got " + image.shape_str());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pgm: cannot write '" + path + "'");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::string row(static_cast<std::size_t>(w), '\0');
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = image[static_cast<std::int64_t>(y) * w + x];
            const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
            row[static_cast<std::size_t>(x)] = static_cast<char>(static_cast<unsigned char>(q));
        }
        out.write(row.data(), w);
    }
}

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pgm: cannot open '" + path + "'");
    auto next_token = [&]() -> std::string {
        std::string tok;
        char c;
        while (in.get(c)) {
            if (c == '#') {  // comment to end of line
                while (in.get(c) && c != '\n') {
                }
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(c);
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P5") throw ParseError("read_pgm: '" + path + "' is not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw ParseError("read_pgm: malformed header in '" + path + "'");
    }
    if (w < 1 || h < 1) throw ParseError("read_pgm: bad dimensions in '" + path + "'");
    if (maxval != 255) throw ParseError("read_pgm: only maxval 255 is supported ('" + path + "')");
    std::string bytes(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw ParseError("read_pgm: truncated pixel data in '" + path + "'");
    Tensor img = Tensor::zeros({1, h, w});
    for (std::int64_t i = 0; i < img.numel(); ++i)
        img[i] = static_cast<double>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)])) / 255.0;
    return img;
}

const char* difficulty_name(Difficulty d) { return d == Difficulty::kHard ? "hard" : "easy"; }

Difficulty difficulty_from_name(const std::string& name) {
    if (name == "hard") return Difficulty::kHard;
    if (name == "easy") return Difficulty::kEasy;
    throw ParseError("dataset: unknown difficulty '" + name + "'");
}

SyntheticSceneConfig apply_difficulty(const SyntheticSceneConfig& scene, Difficulty d) {
    if (d == Difficulty::kHard) return scene;
    SyntheticSceneConfig easy = scene;
    easy.motion_amplitude = scene.motion_amplitude * 0.25;
    easy.occlusion_prob = scene.occlusion_prob * 0.2;
    easy.frame_corruption_prob = 0.0;
    return easy;
}

Dataset make_dataset(const SyntheticSceneConfig& scene, int clip_count, double hard_fraction,
                     std::uint64_t seed) {
    scene.validate();
    if (clip_count < 1) throw ConfigError("make_dataset: clip_count must be >= 1");
    if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0))
        throw ConfigError("make_dataset: hard_fraction must lie in [0, 1]");

    // Seeded permutation so the hard clips are spread over the id range but
    // the split is still an exact rounding of the requested fraction.
    const int hard_count = static_cast<int>(std::lround(hard_fraction * clip_count));
    std::vector<int> order(static_cast<std::size_t>(clip_count));
    std::iota(order.begin(), order.end(), 0);
    Rng perm_rng(Rng::derive(seed, 0x03));
    perm_rng.shuffle(order);
    std::vector<Difficulty> difficulty(static_cast<std::size_t>(clip_count), Difficulty::kEasy);
    for (int i = 0; i < hard_count; ++i)
        difficulty[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Difficulty::kHard;

    Dataset ds;
    ds.scene = scene;
    ds.clips.resize(static_cast<std::size_t>(clip_count));
    parallel_for(static_cast<std::size_t>(clip_count), [&](std::size_t i) {
        DatasetClip& c = ds.clips[i];
        c.id = static_cast<int>(i);
        c.difficulty = difficulty[i];
        c.seed = Rng::derive(seed, 0x100 + static_cast<std::uint64_t>(i));
        c.data = generate_synthetic_clip(apply_difficulty(scene, c.difficulty), c.seed);
    });
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root / "clips");

    Json clips = Json::array();
    for (const DatasetClip& c : ds.clips) {
        const std::string name = clip_dir_name(c.id);
        const fs::path cdir = root / "clips" / name;
        fs::create_directories(cdir);
        for (std::size_t f = 0; f < c.data.clip.frames.size(); ++f)
            write_pgm((cdir / frame_file_name(static_cast<int>(f))).string(),
                      c.data.clip.frames[f]);

        Json gt = Json::object();
        gt["bbox"] = Json::array({c.data.bbox.x, c.data.bbox.y, c.data.bbox.w, c.data.bbox.h});
        gt["corrupted_keyframe"] = c.data.corrupted_keyframe;
        Json frames = Json::array();
        for (const KeypointSet& kp : c.data.ground_truth) frames.push_back(keypoints_to_json(kp));
        gt["frames"] = std::move(frames);
        write_json_file(cdir / "gt.json", gt);

        Json entry = Json::object();
        entry["id"] = c.id;
        entry["dir"] = "clips/" + name;
        entry["seed"] = c.seed;
        entry["difficulty"] = difficulty_name(c.difficulty);
        clips.push_back(std::move(entry));
    }

    Json manifest = Json::object();
    manifest["format"] = kDatasetFormatTag;
    manifest["scene"] = scene_to_json(ds.scene);
    manifest["delta"] = ds.scene.delta;
    manifest["clips"] = std::move(clips);
    write_json_file(root / "manifest.json", manifest);

    Json ann = Json::object();
    ann["annotations"] = annotations_to_json(dataset_annotations(ds));
    write_json_file(root / "annotations.json", ann);
}

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const Json manifest = read_json_file(root / "manifest.json");
    if (!manifest.is_object() || manifest.value("format", "") != kDatasetFormatTag)
        throw ParseError("dataset: unrecognized manifest format in '" + dir + "'");

    Dataset ds;
    ds.scene = scene_from_json(manifest.at("scene"));
    const Json& clips = manifest.at("clips");
    if (!clips.is_array()) throw ParseError("dataset: manifest 'clips' must be an array");

    for (const Json& entry : clips) {
        DatasetClip c;
        try {
            c.id = entry.at("id").get<int>();
            c.seed = entry.at("seed").get<std::uint64_t>();
            c.difficulty = difficulty_from_name(entry.at("difficulty").get<std::string>());
        } catch (const Json::exception& e) {
            throw ParseError(std::string("dataset: bad clip entry: ") + e.what());
        }
        const fs::path cdir = root / entry.value("dir", "clips/" + clip_dir_name(c.id));

        c.data.clip.delta = ds.scene.delta;
        const int frame_count = 2 * ds.scene.delta + 1;
        for (int f = 0; f < frame_count; ++f)
            c.data.clip.frames.push_back(read_pgm((cdir / frame_file_name(f)).string()));

        const Json gt = read_json_file(cdir / "gt.json");
        const Json& box = gt.at("bbox");
        if (!box.is_array() || box.size() != 4)
            throw ParseError("dataset: gt bbox must be [x, y, w, h]");
        c.data.bbox = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                       box[3].get<double>()};
        c.data.corrupted_keyframe = gt.value("corrupted_keyframe", false);
        for (const Json& kp : gt.at("frames"))
            c.data.ground_truth.push_back(keypoints_from_json(kp, "gt frame keypoints"));
        if (static_cast<int>(c.data.ground_truth.size()) != frame_count)
            throw ParseError("dataset: gt frame count mismatch in '" + cdir.string() + "'");

        ds.clips.push_back(std::move(c));
    }
    return ds;
}

std::vector<AnnotationRecord> dataset_annotations(const Dataset& ds) {
    std::vector<AnnotationRecord> records;
    records.reserve(ds.clips.size());
    for (const DatasetClip& c : ds.clips) {
        const KeypointSet& kp = c.data.ground_truth[static_cast<std::size_t>(c.data.clip.keyframe())];
        records.push_back(AnnotationRecord::from_keypoints(clip_dir_name(c.id), 0, c.data.bbox, kp));
    }
    return records;
}

KeypointSet input_to_heatmap(const KeypointSet& kp, int in_h, int in_w, int hm_h, int hm_w) {
    const double sx = static_cast<double>(hm_w) / in_w;
    const double sy = static_cast<double>(hm_h) / in_h;
    KeypointSet out = kp;
    for (Keypoint& k : out.joints) {
        k.x = (k.x + 0.5) * sx - 0.5;
        k.y = (k.y + 0.5) * sy - 0.5;
    }
    return out;
}

KeypointSet heatmap_to_input(const KeypointSet& kp, int in_h, int in_w, int hm_h, int hm_w) {
    const double sx = static_cast<double>(hm_w) / in_w;
    const double sy = static_cast<double>(hm_h) / in_h;
    KeypointSet out = kp;
    for (Keypoint& k : out.joints) {
        k.x = (k.x + 0.5) / sx - 0.5;
        k.y = (k.y + 0.5) / sy - 0.5;
    }
    return out;
}

std::vector<PreparedClip> prepare_clips(const Dataset& ds, const PipelineConfig& cfg) {
    std::vector<PreparedClip> out(ds.clips.size());
    parallel_for(ds.clips.size(), [&](std::size_t i) {
        const DatasetClip& c = ds.clips[i];
        PreparedClip& p = out[i];
        p.id = c.id;
        p.difficulty = c.difficulty;
        p.corrupted_keyframe = c.data.corrupted_keyframe;
        p.bbox = c.data.bbox;
        // A model with a narrower temporal window than the dataset trains on
        // the centered sub-window; a wider one has nothing to read.
        const int ds_delta = c.data.clip.delta;
        if (cfg.delta > ds_delta)
            throw ConfigError("prepare_clips: config delta " + std::to_string(cfg.delta) +
                              " exceeds dataset delta " + std::to_string(ds_delta));
        ClipTensor window;
        window.delta = cfg.delta;
        for (int f = ds_delta - cfg.delta; f <= ds_delta + cfg.delta; ++f)
            window.frames.push_back(c.data.clip.frames[static_cast<std::size_t>(f)]);
        p.sample.clip =
            crop_person_clip(window, c.data.bbox, cfg.input_height, cfg.input_width, &p.crop);
        const KeypointSet& scene_kp =
            c.data.ground_truth[static_cast<std::size_t>(c.data.clip.keyframe())];
        KeypointSet input_kp = scene_kp;
        for (Keypoint& k : input_kp.joints) p.crop.to_crop(k.x, k.y, k.x, k.y);
        p.sample.gt = input_to_heatmap(input_kp, cfg.input_height, cfg.input_width,
                                       cfg.heatmap_height, cfg.heatmap_width);
    });
    return out;
}

}  // namespace diffpose
