// Python surface over the core operations: config, schedule, codec, sampler
// steps, synthetic data, and metrics.  Arrays cross the boundary as
// C-contiguous float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffpose/dataset.hpp"
#include "diffpose/diffusion.hpp"
#include "diffpose/engine.hpp"
#include "diffpose/heatmap_codec.hpp"
#include "diffpose/metrics.hpp"
#include "diffpose/synthetic.hpp"

namespace py = pybind11;
using namespace diffpose;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const Array& a) {
    std::vector<int> shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape[static_cast<std::size_t>(i)] = static_cast<int>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from(std::move(shape), std::move(data));
}

Array array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

KeypointSet keypoints_from_array(const Array& a) {
    if (a.ndim() != 2 || a.shape(1) != 3)
        throw ShapeError("keypoints array must have shape (K, 3): x, y, visible");
    KeypointSet kp;
    for (py::ssize_t k = 0; k < a.shape(0); ++k)
        kp.joints.push_back({a.at(k, 0), a.at(k, 1), a.at(k, 2) != 0.0});
    return kp;
}

Array array_from_keypoints(const KeypointSet& kp) {
    Array a({static_cast<py::ssize_t>(kp.joints.size()), static_cast<py::ssize_t>(3)});
    for (std::size_t k = 0; k < kp.joints.size(); ++k) {
        a.mutable_at(static_cast<py::ssize_t>(k), 0) = kp.joints[k].x;
        a.mutable_at(static_cast<py::ssize_t>(k), 1) = kp.joints[k].y;
        a.mutable_at(static_cast<py::ssize_t>(k), 2) = kp.joints[k].visible ? 1.0 : 0.0;
    }
    return a;
}

}  // namespace

PYBIND11_MODULE(_diffpose, m) {
    m.doc() = "Video pose estimation via conditional heatmap diffusion";
    m.attr("__version__") = "0.1.0";

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_readwrite("seed", &PipelineConfig::seed)
        .def_readwrite("joints", &PipelineConfig::joints)
        .def_readwrite("scene_height", &PipelineConfig::scene_height)
        .def_readwrite("scene_width", &PipelineConfig::scene_width)
        .def_readwrite("input_height", &PipelineConfig::input_height)
        .def_readwrite("input_width", &PipelineConfig::input_width)
        .def_readwrite("heatmap_height", &PipelineConfig::heatmap_height)
        .def_readwrite("heatmap_width", &PipelineConfig::heatmap_width)
        .def_readwrite("sigma", &PipelineConfig::sigma)
        .def_readwrite("amplitude", &PipelineConfig::amplitude)
        .def_readwrite("signal_scale", &PipelineConfig::signal_scale)
        .def_readwrite("visibility_threshold", &PipelineConfig::visibility_threshold)
        .def_readwrite("delta", &PipelineConfig::delta)
        .def_readwrite("motion_amplitude", &PipelineConfig::motion_amplitude)
        .def_readwrite("motion_frequency", &PipelineConfig::motion_frequency)
        .def_readwrite("limb_thickness", &PipelineConfig::limb_thickness)
        .def_readwrite("blob_radius", &PipelineConfig::blob_radius)
        .def_readwrite("background_noise_std", &PipelineConfig::background_noise_std)
        .def_readwrite("occlusion_prob", &PipelineConfig::occlusion_prob)
        .def_readwrite("frame_corruption_prob", &PipelineConfig::frame_corruption_prob)
        .def_readwrite("hard_fraction", &PipelineConfig::hard_fraction)
        .def_readwrite("diffusion_steps", &PipelineConfig::diffusion_steps)
        .def_readwrite("schedule_offset", &PipelineConfig::schedule_offset)
        .def_readwrite("patch_size", &PipelineConfig::patch_size)
        .def_readwrite("embed_dim", &PipelineConfig::embed_dim)
        .def_readwrite("backbone_layers", &PipelineConfig::backbone_layers)
        .def_readwrite("fusion_layers", &PipelineConfig::fusion_layers)
        .def_readwrite("num_heads", &PipelineConfig::num_heads)
        .def_readwrite("cond_channels", &PipelineConfig::cond_channels)
        .def_readwrite("level1_channels", &PipelineConfig::level1_channels)
        .def_readwrite("level2_channels", &PipelineConfig::level2_channels)
        .def_readwrite("level3_channels", &PipelineConfig::level3_channels)
        .def_readwrite("seref_channels", &PipelineConfig::seref_channels)
        .def_readwrite("fusion_depth", &PipelineConfig::fusion_depth)
        .def_readwrite("head_channels", &PipelineConfig::head_channels)
        .def_readwrite("step_embed_dim", &PipelineConfig::step_embed_dim)
        .def_readwrite("epochs", &PipelineConfig::epochs)
        .def_readwrite("batch_size", &PipelineConfig::batch_size)
        .def_readwrite("base_lr", &PipelineConfig::base_lr)
        .def_readwrite("weight_decay", &PipelineConfig::weight_decay)
        .def_readwrite("lr_decay_epochs", &PipelineConfig::lr_decay_epochs)
        .def_readwrite("infer_steps", &PipelineConfig::infer_steps)
        .def_readwrite("ensemble_size", &PipelineConfig::ensemble_size)
        .def("validate", &PipelineConfig::validate)
        .def("to_json", [](const PipelineConfig& c) { return c.to_json().dump(2); })
        .def_static("from_json",
                    [](const std::string& s) { return PipelineConfig::from_json(Json::parse(s)); })
        .def_static("load", &PipelineConfig::load)
        .def("save", &PipelineConfig::save);

    m.def(
        "cosine_alpha_bar",
        [](int total_steps, double offset) {
            const NoiseSchedule s = build_cosine_schedule(total_steps, offset);
            return s.alpha_bar;
        },
        py::arg("total_steps"), py::arg("offset") = 0.008,
        "Cumulative signal fractions alpha_bar[0..T] of the cosine schedule");

    m.def(
        "sampling_plan",
        [](int total_steps, int steps) {
            const SamplingPlan plan = make_sampling_plan(total_steps, steps);
            return plan.pairs;
        },
        py::arg("total_steps"), py::arg("steps"),
        "Descending (t_now, t_next) pairs ending at -1");

    m.def(
        "forward_diffuse",
        [](const Array& x0, const Array& eps, int t, int total_steps, double offset) {
            const NoiseSchedule s = build_cosine_schedule(total_steps, offset);
            return array_from_tensor(
                forward_diffuse(tensor_from_array(x0), t, tensor_from_array(eps), s));
        },
        py::arg("x0"), py::arg("eps"), py::arg("t"), py::arg("total_steps") = 1000,
        py::arg("offset") = 0.008);

    m.def(
        "ddim_step",
        [](const Array& x_t, const Array& x0_hat, int t_now, int t_next, int total_steps,
           double offset) {
            const NoiseSchedule s = build_cosine_schedule(total_steps, offset);
            return array_from_tensor(
                ddim_step(tensor_from_array(x_t), tensor_from_array(x0_hat), t_now, t_next, s));
        },
        py::arg("x_t"), py::arg("x0_hat"), py::arg("t_now"), py::arg("t_next"),
        py::arg("total_steps") = 1000, py::arg("offset") = 0.008);

    m.def(
        "encode_heatmaps",
        [](const Array& keypoints, const PipelineConfig& cfg) {
            return array_from_tensor(encode_heatmaps(keypoints_from_array(keypoints), cfg.codec()));
        },
        py::arg("keypoints"), py::arg("config"),
        "Render (K, 3) keypoints to (K, H, W) Gaussian heatmaps");

    m.def(
        "decode_keypoints",
        [](const Array& heatmap, const PipelineConfig& cfg) {
            return array_from_keypoints(decode_keypoints(tensor_from_array(heatmap), cfg.codec()));
        },
        py::arg("heatmap"), py::arg("config"),
        "Argmax-decode (K, H, W) heatmaps to (K, 3) keypoints");

    m.def(
        "generate_clip",
        [](const PipelineConfig& cfg, std::uint64_t seed) {
            const SyntheticClip clip =
                generate_synthetic_clip(SyntheticSceneConfig::from_pipeline(cfg), seed);
            const int frames = static_cast<int>(clip.clip.frames.size());
            const int h = clip.clip.frames[0].dim(1);
            const int w = clip.clip.frames[0].dim(2);
            Array stack({static_cast<py::ssize_t>(frames), static_cast<py::ssize_t>(h),
                         static_cast<py::ssize_t>(w)});
            for (int f = 0; f < frames; ++f)
                std::copy(clip.clip.frames[static_cast<std::size_t>(f)].data(),
                          clip.clip.frames[static_cast<std::size_t>(f)].data() +
                              static_cast<std::int64_t>(h) * w,
                          stack.mutable_data() + static_cast<py::ssize_t>(f) * h * w);
            py::list gt;
            for (const KeypointSet& kp : clip.ground_truth) gt.append(array_from_keypoints(kp));
            py::dict out;
            out["frames"] = std::move(stack);
            out["keypoints"] = std::move(gt);
            out["bbox"] = py::make_tuple(clip.bbox.x, clip.bbox.y, clip.bbox.w, clip.bbox.h);
            out["corrupted_keyframe"] = clip.corrupted_keyframe;
            return out;
        },
        py::arg("config"), py::arg("seed"),
        "Deterministic synthetic clip: frames (F, H, W), per-frame keypoints, bbox");

    m.def(
        "make_dataset",
        [](const PipelineConfig& cfg, int clips, double hard_fraction, std::uint64_t seed,
           const std::string& out_dir) {
            const Dataset ds =
                make_dataset(SyntheticSceneConfig::from_pipeline(cfg), clips, hard_fraction, seed);
            write_dataset(ds, out_dir);
            return static_cast<int>(ds.clips.size());
        },
        py::arg("config"), py::arg("clips"), py::arg("hard_fraction"), py::arg("seed"),
        py::arg("out_dir"), "Generate and write a dataset; returns the clip count");

    m.def(
        "pck_mean",
        [](const Array& pred, const Array& gt, double diag, double r) -> py::object {
            const PckResult res =
                pck(keypoints_from_array(pred), keypoints_from_array(gt), diag, r);
            if (!res.mean) return py::none();
            return py::float_(*res.mean);
        },
        py::arg("pred"), py::arg("gt"), py::arg("diag"), py::arg("r"),
        "Mean PCK over visible joints; None when no joint is visible");

    m.def(
        "param_count",
        [](const PipelineConfig& cfg) {
            Model model = Model::build(cfg);
            return model.param_count();
        },
        py::arg("config"), "Parameter count of the model the config describes");
}
