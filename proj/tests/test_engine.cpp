#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "diffpose/engine.hpp"

using namespace diffpose;
namespace fs = std::filesystem;

namespace {

// Small enough to train in milliseconds, while exercising every module.
PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.seed = 3;
    cfg.joints = 2;
    cfg.scene_height = 48;
    cfg.scene_width = 36;
    cfg.input_height = 16;
    cfg.input_width = 12;
    cfg.heatmap_height = 16;
    cfg.heatmap_width = 12;
    cfg.delta = 0;
    cfg.diffusion_steps = 50;
    cfg.patch_size = 4;  // 4x3 grid == coarsest pyramid level
    cfg.embed_dim = 16;
    cfg.backbone_layers = 1;
    cfg.fusion_layers = 1;
    cfg.num_heads = 2;
    cfg.cond_channels = 8;
    cfg.level1_channels = 8;
    cfg.level2_channels = 8;
    cfg.level3_channels = 4;
    cfg.seref_channels = 4;
    cfg.fusion_depth = 1;
    cfg.head_channels = 8;
    cfg.step_embed_dim = 16;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.base_lr = 1e-3;
    cfg.lr_decay_epochs = {};
    cfg.infer_steps = 2;
    cfg.ensemble_size = 2;
    cfg.validate();
    return cfg;
}

TrainSample make_sample(const PipelineConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    TrainSample s;
    s.clip.delta = cfg.delta;
    for (int f = 0; f < 2 * cfg.delta + 1; ++f) {
        Tensor frame = Tensor::zeros({1, cfg.input_height, cfg.input_width});
        for (std::int64_t i = 0; i < frame.numel(); ++i) frame[i] = rng.uniform();
        s.clip.frames.push_back(std::move(frame));
    }
    for (int j = 0; j < cfg.joints; ++j)
        s.gt.joints.push_back({rng.uniform(1.0, cfg.heatmap_width - 1.0),
                               rng.uniform(1.0, cfg.heatmap_height - 1.0), true});
    return s;
}

std::vector<double> snapshot(Model& m) {
    std::vector<double> out;
    m.visit([&](const std::string&, ad::Param& p) {
        out.insert(out.end(), p.value.vec().begin(), p.value.vec().end());
    });
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("model: deterministic build and a stable parameter count") {
    PipelineConfig cfg = tiny_config();
    Model a = Model::build(cfg);
    Model b = Model::build(cfg);
    CHECK(a.param_count() > 0);
    CHECK(a.param_count() == b.param_count());
    CHECK(snapshot(a) == snapshot(b));

    // visit exposes every parameter under a unique name
    std::vector<std::string> names;
    a.visit([&](const std::string& n, ad::Param&) { names.push_back(n); });
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

    cfg.seed = 4;
    Model c = Model::build(cfg);
    CHECK(snapshot(a) != snapshot(c));
}

TEST_CASE("train_step: finite loss, parameters move, empty batch rejected") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    AdamW adam(0.9, 0.999, 1e-8, cfg.weight_decay);
    TrainSample s0 = make_sample(cfg, 10);
    TrainSample s1 = make_sample(cfg, 11);
    std::vector<const TrainSample*> batch{&s0, &s1};

    const std::vector<double> before = snapshot(model);
    Rng rng(5);
    const double loss = train_step(model, batch, adam, cfg.base_lr, rng);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    CHECK(adam.step_count() == 1);
    CHECK(snapshot(model) != before);

    std::vector<const TrainSample*> empty;
    CHECK_THROWS_AS(train_step(model, empty, adam, cfg.base_lr, rng), ConfigError);
}

TEST_CASE("train_step: result is independent of the worker count") {
    PipelineConfig cfg = tiny_config();
    TrainSample s0 = make_sample(cfg, 10);
    TrainSample s1 = make_sample(cfg, 11);
    TrainSample s2 = make_sample(cfg, 12);
    std::vector<const TrainSample*> batch{&s0, &s1, &s2};

    auto run = [&](const char* threads) {
        setenv("DIFFPOSE_THREADS", threads, 1);
        Model model = Model::build(cfg);
        AdamW adam(0.9, 0.999, 1e-8, cfg.weight_decay);
        Rng rng(5);
        const double loss = train_step(model, batch, adam, cfg.base_lr, rng);
        unsetenv("DIFFPOSE_THREADS");
        return std::make_pair(loss, snapshot(model));
    };
    const auto serial = run("1");
    const auto threaded = run("3");
    CHECK(serial.first == threaded.first);
    CHECK(serial.second == threaded.second);
}

TEST_CASE("adamw: zero gradients apply exactly the decoupled decay") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    AdamW adam(0.9, 0.999, 1e-8, 1e-2);
    const double lr = 0.5;

    const std::vector<double> before = snapshot(model);
    adam.zero_grad(model);
    adam.step(model, lr);
    CHECK(adam.step_count() == 1);

    const std::vector<double> after = snapshot(model);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double expect = before[i] - lr * (1e-2 * before[i]);
        REQUIRE(after[i] == expect);
    }

    // With no gradient signal the moments stay identically zero.
    model.visit([&](const std::string&, ad::Param& p) {
        for (std::int64_t i = 0; i < p.m.numel(); ++i) {
            REQUIRE(p.m[i] == 0.0);
            REQUIRE(p.v[i] == 0.0);
        }
    });
}

TEST_CASE("train: epoch loop drives hooks with the scheduled lr") {
    PipelineConfig cfg = tiny_config();
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.lr_decay_epochs = {3};
    Model model = Model::build(cfg);
    AdamW adam(0.9, 0.999, 1e-8, cfg.weight_decay);
    std::vector<TrainSample> data;
    for (int i = 0; i < 5; ++i) data.push_back(make_sample(cfg, 20 + static_cast<std::uint64_t>(i)));

    std::vector<double> lrs;
    std::vector<std::int64_t> steps;
    int epochs_seen = 0;
    TrainHooks hooks;
    hooks.on_step = [&](int, std::int64_t step, double lr, double loss) {
        steps.push_back(step);
        lrs.push_back(lr);
        CHECK(std::isfinite(loss));
    };
    hooks.on_epoch_end = [&](int) { ++epochs_seen; };
    train(model, data, adam, hooks);

    // 5 samples at batch 2 -> 3 steps per epoch, 3 epochs.
    REQUIRE(steps.size() == 9);
    CHECK(epochs_seen == 3);
    for (std::size_t i = 0; i < steps.size(); ++i)
        CHECK(steps[i] == static_cast<std::int64_t>(i + 1));
    CHECK(lrs[0] == cfg.base_lr);
    CHECK(lrs[5] == cfg.base_lr);         // epoch 2
    CHECK(lrs[6] == cfg.base_lr * 0.1);   // epoch 3, decayed
    CHECK(adam.step_count() == 9);

    CHECK_THROWS_AS(train(model, {}, adam), ConfigError);
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    AdamW adam(0.9, 0.999, 1e-8, cfg.weight_decay);
    TrainSample s0 = make_sample(cfg, 10);
    std::vector<const TrainSample*> batch{&s0};
    Rng rng(5);
    train_step(model, batch, adam, cfg.base_lr, rng);
    train_step(model, batch, adam, cfg.base_lr, rng);

    const fs::path d1 = fs::temp_directory_path() / "diffpose_test_ckpt1";
    const fs::path d2 = fs::temp_directory_path() / "diffpose_test_ckpt2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    save_checkpoint(model, adam, 7, d1.string());
    REQUIRE(fs::exists(d1 / "manifest.json"));
    REQUIRE(fs::exists(d1 / "params.bin"));

    LoadedCheckpoint loaded = load_checkpoint(d1.string());
    CHECK(loaded.epoch == 7);
    CHECK(loaded.adam.step_count() == 2);
    CHECK(loaded.adam.weight_decay() == cfg.weight_decay);
    CHECK(loaded.model.config.to_json() == model.config.to_json());
    CHECK(loaded.model.param_count() == model.param_count());

    // Values survive as float32: reloading must reproduce the rounded value.
    std::vector<double> orig = snapshot(model);
    std::vector<double> back = snapshot(loaded.model);
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i)
        REQUIRE(back[i] == static_cast<double>(static_cast<float>(orig[i])));

    save_checkpoint(loaded.model, loaded.adam, loaded.epoch, d2.string());
    CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
    CHECK(slurp(d1 / "params.bin") == slurp(d2 / "params.bin"));

    // Corrupted inputs are rejected.
    CHECK_THROWS_AS(load_checkpoint((fs::temp_directory_path() / "diffpose_no_ckpt").string()),
                    IoError);
    const std::string blob = slurp(d1 / "params.bin");
    {
        std::ofstream out(d1 / "params.bin", std::ios::binary);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size() - 4));
    }
    CHECK_THROWS_AS(load_checkpoint(d1.string()), ParseError);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("condition: shape, determinism and finite values") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    TrainSample s = make_sample(cfg, 33);
    Tensor cond = compute_condition(model, s.clip);
    CHECK(cond.shape() == std::vector<int>{cfg.cond_channels, 4, 3});
    CHECK(cond.all_finite());
    Tensor again = compute_condition(model, s.clip);
    CHECK(cond.vec() == again.vec());
}

TEST_CASE("sample_pose: single group reproduces the manual DDIM chain") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    TrainSample s = make_sample(cfg, 33);
    const Tensor cond = compute_condition(model, s.clip);
    const double scale = model.codec.signal_scale;

    InferenceOptions opts;
    opts.steps = 2;
    opts.ensemble = 1;
    Rng rng_a(99);
    const Tensor via_engine = sample_pose(model, cond, opts, rng_a);

    Rng rng_b(99);
    const std::vector<int> shape{model.codec.joints, model.codec.height, model.codec.width};
    Tensor x = rng_b.normal_tensor(shape);
    const SamplingPlan plan = make_sampling_plan(model.schedule.T, opts.steps);
    REQUIRE(plan.pairs.size() == 2);
    for (const auto& [t_now, t_next] : plan.pairs) {
        Tensor x0_hat = model.decoder.forward(x, cond, t_now);
        for (std::int64_t i = 0; i < x0_hat.numel(); ++i)
            x0_hat[i] = std::clamp(x0_hat[i], -scale, scale);
        x = ddim_step(x, x0_hat, t_now, t_next, model.schedule);
    }
    const Tensor manual = denormalize_from_diffusion(x, model.codec);
    CHECK(via_engine.vec() == manual.vec());

    // Output lives in heatmap domain after denormalization.
    for (std::int64_t i = 0; i < via_engine.numel(); ++i) {
        CHECK(via_engine[i] >= 0.0);
        CHECK(via_engine[i] <= model.codec.amplitude);
    }
}

TEST_CASE("sample_pose: ensembling is the running mean over group results") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    TrainSample s = make_sample(cfg, 34);
    const Tensor cond = compute_condition(model, s.clip);
    const double scale = model.codec.signal_scale;
    const std::vector<int> shape{model.codec.joints, model.codec.height, model.codec.width};
    const SamplingPlan plan = make_sampling_plan(model.schedule.T, 2);

    auto chain = [&](const Tensor& noise) {
        Tensor x = noise;
        for (const auto& [t_now, t_next] : plan.pairs) {
            Tensor x0_hat = model.decoder.forward(x, cond, t_now);
            for (std::int64_t i = 0; i < x0_hat.numel(); ++i)
                x0_hat[i] = std::clamp(x0_hat[i], -scale, scale);
            x = ddim_step(x, x0_hat, t_now, t_next, model.schedule);
        }
        return denormalize_from_diffusion(x, model.codec);
    };

    InferenceOptions opts;
    opts.steps = 2;
    opts.ensemble = 2;
    Rng rng_a(123);
    const Tensor via_engine = sample_pose(model, cond, opts, rng_a);

    // The engine draws all group noises up front, then averages in order.
    Rng rng_b(123);
    const Tensor n0 = rng_b.normal_tensor(shape);
    const Tensor n1 = rng_b.normal_tensor(shape);
    Tensor mean = chain(n0);
    const Tensor h1 = chain(n1);
    const double inv = 1.0 / 2.0;
    for (std::int64_t i = 0; i < mean.numel(); ++i) mean[i] += (h1[i] - mean[i]) * inv;
    CHECK(via_engine.vec() == mean.vec());
}

TEST_CASE("sample_pose: rejects degenerate options") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    const Tensor cond = Tensor::zeros({cfg.cond_channels, 4, 3});
    Rng rng(1);
    InferenceOptions opts;
    opts.steps = 0;
    CHECK_THROWS_AS(sample_pose(model, cond, opts, rng), ConfigError);
    opts.steps = 2;
    opts.ensemble = 0;
    CHECK_THROWS_AS(sample_pose(model, cond, opts, rng), ConfigError);
}

TEST_CASE("predict_keypoints: deterministic, in-range heatmap coordinates") {
    PipelineConfig cfg = tiny_config();
    Model model = Model::build(cfg);
    TrainSample s = make_sample(cfg, 35);
    InferenceOptions opts;
    opts.steps = 2;
    opts.ensemble = 2;

    Rng r1(7);
    KeypointSet a = predict_keypoints(model, s.clip, opts, r1);
    REQUIRE(static_cast<int>(a.joints.size()) == cfg.joints);
    for (const Keypoint& kp : a.joints) {
        CHECK(kp.x >= -0.25);
        CHECK(kp.x <= cfg.heatmap_width - 1 + 0.25);
        CHECK(kp.y >= -0.25);
        CHECK(kp.y <= cfg.heatmap_height - 1 + 0.25);
    }

    Rng r2(7);
    KeypointSet b = predict_keypoints(model, s.clip, opts, r2);
    for (std::size_t j = 0; j < a.joints.size(); ++j) {
        CHECK(a.joints[j].x == b.joints[j].x);
        CHECK(a.joints[j].y == b.joints[j].y);
        CHECK(a.joints[j].visible == b.joints[j].visible);
    }
}
