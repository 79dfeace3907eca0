#include "diffpose/engine.hpp"

#include <cmath>
#include <memory>

#include "diffpose/errors.hpp"
#include "diffpose/parallel.hpp"

namespace diffpose {

namespace {

// Independent random streams per purpose, all derived from the config seed.
constexpr std::uint64_t kInitStream = 0x01;
constexpr std::uint64_t kTrainStream = 0x02;

}  // namespace

Model Model::build(const PipelineConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(Rng::derive(config.seed, kInitStream));
    m.strl.init(config.strl(), rng);
    m.decoder.init(config.decoder(), rng);
    m.codec = config.codec();
    m.schedule = build_cosine_schedule(config.diffusion_steps, config.schedule_offset);
    return m;
}

void Model::visit(const nn::ParamFn& f) {
    strl.visit("strl", f);
    decoder.visit("decoder", f);
}

std::int64_t Model::param_count() {
    std::int64_t n = 0;
    visit([&](const std::string&, ad::Param& p) { n += p.value.numel(); });
    return n;
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void AdamW::zero_grad(Model& model) {
    model.visit([](const std::string&, ad::Param& p) { p.grad.fill(0.0); });
}

void AdamW::step(Model& model, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    model.visit([&](const std::string&, ad::Param& p) {
        for (std::int64_t i = 0; i < p.value.numel(); ++i) {
            const double g = p.grad[i];
            p.m[i] = beta1_ * p.m[i] + (1.0 - beta1_) * g;
            p.v[i] = beta2_ * p.v[i] + (1.0 - beta2_) * g * g;
            const double m_hat = p.m[i] / bc1;
            const double v_hat = p.v[i] / bc2;
            p.value[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * p.value[i]);
        }
    });
}

double train_step(Model& model, const std::vector<const TrainSample*>& batch, AdamW& adam,
                  double lr, Rng& rng) {
    if (batch.empty()) throw ConfigError("train_step: empty batch");
    const int b = static_cast<int>(batch.size());
    const int t_total = model.schedule.T;

    // Draw all sample randomness up front, in index order.
    std::vector<int> ts(static_cast<std::size_t>(b));
    std::vector<Tensor> eps(static_cast<std::size_t>(b));
    const std::vector<int> heat_shape{model.codec.joints, model.codec.height, model.codec.width};
    for (int i = 0; i < b; ++i) {
        ts[static_cast<std::size_t>(i)] = rng.uniform_int(1, t_total);
        eps[static_cast<std::size_t>(i)] = rng.normal_tensor(heat_shape);
    }

    std::vector<std::unique_ptr<nn::Graph>> graphs(static_cast<std::size_t>(b));
    std::vector<double> losses(static_cast<std::size_t>(b), 0.0);
    parallel_for(b, [&](std::int64_t i) {
        const TrainSample& sample = *batch[static_cast<std::size_t>(i)];
        const int t = ts[static_cast<std::size_t>(i)];
        const Tensor x0 =
            normalize_for_diffusion(encode_heatmaps(sample.gt, model.codec), model.codec);
        const Tensor x_t = forward_diffuse(x0, t, eps[static_cast<std::size_t>(i)], model.schedule);
        auto g = std::make_unique<nn::Graph>();
        nn::Node* cond = model.strl.forward(*g, sample.clip);
        nn::Node* pred = model.decoder.forward(*g, g->constant(x_t), cond, t);
        nn::Node* loss = ad::mse_loss(*g, pred, x0);
        g->backward(loss);
        losses[static_cast<std::size_t>(i)] = loss->value[0];
        graphs[static_cast<std::size_t>(i)] = std::move(g);
    });

    adam.zero_grad(model);
    double mean_loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double li = losses[static_cast<std::size_t>(i)];
        if (!std::isfinite(li)) {
            const int t = ts[static_cast<std::size_t>(i)];
            throw NumericError("train_step: non-finite loss at t=" + std::to_string(t) +
                               " (alpha_bar=" + std::to_string(model.schedule.at(t)) + ")");
        }
        mean_loss += li;
        graphs[static_cast<std::size_t>(i)]->add_param_grads(1.0 / b);
    }
    mean_loss /= b;
    adam.step(model, lr);
    return mean_loss;
}

void train(Model& model, const std::vector<TrainSample>& dataset, AdamW& adam,
           const TrainHooks& hooks) {
    if (dataset.empty()) throw ConfigError("train: dataset is empty");
    const PipelineConfig& cfg = model.config;
    Rng rng(Rng::derive(cfg.seed, kTrainStream));
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::int64_t global_step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at_epoch(epoch);
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const TrainSample*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&dataset[order[i]]);
            const double loss = train_step(model, batch, adam, lr, rng);
            ++global_step;
            if (hooks.on_step) hooks.on_step(epoch, global_step, lr, loss);
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch);
    }
}

Tensor compute_condition(Model& model, const ClipTensor& clip) {
    nn::Graph g;
    return model.strl.forward(g, clip)->value;
}

Tensor sample_pose(Model& model, const Tensor& condition, const InferenceOptions& opts, Rng& rng) {
    if (opts.steps < 1) throw ConfigError("sample_pose: steps must be >= 1");
    if (opts.ensemble < 1) throw ConfigError("sample_pose: ensemble size must be >= 1");
    const SamplingPlan plan = make_sampling_plan(model.schedule.T, opts.steps);
    const std::vector<int> shape{model.codec.joints, model.codec.height, model.codec.width};
    const double s = model.codec.signal_scale;

    std::vector<Tensor> noise(static_cast<std::size_t>(opts.ensemble));
    for (int n = 0; n < opts.ensemble; ++n) noise[static_cast<std::size_t>(n)] = rng.normal_tensor(shape);

    std::vector<Tensor> results(static_cast<std::size_t>(opts.ensemble));
    parallel_for(opts.ensemble, [&](std::int64_t n) {
        Tensor x = noise[static_cast<std::size_t>(n)];
        for (const auto& [t_now, t_next] : plan.pairs) {
            Tensor x0_hat = model.decoder.forward(x, condition, t_now);
            for (std::int64_t i = 0; i < x0_hat.numel(); ++i)
                x0_hat[i] = std::clamp(x0_hat[i], -s, s);
            x = ddim_step(x, x0_hat, t_now, t_next, model.schedule);
        }
        results[static_cast<std::size_t>(n)] = denormalize_from_diffusion(x, model.codec);
    });

    // Running mean in group order: exact for identical groups, deterministic
    // regardless of worker count.
    Tensor mean = std::move(results[0]);
    for (int n = 1; n < opts.ensemble; ++n) {
        const Tensor& h = results[static_cast<std::size_t>(n)];
        const double inv = 1.0 / (n + 1);
        for (std::int64_t i = 0; i < mean.numel(); ++i) mean[i] += (h[i] - mean[i]) * inv;
    }
    return mean;
}

KeypointSet predict_keypoints(Model& model, const ClipTensor& clip, const InferenceOptions& opts,
                              Rng& rng) {
    const Tensor cond = compute_condition(model, clip);
    const Tensor heat = sample_pose(model, cond, opts, rng);
    return decode_keypoints(heat, model.codec);
}

}  // namespace diffpose
