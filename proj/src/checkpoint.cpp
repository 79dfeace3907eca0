#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "diffpose/engine.hpp"
#include "diffpose/errors.hpp"

namespace diffpose {

namespace {

namespace fs = std::filesystem;

void append_f32_le(std::string& blob, double v) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    blob.push_back(static_cast<char>(u & 0xff));
    blob.push_back(static_cast<char>((u >> 8) & 0xff));
    blob.push_back(static_cast<char>((u >> 16) & 0xff));
    blob.push_back(static_cast<char>((u >> 24) & 0xff));
}

double read_f32_le(const std::string& blob, std::size_t offset) {
    const auto b = [&](std::size_t i) {
        return static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + i]));
    };
    const std::uint32_t u = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
    return static_cast<double>(std::bit_cast<float>(u));
}

constexpr const char* kFormatTag = "diffpose-checkpoint-v1";

}  // namespace

void save_checkpoint(Model& model, const AdamW& adam, int epoch, const std::string& dir) {
    fs::create_directories(dir);
    Json tensors = Json::array();
    std::string blob;
    auto put = [&](const std::string& name, const Tensor& t) {
        Json e = Json::object();
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = blob.size();
        tensors.push_back(std::move(e));
        for (std::int64_t i = 0; i < t.numel(); ++i) append_f32_le(blob, t[i]);
    };
    model.visit([&](const std::string& name, ad::Param& p) {
        put(name, p.value);
        put(name + ".adam_m", p.m);
        put(name + ".adam_v", p.v);
    });

    Json manifest = Json::object();
    manifest["format"] = kFormatTag;
    manifest["epoch"] = epoch;
    manifest["adam_step"] = adam.step_count();
    manifest["dtype"] = "float32";
    manifest["config"] = model.config.to_json();
    manifest["tensors"] = std::move(tensors);

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("checkpoint: cannot write manifest in '" + dir + "'");
    mf << manifest.dump(2) << "\n";
    std::ofstream bf(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bf) throw IoError("checkpoint: cannot write params.bin in '" + dir + "'");
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("checkpoint: cannot open manifest in '" + dir + "'");
    Json manifest;
    try {
        mf >> manifest;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("checkpoint: invalid manifest JSON: ") + e.what());
    }
    if (!manifest.is_object() || manifest.value("format", "") != kFormatTag)
        throw ParseError("checkpoint: unrecognized manifest format");
    if (!manifest.contains("config"))
        throw ParseError("checkpoint: manifest is missing the config snapshot");

    LoadedCheckpoint out;
    out.model = Model::build(PipelineConfig::from_json(manifest.at("config")));
    out.epoch = manifest.value("epoch", 0);
    out.adam = AdamW(0.9, 0.999, 1e-8, out.model.config.weight_decay);
    out.adam.set_step_count(manifest.value("adam_step", static_cast<std::int64_t>(0)));

    std::ifstream bf(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bf) throw IoError("checkpoint: cannot open params.bin in '" + dir + "'");
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    const Json& tensors = manifest.at("tensors");
    if (!tensors.is_array()) throw ParseError("checkpoint: 'tensors' must be an array");
    std::size_t cursor = 0;
    auto take = [&](const std::string& name, Tensor& t) {
        if (cursor >= tensors.size())
            throw ParseError("checkpoint: manifest lists fewer tensors than the model owns");
        const Json& e = tensors[cursor++];
        if (e.value("name", "") != name)
            throw ParseError("checkpoint: tensor order mismatch, expected '" + name + "' got '" +
                             e.value("name", "") + "'");
        const auto shape = e.at("shape").get<std::vector<int>>();
        if (shape != t.shape())
            throw ParseError("checkpoint: shape mismatch for '" + name + "'");
        const std::size_t offset = e.at("offset").get<std::size_t>();
        const std::size_t bytes = static_cast<std::size_t>(t.numel()) * 4;
        if (offset + bytes > blob.size())
            throw ParseError("checkpoint: blob is too short for tensor '" + name + "'");
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = read_f32_le(blob, offset + static_cast<std::size_t>(i) * 4);
    };
    out.model.visit([&](const std::string& name, ad::Param& p) {
        take(name, p.value);
        take(name + ".adam_m", p.m);
        take(name + ".adam_v", p.v);
    });
    if (cursor != tensors.size())
        throw ParseError("checkpoint: manifest lists more tensors than the model owns");
    return out;
}

}  // namespace diffpose
