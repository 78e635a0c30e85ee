#include "mcm/checkpoint.hpp"

#include "mcm/error.hpp"
#include "mcm/run_config.hpp"
#include "mcm/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <map>

namespace mcm::ckpt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using Json = nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
    std::uint32_t v = 0;
    std::memcpy(&v, bytes.data() + at, sizeof v);
    return v;
}

Json vec_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec json_vec(const Json& j) {
    const auto xs = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

}  // namespace

void round_to_float(bridge::McmModel& model) {
    model.visit([](const std::string&, ad::Parameter& p) {
        p.value = p.value.cast<float>().cast<double>();
    });
}

std::string encode_checkpoint(const bridge::McmModel& model, const train::Normalizer& norm, const Json& extra) {
    bridge::McmModel stored = model;
    round_to_float(stored);

    Json params = Json::array();
    std::string payload;
    stored.visit([&](const std::string& name, const ad::Parameter& p) {
        params.push_back({{"name", name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", payload.size()}});
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
                const auto f = static_cast<float>(p.value(r, c));
                payload.append(reinterpret_cast<const char*>(&f), sizeof f);
            }
        }
    });

    const auto& text = model.encoders.text;
    const auto& audio = model.encoders.audio.config();
    Json meta{
        {"model", config::to_json(model.main.config())},
        {"text", {{"width", text.config().width}, {"heads", text.config().heads}, {"max_tokens", text.config().max_tokens}}},
        {"audio", {{"bands", audio.bands}, {"control_dim", audio.control_dim}}},
        {"vocab", text.vocab().words()},
        {"stage", model.stage()},
        {"norm", {{"mean", vec_json(norm.mean)}, {"std", vec_json(norm.std)}}},
        {"checksum", bridge::checksum(stored, "")},
        {"extra", extra},
    };
    const std::string manifest = Json{{"params", params}, {"meta", meta}}.dump();

    std::string out(kMagic.begin(), kMagic.end());
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(manifest.size()));
    out += manifest;
    out += payload;
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    constexpr std::size_t kHeader = 12;
    if (bytes.size() < kHeader || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw IoError("not an MCMW checkpoint");
    }
    if (get_u32(bytes, 4) != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(get_u32(bytes, 4)));
    const std::size_t manifest_len = get_u32(bytes, 8);
    if (bytes.size() < kHeader + manifest_len) throw IoError("checkpoint truncated in manifest");

    Json manifest;
    try {
        manifest = Json::parse(bytes.substr(kHeader, manifest_len));
    } catch (const Json::exception& e) {
        throw IoError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    const std::string_view payload = bytes.substr(kHeader + manifest_len);

    Checkpoint ck;
    try {
        const Json& meta = manifest.at("meta");
        const mwnet::MwNetConfig net = config::mwnet_config_from_json(meta.at("model"));
        cond::TextEncoderConfig tcfg;
        tcfg.width = meta.at("text").at("width").get<int>();
        tcfg.heads = meta.at("text").at("heads").get<int>();
        tcfg.max_tokens = meta.at("text").at("max_tokens").get<int>();
        cond::AudioEncoderConfig acfg;
        acfg.bands = meta.at("audio").at("bands").get<int>();
        acfg.control_dim = meta.at("audio").at("control_dim").get<int>();
        const auto words = meta.at("vocab").get<std::vector<std::string>>();

        // Build a skeleton of the right shape, then overwrite every tensor from the payload.
        mwnet::Rng rng(0);
        mwnet::MwNetModel main(net, rng);
        cond::ToyTextEncoder text(cond::Vocabulary(words), tcfg, rng);
        cond::ToyAudioEncoder audio(acfg, rng);
        ck.model = bridge::build_mcm(main, {std::move(text), std::move(audio)}, rng);

        std::map<std::string, const Json*> entries;
        for (const Json& e : manifest.at("params")) entries[e.at("name").get<std::string>()] = &e;
        std::size_t filled = 0;
        ck.model.visit([&](const std::string& name, ad::Parameter& p) {
            const auto it = entries.find(name);
            if (it == entries.end()) throw IoError("checkpoint lacks parameter " + name);
            const Json& e = *it->second;
            const auto rows = e.at("shape").at(0).get<Eigen::Index>();
            const auto cols = e.at("shape").at(1).get<Eigen::Index>();
            if (rows != p.value.rows() || cols != p.value.cols()) throw IoError("checkpoint shape mismatch for " + name);
            const auto offset = e.at("offset").get<std::size_t>();
            const std::size_t n = static_cast<std::size_t>(rows * cols);
            if (offset + n * sizeof(float) > payload.size()) throw IoError("checkpoint payload truncated at " + name);
            for (std::size_t i = 0; i < n; ++i) {
                float f = 0.0F;
                std::memcpy(&f, payload.data() + offset + i * sizeof f, sizeof f);
                p.value(static_cast<Eigen::Index>(i) / cols, static_cast<Eigen::Index>(i) % cols) = f;
            }
            p.zero_grad();
            ++filled;
        });
        if (filled != entries.size()) throw IoError("checkpoint has parameters this model does not know");

        bridge::set_stage(ck.model, meta.at("stage").get<int>());
        ck.norm.mean = json_vec(meta.at("norm").at("mean"));
        ck.norm.std = json_vec(meta.at("norm").at("std"));
        if (ck.norm.mean.size() != net.input_dim || ck.norm.std.size() != net.input_dim) {
            throw IoError("checkpoint normalizer has the wrong dimension");
        }
        ck.extra = meta.value("extra", Json::object());
        ck.checksum = meta.at("checksum").get<std::uint64_t>();
    } catch (const Json::exception& e) {
        throw IoError(std::string("malformed checkpoint manifest: ") + e.what());
    } catch (const ValidationError& e) {
        throw IoError(std::string("checkpoint describes an invalid model: ") + e.what());
    }
    if (bridge::checksum(ck.model, "") != ck.checksum) throw IoError("checkpoint checksum mismatch");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const bridge::McmModel& model, const train::Normalizer& norm,
                     const Json& extra) {
    io::write_file_atomic(path, encode_checkpoint(model, norm, extra));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace mcm::ckpt
