#include "mcm/dataset_io.hpp"

#include "mcm/conditioning.hpp"
#include "mcm/error.hpp"
#include "mcm/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>

namespace mcm::data {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

std::string stem(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%04zu", i);
    return buf;
}

}  // namespace

void write_dataset(const fs::path& dir, const std::vector<train::ToySample>& samples, const DatasetInfo& info,
                   bool force) {
    std::error_code ec;
    if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force) {
        throw ValidationError(dir.string() + " exists and is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    Json entries = Json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const train::ToySample& s = samples[i];
        const std::string base = stem(i);
        io::write_motion(dir / (base + ".mcmv"), s.motion);
        io::write_file_atomic(dir / (base + ".txt"), s.motion.label.value_or("") + "\n");
        Json e{{"motion", base + ".mcmv"},
               {"caption", base + ".txt"},
               {"arm", s.meta.arm},
               {"fast", s.meta.fast},
               {"frequency", s.meta.frequency},
               {"phase", s.meta.phase},
               {"amplitude", s.meta.amplitude}};
        if (!s.beats.empty()) {
            io::write_beats(dir / (base + ".beats.json"), s.beats.times);
            e["beats"] = base + ".beats.json";
        }
        entries.push_back(std::move(e));
    }
    const Json manifest{{"n", info.n},
                        {"frames", info.frames},
                        {"seed", info.seed},
                        {"with_control", info.with_control},
                        {"fps", motion::kCanonicalFps},
                        {"samples", entries}};
    io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<train::ToySample> read_dataset(const fs::path& dir, DatasetInfo* info) {
    Json manifest;
    try {
        manifest = Json::parse(io::read_file(dir / "manifest.json"));
    } catch (const Json::exception& e) {
        throw ValidationError("dataset manifest: " + std::string(e.what()));
    }
    std::vector<train::ToySample> out;
    try {
        if (info != nullptr) {
            info->n = manifest.at("n").get<int>();
            info->frames = manifest.at("frames").get<int>();
            info->seed = manifest.at("seed").get<std::uint64_t>();
            info->with_control = manifest.at("with_control").get<bool>();
        }
        for (const Json& e : manifest.at("samples")) {
            train::ToySample s;
            s.motion = io::read_motion(dir / e.at("motion").get<std::string>());
            std::string caption = io::read_file(dir / e.at("caption").get<std::string>());
            while (!caption.empty() && (caption.back() == '\n' || caption.back() == '\r')) caption.pop_back();
            s.motion.label = caption;
            s.caption = cond::tokenize(caption);
            if (e.contains("beats")) {
                s.beats.times = io::read_beats(dir / e.at("beats").get<std::string>());
                s.beats.validate();
            }
            s.meta.arm = e.value("arm", true);
            s.meta.fast = e.value("fast", false);
            s.meta.frequency = e.value("frequency", 0.0);
            s.meta.phase = e.value("phase", 0.0);
            s.meta.amplitude = e.value("amplitude", 1.0);
            out.push_back(std::move(s));
        }
    } catch (const Json::exception& e) {
        throw ValidationError("dataset manifest: " + std::string(e.what()));
    }
    return out;
}

}  // namespace mcm::data
