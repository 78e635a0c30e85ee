#include "mcm/tensor_io.hpp"

#include "mcm/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mcm::io {

namespace {

static_assert(std::endian::native == std::endian::little, "containers assume a little-endian host");

constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 4;

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_f32(std::string& out, float v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

float get_f32(std::string_view bytes, std::size_t offset) {
    float v;
    std::memcpy(&v, bytes.data() + offset, 4);
    return v;
}

std::string magic_str(const std::array<char, 4>& m) { return std::string(m.data(), 4); }

}  // namespace

std::string encode_tensor(const TensorFile& file) {
    std::string out;
    const auto rows = static_cast<std::size_t>(file.data.rows());
    const auto cols = static_cast<std::size_t>(file.data.cols());
    out.reserve(kHeaderBytes + rows * cols * 4);
    out.append(file.magic.data(), 4);
    put_u32(out, kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(rows));
    put_u32(out, static_cast<std::uint32_t>(cols));
    put_f32(out, file.rate);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            put_f32(out, static_cast<float>(file.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
        }
    }
    return out;
}

TensorFile decode_tensor(std::string_view bytes, const std::array<char, 4>& expected_magic) {
    if (bytes.size() < kHeaderBytes) throw IoError("tensor file truncated: missing header");
    TensorFile file;
    std::memcpy(file.magic.data(), bytes.data(), 4);
    if (file.magic != expected_magic) {
        throw IoError("bad magic '" + magic_str(file.magic) + "', expected '" + magic_str(expected_magic) + "'");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kContainerVersion) throw IoError("unsupported container version " + std::to_string(version));
    const std::uint32_t rows = get_u32(bytes, 8);
    const std::uint32_t cols = get_u32(bytes, 12);
    file.rate = get_f32(bytes, 16);
    const std::size_t expected = kHeaderBytes + static_cast<std::size_t>(rows) * cols * 4;
    if (bytes.size() != expected) {
        throw IoError("tensor payload size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
    }
    file.data.resize(rows, cols);
    std::size_t off = kHeaderBytes;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c, off += 4) file.data(r, c) = get_f32(bytes, off);
    }
    return file;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_motion(const std::filesystem::path& path, const motion::MotionSequence& seq) {
    seq.validate();
    TensorFile f{kMotionMagic, seq.frames, static_cast<float>(seq.fps)};
    write_file_atomic(path, encode_tensor(f));
}

motion::MotionSequence read_motion(const std::filesystem::path& path) {
    TensorFile f = decode_tensor(read_file(path), kMotionMagic);
    motion::MotionSequence seq;
    seq.frames = std::move(f.data);
    seq.fps = f.rate;
    seq.validate();
    return seq;
}

void write_features(const std::filesystem::path& path, const Mat& features, float rate) {
    write_file_atomic(path, encode_tensor(TensorFile{kFeatureMagic, features, rate}));
}

TensorFile read_features(const std::filesystem::path& path) { return decode_tensor(read_file(path), kFeatureMagic); }

std::string motion_to_json(const motion::MotionSequence& seq) {
    nlohmann::json j;
    j["fps"] = seq.fps;
    auto& frames = j["frames"] = nlohmann::json::array();
    for (Eigen::Index t = 0; t < seq.frames.rows(); ++t) {
        std::vector<double> row(static_cast<std::size_t>(seq.frames.cols()));
        for (Eigen::Index c = 0; c < seq.frames.cols(); ++c) row[static_cast<std::size_t>(c)] = seq.frames(t, c);
        frames.push_back(row);
    }
    if (seq.label) j["label"] = *seq.label;
    return j.dump();
}

motion::MotionSequence motion_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("motion json: ") + e.what());
    }
    if (!j.contains("fps") || !j.contains("frames")) throw ValidationError("motion json needs 'fps' and 'frames'");
    motion::MotionSequence seq;
    seq.fps = j.at("fps").get<double>();
    const auto& frames = j.at("frames");
    seq.frames.resize(static_cast<Eigen::Index>(frames.size()), motion::kFrameDim);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto row = frames[t].get<std::vector<double>>();
        if (row.size() != motion::kFrameDim) {
            throw DimensionError("frame " + std::to_string(t) + " has " + std::to_string(row.size()) + " values");
        }
        for (int c = 0; c < motion::kFrameDim; ++c) seq.frames(static_cast<Eigen::Index>(t), c) = row[c];
    }
    if (j.contains("label")) seq.label = j.at("label").get<std::string>();
    seq.validate();
    return seq;
}

void write_beats(const std::filesystem::path& path, const std::vector<double>& times) {
    nlohmann::json j;
    j["times"] = times;
    write_file_atomic(path, j.dump());
}

std::vector<double> read_beats(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path)).at("times").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("beat file " + path.string() + ": " + e.what());
    }
}

}  // namespace mcm::io
