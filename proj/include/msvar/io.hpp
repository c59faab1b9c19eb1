#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "msvar/common.hpp"
#include "msvar/tensor.hpp"

namespace msvar {

// ---------------------------------------------------------------------------
// Raw video container: 32-byte header (magic "VAR1", u32 frames/height/
// width/channels little-endian, u8 dtype tag, zero padding), then row-major
// u8 frame data mapped linearly to [-1, 1].
// ---------------------------------------------------------------------------

constexpr char kVideoMagic[4] = {'V', 'A', 'R', '1'};
constexpr uint8_t kDtypeU8 = 0;
constexpr size_t kVideoHeaderSize = 32;

inline void put_u32(uint8_t* p, uint32_t x) {
    p[0] = static_cast<uint8_t>(x);
    p[1] = static_cast<uint8_t>(x >> 8);
    p[2] = static_cast<uint8_t>(x >> 16);
    p[3] = static_cast<uint8_t>(x >> 24);
}

inline uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 | static_cast<uint32_t>(p[2]) << 16 |
           static_cast<uint32_t>(p[3]) << 24;
}

inline uint8_t value_to_u8(double v) {
    v = std::clamp(v, -1.0, 1.0);
    return static_cast<uint8_t>(std::lround((v + 1.0) * 127.5));
}

inline double u8_to_value(uint8_t b) { return -1.0 + 2.0 * (static_cast<double>(b) / 255.0); }

inline void write_video_file(const std::string& path, const Tensor& video) {
    check_shape(video.rank() == 4, "write_video_file: expected (T,H,W,C) video");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_video_file: cannot open " + path);
    uint8_t header[kVideoHeaderSize] = {0};
    std::memcpy(header, kVideoMagic, 4);
    put_u32(header + 4, static_cast<uint32_t>(video.dim(0)));
    put_u32(header + 8, static_cast<uint32_t>(video.dim(1)));
    put_u32(header + 12, static_cast<uint32_t>(video.dim(2)));
    put_u32(header + 16, static_cast<uint32_t>(video.dim(3)));
    header[20] = kDtypeU8;
    f.write(reinterpret_cast<const char*>(header), kVideoHeaderSize);
    std::vector<uint8_t> buf(static_cast<size_t>(video.numel()));
    for (int64_t i = 0; i < video.numel(); ++i) buf[static_cast<size_t>(i)] = value_to_u8(video[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write_video_file: write failed for " + path);
}

inline Tensor read_video_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_video_file: cannot open " + path);
    uint8_t header[kVideoHeaderSize];
    f.read(reinterpret_cast<char*>(header), kVideoHeaderSize);
    if (!f || std::memcmp(header, kVideoMagic, 4) != 0) throw IoError("read_video_file: bad magic in " + path);
    if (header[20] != kDtypeU8) throw IoError("read_video_file: unsupported dtype tag");
    int64_t t = get_u32(header + 4), h = get_u32(header + 8), w = get_u32(header + 12), c = get_u32(header + 16);
    Tensor video({t, h, w, c});
    std::vector<uint8_t> buf(static_cast<size_t>(video.numel()));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("read_video_file: truncated data in " + path);
    for (int64_t i = 0; i < video.numel(); ++i) video[i] = u8_to_value(buf[static_cast<size_t>(i)]);
    return video;
}

// Per-frame portable pixmaps for quick inspection: <prefix>_000.ppm, ...
inline void write_ppm_frames(const std::string& prefix, const Tensor& video) {
    check_shape(video.rank() == 4 && video.dim(3) == 3, "write_ppm_frames: expected (T,H,W,3) video");
    for (int64_t t = 0; t < video.dim(0); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "_%03lld.ppm", static_cast<long long>(t));
        std::ofstream f(prefix + name, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("write_ppm_frames: cannot open " + prefix + name);
        f << "P6\n" << video.dim(2) << " " << video.dim(1) << "\n255\n";
        for (int64_t y = 0; y < video.dim(1); ++y)
            for (int64_t x = 0; x < video.dim(2); ++x)
                for (int64_t k = 0; k < 3; ++k) {
                    uint8_t b = value_to_u8(video.at4(t, y, x, k));
                    f.write(reinterpret_cast<const char*>(&b), 1);
                }
    }
}

// ---------------------------------------------------------------------------
// Versioned checkpoint blobs: magic, version, JSON manifest (config echo and
// tensor index), then tensor payloads as little-endian doubles in manifest
// order.
// ---------------------------------------------------------------------------

constexpr char kBlobMagic[8] = {'M', 'S', 'V', 'A', 'R', 'C', 'P', '1'};
constexpr uint32_t kBlobVersion = 1;

struct Blob {
    nlohmann::json manifest;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

inline void write_blob(const std::string& path, const Blob& blob) {
    nlohmann::json manifest = blob.manifest;
    nlohmann::json index = nlohmann::json::array();
    for (const auto& [name, t] : blob.tensors) {
        index.push_back({{"name", name}, {"shape", t.shape}, {"count", t.numel()}});
    }
    manifest["tensors"] = index;
    manifest["version"] = kBlobVersion;
    std::string mstr = manifest.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_blob: cannot open " + path);
    f.write(kBlobMagic, 8);
    uint8_t head[12];
    put_u32(head, kBlobVersion);
    uint64_t mlen = mstr.size();
    for (int i = 0; i < 8; ++i) head[4 + i] = static_cast<uint8_t>(mlen >> (8 * i));
    f.write(reinterpret_cast<const char*>(head), 12);
    f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (const auto& [name, t] : blob.tensors) {
        f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    }
    if (!f) throw IoError("write_blob: write failed for " + path);
}

inline Blob read_blob(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_blob: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kBlobMagic, 8) != 0) throw IoError("read_blob: bad magic in " + path);
    uint8_t head[12];
    f.read(reinterpret_cast<char*>(head), 12);
    if (!f) throw IoError("read_blob: truncated header in " + path);
    if (get_u32(head) != kBlobVersion) throw IoError("read_blob: unsupported version");
    uint64_t mlen = 0;
    for (int i = 0; i < 8; ++i) mlen |= static_cast<uint64_t>(head[4 + i]) << (8 * i);
    std::string mstr(mlen, '\0');
    f.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw IoError("read_blob: truncated manifest in " + path);
    Blob blob;
    blob.manifest = nlohmann::json::parse(mstr);
    for (const auto& entry : blob.manifest.at("tensors")) {
        Tensor t(entry.at("shape").get<std::vector<int64_t>>());
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
        if (!f) throw IoError("read_blob: truncated payload in " + path);
        blob.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    return blob;
}

inline uint64_t file_digest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("file_digest: cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
    }
    return h;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("write_text_file: cannot open " + path);
    f << content;
    if (!f) throw IoError("write_text_file: write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_text_file: cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

}  // namespace msvar
