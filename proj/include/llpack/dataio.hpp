#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "llpack/model.hpp"
#include "llpack/rng.hpp"
#include "llpack/tensor.hpp"

namespace llpack {

enum class BayerPhase { rggb, bggr, grbg, gbrg };

inline std::string to_string(BayerPhase p) {
    switch (p) {
        case BayerPhase::rggb: return "rggb";
        case BayerPhase::bggr: return "bggr";
        case BayerPhase::grbg: return "grbg";
        case BayerPhase::gbrg: return "gbrg";
    }
    return "rggb";
}

inline BayerPhase bayer_phase_from_string(const std::string& s) {
    if (s == "rggb") return BayerPhase::rggb;
    if (s == "bggr") return BayerPhase::bggr;
    if (s == "grbg") return BayerPhase::grbg;
    if (s == "gbrg") return BayerPhase::gbrg;
    throw ConfigError("unknown bayer phase \"" + s + "\"");
}

// RGB channel sampled at mosaic position (y%2, x%2).
inline int bayer_color_at(BayerPhase p, int y, int x) {
    static const int tables[4][4] = {
        {0, 1, 1, 2},  // rggb
        {2, 1, 1, 0},  // bggr
        {1, 0, 2, 1},  // grbg
        {1, 2, 0, 1},  // gbrg
    };
    return tables[static_cast<int>(p)][(y % 2) * 2 + (x % 2)];
}

// Normalized sensor mosaic: data in [0, 1] after
// (raw - black) / (white - black) with clamping.
struct BayerImage {
    Tensor data;  // (H, W, 1), H and W even
    int black_level = 512;
    int white_level = 16383;
    BayerPhase phase = BayerPhase::rggb;
};

struct NoiseParams {
    float read_sigma = 0.0f;  // additive Gaussian stddev
    float shot_gain = 0.0f;   // signal-proportional variance coefficient
};

struct PairedSample {
    Tensor dark;  // (H, W, 1) bayer or (H, W, 3) rgb, values in [0, 1]
    Tensor gt;    // (H, W, 3) in [0, 1]
    float true_factor = 1.0f;
    InputKind kind = InputKind::bayer_raw;
    BayerPhase phase = BayerPhase::rggb;
};

namespace netpbm_detail {

struct Header {
    int magic = 0;  // 5 or 6
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t data_offset = 0;
};

inline Header parse_header(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    Header h;
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> FormatError { return FormatError(path + ": " + msg, pos); };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw fail("expected P5/P6 magic");
    }
    h.magic = bytes[1] - '0';
    pos = 2;
    auto next_token = [&]() -> int {
        // Skip whitespace and '#' comments, then read a decimal field.
        while (pos < bytes.size()) {
            const std::uint8_t c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') throw fail("expected integer field");
        long v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 0x7fffffffL) throw fail("integer field overflow");
            ++pos;
        }
        return static_cast<int>(v);
    };
    h.width = next_token();
    h.height = next_token();
    h.maxval = next_token();
    if (pos >= bytes.size()) throw fail("missing raster separator");
    const std::uint8_t sep = bytes[pos];
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') throw fail("bad raster separator");
    ++pos;
    if (h.width < 1 || h.height < 1) throw fail("bad image dimensions");
    if (h.maxval < 1 || h.maxval > 65535) throw fail("bad maxval");
    h.data_offset = pos;
    return h;
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

// Per PGM/PPM convention samples are 1 byte for maxval < 256, else 2 bytes
// big-endian.
inline int sample_at(const std::vector<std::uint8_t>& bytes, const Header& h, std::int64_t index,
                     const std::string& path) {
    if (h.maxval < 256) {
        const std::size_t at = h.data_offset + static_cast<std::size_t>(index);
        if (at >= bytes.size()) throw FormatError(path + ": truncated raster", bytes.size());
        return bytes[at];
    }
    const std::size_t at = h.data_offset + static_cast<std::size_t>(index) * 2;
    if (at + 1 >= bytes.size()) throw FormatError(path + ": truncated raster", bytes.size());
    return (bytes[at] << 8) | bytes[at + 1];
}

inline void append_sample(std::vector<std::uint8_t>& out, int v, int maxval) {
    if (maxval < 256) {
        out.push_back(static_cast<std::uint8_t>(v));
    } else {
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
}

inline std::vector<std::uint8_t> header_bytes(int magic, int w, int h, int maxval) {
    const std::string s =
        "P" + std::to_string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
        std::to_string(maxval) + "\n";
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

}  // namespace netpbm_detail

namespace ops {

// 16-bit binary PGM reader; maxval must be >= 255.
inline BayerImage read_bayer_pgm(const std::string& path, int black, int white, BayerPhase phase) {
    const auto bytes = netpbm_detail::read_file(path);
    const auto h = netpbm_detail::parse_header(bytes, path);
    if (h.magic != 5) throw FormatError(path + ": expected P5 greymap", 1);
    if (h.maxval < 255) throw FormatError(path + ": maxval below 255", 0);
    if (h.height % 2 != 0 || h.width % 2 != 0) {
        throw ShapeError(path + ": bayer mosaic dims must be even");
    }
    BayerImage img;
    img.black_level = black;
    img.white_level = white;
    img.phase = phase;
    img.data = Tensor({h.height, h.width, 1});
    const double span = white - black;
    for (std::int64_t i = 0; i < img.data.numel(); ++i) {
        const int adu = netpbm_detail::sample_at(bytes, h, i, path);
        double v = (adu - black) / span;
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        img.data[i] = static_cast<float>(v);
    }
    return img;
}

// Inverse of the read normalization: ADU = black + round(v * (white-black)),
// written with maxval = white.
inline void write_bayer_pgm(const std::string& path, const Tensor& data, int black, int white) {
    if (data.rank() != 3 || data.channels() != 1) throw ShapeError("write_bayer_pgm: expected (H, W, 1)");
    auto out = netpbm_detail::header_bytes(5, data.width(), data.height(), white);
    const double span = white - black;
    for (std::int64_t i = 0; i < data.numel(); ++i) {
        int adu = black + static_cast<int>(std::floor(data[i] * span + 0.5));
        if (adu < 0) adu = 0;
        if (adu > white) adu = white;
        netpbm_detail::append_sample(out, adu, white);
    }
    netpbm_detail::write_file(path, out);
}

// 8-bit binary PPM; value v maps to round-half-up(v * 255).
inline void write_rgb(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.channels() != 3) throw ShapeError("write_rgb: expected (H, W, 3)");
    auto out = netpbm_detail::header_bytes(6, img.width(), img.height(), 255);
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        int v = static_cast<int>(std::floor(img[i] * 255.0f + 0.5f));
        if (v < 0) v = 0;
        if (v > 255) v = 255;
        out.push_back(static_cast<std::uint8_t>(v));
    }
    netpbm_detail::write_file(path, out);
}

// 16-bit PPM used for synthetic rgb dark frames, where 8 bits would destroy
// the low-intensity signal.
inline void write_rgb16(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.channels() != 3) throw ShapeError("write_rgb16: expected (H, W, 3)");
    auto out = netpbm_detail::header_bytes(6, img.width(), img.height(), 65535);
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        int v = static_cast<int>(std::floor(img[i] * 65535.0f + 0.5f));
        if (v < 0) v = 0;
        if (v > 65535) v = 65535;
        netpbm_detail::append_sample(out, v, 65535);
    }
    netpbm_detail::write_file(path, out);
}

inline Tensor read_rgb_ppm(const std::string& path) {
    const auto bytes = netpbm_detail::read_file(path);
    const auto h = netpbm_detail::parse_header(bytes, path);
    if (h.magic != 6) throw FormatError(path + ": expected P6 pixmap", 1);
    Tensor img({h.height, h.width, 3});
    const double inv = 1.0 / h.maxval;
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        img[i] = static_cast<float>(netpbm_detail::sample_at(bytes, h, i, path) * inv);
    }
    return img;
}

// Samples one color per pixel following the phase pattern.
inline Tensor mosaic(const Tensor& rgb, BayerPhase phase) {
    if (rgb.rank() != 3 || rgb.channels() != 3) throw ShapeError("mosaic: expected (H, W, 3)");
    if (rgb.height() % 2 != 0 || rgb.width() % 2 != 0) throw ShapeError("mosaic: dims must be even");
    const int h = rgb.height(), w = rgb.width();
    Tensor out({h, w, 1});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out.at(y, x, 0) = rgb.at(y, x, bayer_color_at(phase, y, x));
    }
    return out;
}

// dark = clamp(signal/k + noise, 0, 1) where signal is the mosaic (bayer
// kind) or the clean image itself (rgb kind). Shot noise uses the
// heteroscedastic Gaussian approximation var = signal * gain.
inline PairedSample synthesize_pair(const Tensor& clean_rgb, float k, NoiseParams noise,
                                    std::uint64_t seed, InputKind kind = InputKind::bayer_raw,
                                    BayerPhase phase = BayerPhase::rggb) {
    if (k < 1.0f) throw DomainError("synthesize_pair: k must be >= 1");
    PairedSample pair;
    pair.gt = clean_rgb;
    pair.true_factor = k;
    pair.kind = kind;
    pair.phase = phase;
    Tensor signal = kind == InputKind::bayer_raw ? mosaic(clean_rgb, phase) : clean_rgb;
    for (std::int64_t i = 0; i < signal.numel(); ++i) signal[i] /= k;
    Rng rng(seed);
    Tensor dark(signal.dims());
    for (std::int64_t i = 0; i < signal.numel(); ++i) {
        double v = signal[i];
        if (noise.read_sigma > 0.0f) v += noise.read_sigma * rng.normal();
        if (noise.shot_gain > 0.0f) {
            const double var = static_cast<double>(signal[i]) * noise.shot_gain;
            if (var > 0.0) v += std::sqrt(var) * rng.normal();
        }
        dark[i] = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
    }
    pair.dark = std::move(dark);
    return pair;
}

// Aligned crop of dark and GT at the same even-aligned origin.
inline PairedSample sample_patch(const PairedSample& pair, int size, std::uint64_t seed) {
    const int h = pair.gt.height(), w = pair.gt.width();
    if (size < 2 || size % 2 != 0) throw ConfigError("sample_patch: size must be even and >= 2");
    if (h < size || w < size) {
        throw ShapeError("sample_patch: image " + shape_string(pair.gt.dims()) +
                         " smaller than patch " + std::to_string(size));
    }
    Rng rng(seed);
    const int oy = 2 * static_cast<int>(rng.uniform_int(0, (h - size) / 2));
    const int ox = 2 * static_cast<int>(rng.uniform_int(0, (w - size) / 2));
    PairedSample out;
    out.true_factor = pair.true_factor;
    out.kind = pair.kind;
    out.phase = pair.phase;
    const int dc = pair.dark.channels();
    out.dark = Tensor({size, size, dc});
    out.gt = Tensor({size, size, 3});
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < dc; ++c) out.dark.at(y, x, c) = pair.dark.at(oy + y, ox + x, c);
            for (int c = 0; c < 3; ++c) out.gt.at(y, x, c) = pair.gt.at(oy + y, ox + x, c);
        }
    }
    return out;
}

}  // namespace ops

// --- Dataset directory layout -------------------------------------------
// <root>/manifest.json
// <root>/pairs/<id>/dark.pgm (bayer) or dark.ppm (rgb, 16-bit)
// <root>/pairs/<id>/gt.ppm
// <root>/pairs/<id>/meta.json   {kind, black, white, phase, k}

namespace dataset {

inline void write_pair(const std::filesystem::path& root, const std::string& id, const PairedSample& pair,
                       int black = 512, int white = 16383) {
    const std::filesystem::path dir = root / "pairs" / id;
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["k"] = pair.true_factor;
    meta["phase"] = to_string(pair.phase);
    if (pair.kind == InputKind::bayer_raw) {
        meta["kind"] = "bayer";
        meta["black"] = black;
        meta["white"] = white;
        ops::write_bayer_pgm((dir / "dark.pgm").string(), pair.dark, black, white);
    } else {
        meta["kind"] = "rgb";
        ops::write_rgb16((dir / "dark.ppm").string(), pair.dark);
    }
    ops::write_rgb((dir / "gt.ppm").string(), pair.gt);
    std::ofstream f(dir / "meta.json");
    if (!f) throw IoError("cannot write meta.json in " + dir.string());
    f << meta.dump(2) << "\n";
}

inline PairedSample read_pair(const std::filesystem::path& dir) {
    std::ifstream f(dir / "meta.json");
    if (!f) throw IoError("cannot read meta.json in " + dir.string());
    nlohmann::json meta;
    try {
        f >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(dir.string() + "/meta.json: " + e.what(), 0);
    }
    PairedSample pair;
    pair.true_factor = meta.contains("k") && meta["k"].is_string()
                           ? std::stof(meta["k"].get<std::string>())
                           : meta.value("k", 1.0f);
    pair.phase = bayer_phase_from_string(meta.value("phase", std::string("rggb")));
    const std::string kind = meta.value("kind", std::string("bayer"));
    if (kind == "bayer") {
        pair.kind = InputKind::bayer_raw;
        const int black = meta.value("black", 512);
        const int white = meta.value("white", 16383);
        pair.dark = ops::read_bayer_pgm((dir / "dark.pgm").string(), black, white, pair.phase).data;
    } else if (kind == "rgb") {
        pair.kind = InputKind::rgb;
        pair.dark = ops::read_rgb_ppm((dir / "dark.ppm").string());
    } else {
        throw FormatError(dir.string() + "/meta.json: unknown kind \"" + kind + "\"", 0);
    }
    pair.gt = ops::read_rgb_ppm((dir / "gt.ppm").string());
    return pair;
}

inline std::vector<std::filesystem::path> list_pairs(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> out;
    const std::filesystem::path pairs = root / "pairs";
    if (std::filesystem::exists(pairs)) {
        for (const auto& entry : std::filesystem::directory_iterator(pairs)) {
            if (entry.is_directory()) out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline void write_manifest(const std::filesystem::path& root, const std::vector<std::string>& ids) {
    std::filesystem::create_directories(root);
    nlohmann::json manifest;
    manifest["pairs"] = ids;
    std::ofstream f(root / "manifest.json");
    if (!f) throw IoError("cannot write manifest.json in " + root.string());
    f << manifest.dump(2) << "\n";
}

}  // namespace dataset

// Clean-image generator for synthetic datasets. Patterns:
//   flat   - one constant color per image
//   smooth - low-frequency sinusoidal field with gentle amplitude
//   blocks - coarse piecewise-constant color grid
inline Tensor generate_clean_image(Rng& rng, int h, int w, const std::string& pattern) {
    Tensor img({h, w, 3});
    if (pattern == "flat") {
        for (int c = 0; c < 3; ++c) {
            const float v = rng.uniform(0.2f, 0.85f);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) img.at(y, x, c) = v;
            }
        }
    } else if (pattern == "smooth") {
        for (int c = 0; c < 3; ++c) {
            const float base = rng.uniform(0.3f, 0.7f);
            const float amp = rng.uniform(0.01f, 0.05f);
            const float fy = rng.uniform(0.5f, 1.5f);
            const float fx = rng.uniform(0.5f, 1.5f);
            const float phase = rng.uniform(0.0f, 6.2831853f);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const float s = std::sin(6.2831853f * (fy * y / h + fx * x / w) + phase);
                    img.at(y, x, c) = base + amp * s;
                }
            }
        }
    } else if (pattern == "blocks") {
        const int cells = 4;
        std::vector<float> colors(static_cast<std::size_t>(cells * cells * 3));
        for (float& v : colors) v = rng.uniform(0.15f, 0.9f);
        for (int y = 0; y < h; ++y) {
            const int cy = y * cells / h;
            for (int x = 0; x < w; ++x) {
                const int cx = x * cells / w;
                for (int c = 0; c < 3; ++c) {
                    img.at(y, x, c) = colors[static_cast<std::size_t>((cy * cells + cx) * 3 + c)];
                }
            }
        }
    } else {
        throw ConfigError("unknown pattern \"" + pattern + "\" (expected flat, smooth or blocks)");
    }
    return img;
}

}  // namespace llpack
