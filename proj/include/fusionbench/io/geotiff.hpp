// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal GeoTIFF reader/writer. Supports the baseline subset produced by
// common GIS exports of orthomosaics: classic (non-Big) TIFF, either byte
// order, uncompressed strips, chunky or planar samples of 8/16/32/64-bit
// integer or float type. Georeferencing comes from ModelPixelScale +
// ModelTiepoint (or an axis-aligned ModelTransformation); no-data from the
// GDAL_NODATA ascii tag.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusionbench::io {

struct GeoRaster {
    int bands = 0;
    int height = 0;
    int width = 0;
    /// Upper-left corner of the upper-left pixel, map units (meters).
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size_x = 0.0;
    double pixel_size_y = 0.0;
    std::optional<double> nodata;
    /// Band-sequential (bands, height, width).
    std::vector<float> pixels;
};

namespace detail {

enum : std::uint16_t {
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kPhotometric = 262,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kPlanarConfig = 284,
    kTileWidth = 322,
    kSampleFormat = 339,
    kModelPixelScale = 33550,
    kModelTiepoint = 33922,
    kModelTransformation = 34264,
    kGeoKeyDirectory = 34735,
    kGdalNodata = 42113,
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : buf_(std::move(bytes)) {
        if (buf_.size() < 8) throw std::runtime_error("file too short for a TIFF header");
        if (buf_[0] == 'I' && buf_[1] == 'I') {
            big_ = false;
        } else if (buf_[0] == 'M' && buf_[1] == 'M') {
            big_ = true;
        } else {
            throw std::runtime_error("not a TIFF file");
        }
    }

    bool big_endian() const noexcept { return big_; }
    std::size_t size() const noexcept { return buf_.size(); }

    template <typename U>
    U read(std::size_t off) const {
        if (off + sizeof(U) > buf_.size()) throw std::runtime_error("TIFF offset out of range");
        unsigned char raw[sizeof(U)];
        std::memcpy(raw, buf_.data() + off, sizeof(U));
        if (big_ != (std::endian::native == std::endian::big)) {
            for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(raw[i], raw[sizeof(U) - 1 - i]);
        }
        U v;
        std::memcpy(&v, raw, sizeof(U));
        return v;
    }

    const char* at(std::size_t off, std::size_t len) const {
        if (off + len > buf_.size()) throw std::runtime_error("TIFF data out of range");
        return buf_.data() + off;
    }

private:
    std::vector<char> buf_;
    bool big_ = false;
};

struct TagEntry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t value_offset = 0;  // file offset of the first value
};

inline std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case 1: case 2: case 6: case 7: return 1;
        case 3: case 8: return 2;
        case 4: case 9: case 11: return 4;
        case 5: case 10: case 12: return 8;
        default: return 0;
    }
}

inline std::vector<double> tag_numbers(const ByteReader& r, const TagEntry& e) {
    std::vector<double> out;
    out.reserve(e.count);
    const std::size_t sz = type_size(e.type);
    for (std::uint32_t i = 0; i < e.count; ++i) {
        const std::size_t off = e.value_offset + i * sz;
        switch (e.type) {
            case 1: out.push_back(r.read<std::uint8_t>(off)); break;
            case 3: out.push_back(r.read<std::uint16_t>(off)); break;
            case 4: out.push_back(r.read<std::uint32_t>(off)); break;
            case 5: out.push_back(double(r.read<std::uint32_t>(off)) / r.read<std::uint32_t>(off + 4)); break;
            case 6: out.push_back(r.read<std::int8_t>(off)); break;
            case 8: out.push_back(r.read<std::int16_t>(off)); break;
            case 9: out.push_back(r.read<std::int32_t>(off)); break;
            case 11: out.push_back(r.read<float>(off)); break;
            case 12: out.push_back(r.read<double>(off)); break;
            default: throw std::runtime_error("unsupported TIFF tag type " + std::to_string(e.type));
        }
    }
    return out;
}

inline double read_sample(const ByteReader& r, std::size_t off, int bits, int format) {
    switch (format) {
        case 1:
            if (bits == 8) return r.read<std::uint8_t>(off);
            if (bits == 16) return r.read<std::uint16_t>(off);
            if (bits == 32) return r.read<std::uint32_t>(off);
            break;
        case 2:
            if (bits == 8) return r.read<std::int8_t>(off);
            if (bits == 16) return r.read<std::int16_t>(off);
            if (bits == 32) return r.read<std::int32_t>(off);
            break;
        case 3:
            if (bits == 32) return r.read<float>(off);
            if (bits == 64) return r.read<double>(off);
            break;
    }
    throw std::runtime_error("unsupported sample type: " + std::to_string(bits) + "-bit format " +
                             std::to_string(format));
}

class TiffWriter {
public:
    void tag(std::uint16_t id, std::uint16_t type, std::vector<std::uint8_t> payload, std::uint32_t count) {
        entries_[id] = {type, count, std::move(payload)};
    }
    void shorts(std::uint16_t id, const std::vector<std::uint16_t>& v) { tag(id, 3, bytes_of(v), v.size()); }
    void longs(std::uint16_t id, const std::vector<std::uint32_t>& v) { tag(id, 4, bytes_of(v), v.size()); }
    void doubles(std::uint16_t id, const std::vector<double>& v) { tag(id, 12, bytes_of(v), v.size()); }
    void ascii(std::uint16_t id, const std::string& s) {
        std::vector<std::uint8_t> b(s.begin(), s.end());
        b.push_back(0);
        tag(id, 2, b, static_cast<std::uint32_t>(b.size()));
    }

    /// Layout: header, image data, IFD, out-of-line tag values.
    void write(const std::filesystem::path& path, const std::vector<char>& image_data,
               std::uint32_t data_offset) const {
        const std::uint32_t ifd_offset = data_offset + static_cast<std::uint32_t>(image_data.size());
        std::vector<char> out;
        out.insert(out.end(), {'I', 'I', 42, 0});
        append<std::uint32_t>(out, ifd_offset);
        out.resize(data_offset, 0);
        out.insert(out.end(), image_data.begin(), image_data.end());

        std::uint32_t extra_offset = ifd_offset + 2 + 12 * static_cast<std::uint32_t>(entries_.size()) + 4;
        std::vector<char> extra;
        append<std::uint16_t>(out, static_cast<std::uint16_t>(entries_.size()));
        for (const auto& [id, e] : entries_) {
            append<std::uint16_t>(out, id);
            append<std::uint16_t>(out, e.type);
            append<std::uint32_t>(out, e.count);
            if (e.payload.size() <= 4) {
                std::vector<char> inl(4, 0);
                std::memcpy(inl.data(), e.payload.data(), e.payload.size());
                out.insert(out.end(), inl.begin(), inl.end());
            } else {
                append<std::uint32_t>(out, extra_offset + static_cast<std::uint32_t>(extra.size()));
                extra.insert(extra.end(), e.payload.begin(), e.payload.end());
                if (extra.size() % 2) extra.push_back(0);
            }
        }
        append<std::uint32_t>(out, 0);
        out.insert(out.end(), extra.begin(), extra.end());

        const auto tmp = std::filesystem::path(path.string() + ".tmp");
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write " + tmp.string());
            f.write(out.data(), static_cast<std::streamsize>(out.size()));
        }
        std::filesystem::rename(tmp, path);
    }

private:
    struct Entry {
        std::uint16_t type;
        std::uint32_t count;
        std::vector<std::uint8_t> payload;
    };

    template <typename U>
    static std::vector<std::uint8_t> bytes_of(const std::vector<U>& v) {
        std::vector<std::uint8_t> b(v.size() * sizeof(U));
        std::memcpy(b.data(), v.data(), b.size());
        return b;
    }
    template <typename U>
    static void append(std::vector<char>& out, U v) {
        char raw[sizeof(U)];
        std::memcpy(raw, &v, sizeof(U));
        out.insert(out.end(), raw, raw + sizeof(U));
    }

    std::map<std::uint16_t, Entry> entries_;
};

}  // namespace detail

/// Writes band-planar float32, one strip per band, with geotransform tags.
inline void write_geotiff(const std::filesystem::path& path, const GeoRaster& raster) {
    static_assert(std::endian::native == std::endian::little);
    const std::size_t plane = static_cast<std::size_t>(raster.height) * raster.width;
    if (raster.pixels.size() != plane * raster.bands) throw std::invalid_argument("raster pixel count mismatch");
    const std::size_t plane_bytes = plane * sizeof(float);
    if (plane_bytes * raster.bands > 0xF0000000u) throw std::invalid_argument("raster too large for classic TIFF");

    constexpr std::uint32_t data_offset = 16;
    std::vector<char> data(plane_bytes * raster.bands);
    std::memcpy(data.data(), raster.pixels.data(), data.size());

    detail::TiffWriter w;
    const auto nb = static_cast<std::size_t>(raster.bands);
    w.longs(detail::kImageWidth, {static_cast<std::uint32_t>(raster.width)});
    w.longs(detail::kImageLength, {static_cast<std::uint32_t>(raster.height)});
    w.shorts(detail::kBitsPerSample, std::vector<std::uint16_t>(nb, 32));
    w.shorts(detail::kCompression, {1});
    w.shorts(detail::kPhotometric, {static_cast<std::uint16_t>(raster.bands == 3 ? 2 : 1)});
    std::vector<std::uint32_t> offsets, counts;
    for (std::size_t b = 0; b < nb; ++b) {
        offsets.push_back(static_cast<std::uint32_t>(data_offset + b * plane_bytes));
        counts.push_back(static_cast<std::uint32_t>(plane_bytes));
    }
    w.longs(detail::kStripOffsets, offsets);
    w.shorts(detail::kSamplesPerPixel, {static_cast<std::uint16_t>(raster.bands)});
    w.longs(detail::kRowsPerStrip, {static_cast<std::uint32_t>(raster.height)});
    w.longs(detail::kStripByteCounts, counts);
    w.shorts(detail::kPlanarConfig, {2});
    w.shorts(detail::kSampleFormat, std::vector<std::uint16_t>(nb, 3));
    w.doubles(detail::kModelPixelScale, {raster.pixel_size_x, raster.pixel_size_y, 0.0});
    w.doubles(detail::kModelTiepoint, {0.0, 0.0, 0.0, raster.origin_x, raster.origin_y, 0.0});
    // GeoKey directory: version 1.1.0, one key, GTRasterTypeGeoKey = PixelIsArea.
    w.shorts(detail::kGeoKeyDirectory, {1, 1, 0, 1, 1025, 0, 1, 1});
    if (raster.nodata) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", *raster.nodata);
        w.ascii(detail::kGdalNodata, buf);
    }
    w.write(path, data, data_offset);
}

inline GeoRaster read_geotiff(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error(path.string() + ": file does not exist");
    std::vector<char> bytes;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error(path.string() + ": cannot open");
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    try {
        detail::ByteReader r(std::move(bytes));
        if (r.read<std::uint16_t>(2) != 42) throw std::runtime_error("unsupported TIFF variant (BigTIFF?)");
        const std::size_t ifd = r.read<std::uint32_t>(4);
        const int n_entries = r.read<std::uint16_t>(ifd);
        std::map<std::uint16_t, detail::TagEntry> tags;
        for (int i = 0; i < n_entries; ++i) {
            const std::size_t e = ifd + 2 + 12 * static_cast<std::size_t>(i);
            detail::TagEntry t;
            const auto id = r.read<std::uint16_t>(e);
            t.type = r.read<std::uint16_t>(e + 2);
            t.count = r.read<std::uint32_t>(e + 4);
            const std::size_t bytes_needed = detail::type_size(t.type) * t.count;
            t.value_offset = bytes_needed <= 4 ? e + 8 : r.read<std::uint32_t>(e + 8);
            tags[id] = t;
        }
        auto numbers = [&](std::uint16_t id) -> std::vector<double> {
            auto it = tags.find(id);
            if (it == tags.end()) return {};
            return detail::tag_numbers(r, it->second);
        };
        auto single = [&](std::uint16_t id, double fallback) {
            auto v = numbers(id);
            return v.empty() ? fallback : v.front();
        };

        if (tags.count(detail::kTileWidth)) throw std::runtime_error("tiled TIFF layout is not supported");
        if (single(detail::kCompression, 1) != 1) throw std::runtime_error("compressed TIFF is not supported");

        GeoRaster out;
        out.width = static_cast<int>(single(detail::kImageWidth, 0));
        out.height = static_cast<int>(single(detail::kImageLength, 0));
        out.bands = static_cast<int>(single(detail::kSamplesPerPixel, 1));
        if (out.width <= 0 || out.height <= 0 || out.bands <= 0) throw std::runtime_error("invalid image dimensions");
        const int bits = static_cast<int>(single(detail::kBitsPerSample, 1));
        const int format = static_cast<int>(single(detail::kSampleFormat, 1));
        const bool planar = single(detail::kPlanarConfig, 1) == 2;
        const auto rows_per_strip = static_cast<std::size_t>(single(detail::kRowsPerStrip, out.height));
        const auto strip_offsets = numbers(detail::kStripOffsets);
        if (strip_offsets.empty()) throw std::runtime_error("missing strip offsets");

        const auto scale = numbers(detail::kModelPixelScale);
        const auto tie = numbers(detail::kModelTiepoint);
        const auto xform = numbers(detail::kModelTransformation);
        if (scale.size() >= 2 && tie.size() >= 6) {
            out.pixel_size_x = scale[0];
            out.pixel_size_y = scale[1];
            out.origin_x = tie[3] - tie[0] * scale[0];
            out.origin_y = tie[4] + tie[1] * scale[1];
        } else if (xform.size() == 16) {
            if (xform[1] != 0.0 || xform[4] != 0.0) throw std::runtime_error("rotated geotransform is not supported");
            out.pixel_size_x = xform[0];
            out.pixel_size_y = -xform[5];
            out.origin_x = xform[3];
            out.origin_y = xform[7];
        } else {
            throw std::runtime_error("missing georeferencing (ModelPixelScale/ModelTiepoint tags)");
        }
        if (auto it = tags.find(detail::kGdalNodata); it != tags.end()) {
            const char* s = r.at(it->second.value_offset, it->second.count);
            out.nodata = std::strtod(std::string(s, strnlen(s, it->second.count)).c_str(), nullptr);
        }

        const std::size_t bps = static_cast<std::size_t>(bits) / 8;
        const std::size_t plane = static_cast<std::size_t>(out.height) * out.width;
        out.pixels.resize(plane * out.bands);
        const std::size_t strips_per_plane = (out.height + rows_per_strip - 1) / rows_per_strip;
        for (int row = 0; row < out.height; ++row) {
            const std::size_t strip = row / rows_per_strip;
            const std::size_t row_in_strip = row % rows_per_strip;
            if (planar) {
                for (int b = 0; b < out.bands; ++b) {
                    const std::size_t base = static_cast<std::size_t>(strip_offsets.at(b * strips_per_plane + strip)) +
                                             row_in_strip * out.width * bps;
                    for (int x = 0; x < out.width; ++x) {
                        out.pixels[b * plane + static_cast<std::size_t>(row) * out.width + x] =
                            static_cast<float>(detail::read_sample(r, base + x * bps, bits, format));
                    }
                }
            } else {
                const std::size_t base = static_cast<std::size_t>(strip_offsets.at(strip)) +
                                         row_in_strip * out.width * out.bands * bps;
                for (int x = 0; x < out.width; ++x)
                    for (int b = 0; b < out.bands; ++b)
                        out.pixels[b * plane + static_cast<std::size_t>(row) * out.width + x] = static_cast<float>(
                            detail::read_sample(r, base + (static_cast<std::size_t>(x) * out.bands + b) * bps, bits, format));
            }
        }
        return out;
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace fusionbench::io
