// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Single-file archive of named float32 tensors plus JSON metadata:
//
//   <magic>\n
//   uint64 little-endian metadata length
//   metadata JSON {"meta": ..., "tensors": [{"name", "shape", "offset"}]}
//   raw float32 little-endian payload
//
// Checkpoints use magic "fusionbench-ckpt-v1"; exported backbone weights use
// "fusionbench-tensors-v1".

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fusionbench/tensor.hpp"

namespace fusionbench::io {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

inline constexpr const char* kCheckpointMagic = "fusionbench-ckpt-v1";
inline constexpr const char* kTensorsMagic = "fusionbench-tensors-v1";

struct TensorArchive {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Tensor<float>> tensors;
};

/// Write to `<path>.tmp` then rename, so readers never see a partial file.
inline void write_archive(const std::filesystem::path& path, const std::string& magic,
                          const TensorArchive& archive) {
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : archive.tensors) {
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * sizeof(float);
    }
    const std::string header = nlohmann::json{{"meta", archive.meta}, {"tensors", index}}.dump();
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << magic << '\n';
        const std::uint64_t len = header.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        for (const auto& [name, t] : archive.tensors) {
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.size() * sizeof(float)));
        }
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline TensorArchive read_archive(const std::filesystem::path& path, const std::string& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open archive " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != magic) {
        throw std::runtime_error(path.string() + ": expected header '" + magic + "', found '" +
                                 line.substr(0, 64) + "'");
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error(path.string() + ": truncated metadata");
    const auto doc = nlohmann::json::parse(header);
    const auto payload_start = in.tellg();

    TensorArchive archive;
    archive.meta = doc.at("meta");
    for (const auto& entry : doc.at("tensors")) {
        Tensor<float> t(entry.at("shape").get<std::vector<int>>());
        in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw std::runtime_error(path.string() + ": truncated tensor " + entry.at("name").get<std::string>());
        archive.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
    return archive;
}

}  // namespace fusionbench::io
