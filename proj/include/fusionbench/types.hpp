// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fusionbench {

enum class Modality { thermal = 0, rgb = 1, lidar = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::thermal, Modality::rgb, Modality::lidar};

/// Class indices are the model's output order.
enum class ClassLabel { empty = 0, midden = 1, mound = 2, water = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<ClassLabel, 3> kFeatureClasses{ClassLabel::midden, ClassLabel::mound,
                                                           ClassLabel::water};

inline int band_count(Modality m) noexcept { return m == Modality::rgb ? 3 : 1; }

inline std::string to_string(Modality m) {
    switch (m) {
        case Modality::thermal: return "thermal";
        case Modality::rgb: return "rgb";
        case Modality::lidar: return "lidar";
    }
    return "?";
}

inline std::string to_string(ClassLabel c) {
    switch (c) {
        case ClassLabel::empty: return "empty";
        case ClassLabel::midden: return "midden";
        case ClassLabel::mound: return "mound";
        case ClassLabel::water: return "water";
    }
    return "?";
}

inline Modality parse_modality(std::string_view s) {
    if (s == "thermal") return Modality::thermal;
    if (s == "rgb") return Modality::rgb;
    if (s == "lidar") return Modality::lidar;
    throw std::invalid_argument("unknown modality '" + std::string(s) + "'");
}

inline ClassLabel parse_class(std::string_view s) {
    if (s == "empty") return ClassLabel::empty;
    if (s == "midden") return ClassLabel::midden;
    if (s == "mound") return ClassLabel::mound;
    if (s == "water") return ClassLabel::water;
    throw std::invalid_argument("unknown class '" + std::string(s) + "'");
}

inline int index_of(ClassLabel c) noexcept { return static_cast<int>(c); }
inline int index_of(Modality m) noexcept { return static_cast<int>(m); }

}  // namespace fusionbench
