#pragma once

#include <cstdint>

namespace hgt {

enum class Mod : int { V = 0, T = 1 };

inline Mod other(Mod m) { return m == Mod::V ? Mod::T : Mod::V; }
inline int idx(Mod m) { return static_cast<int>(m); }
inline const char* name(Mod m) { return m == Mod::V ? "V" : "T"; }

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

}  // namespace hgt
