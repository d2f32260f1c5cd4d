#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "qpass/errors.hpp"

namespace qpass {

/// Receiver polarization channel. H/V form the Z basis, D/A the X basis.
enum class Channel : uint8_t { H = 0, V = 1, D = 2, A = 3 };

enum class Basis : uint8_t { Z = 0, X = 1 };

enum class Intensity : uint8_t { Signal = 0, Decoy = 1, Vacuum = 2 };

inline constexpr std::array<Channel, 4> kChannels{Channel::H, Channel::V, Channel::D,
                                                  Channel::A};
inline constexpr std::array<Intensity, 3> kIntensities{Intensity::Signal, Intensity::Decoy,
                                                       Intensity::Vacuum};

/// Fixed-order per-channel storage, indexed by Channel.
template <typename T>
using ChannelArray = std::array<T, 4>;

template <typename T>
using IntensityArray = std::array<T, 3>;

template <typename T>
constexpr T& at(ChannelArray<T>& a, Channel c) {
    return a[static_cast<size_t>(c)];
}
template <typename T>
constexpr const T& at(const ChannelArray<T>& a, Channel c) {
    return a[static_cast<size_t>(c)];
}
template <typename T>
constexpr T& at(IntensityArray<T>& a, Intensity i) {
    return a[static_cast<size_t>(i)];
}
template <typename T>
constexpr const T& at(const IntensityArray<T>& a, Intensity i) {
    return a[static_cast<size_t>(i)];
}

constexpr Basis basis_of(Channel c) {
    return (c == Channel::H || c == Channel::V) ? Basis::Z : Basis::X;
}

/// Bit value a click in this channel decodes to (H,D -> 0; V,A -> 1).
constexpr int bit_of(Channel c) {
    return (c == Channel::H || c == Channel::D) ? 0 : 1;
}

/// Channel that encodes (basis, bit).
constexpr Channel channel_of(Basis b, int bit) {
    if (b == Basis::Z) return bit == 0 ? Channel::H : Channel::V;
    return bit == 0 ? Channel::D : Channel::A;
}

constexpr std::string_view name_of(Channel c) {
    switch (c) {
        case Channel::H: return "H";
        case Channel::V: return "V";
        case Channel::D: return "D";
        case Channel::A: return "A";
    }
    return "?";
}

constexpr std::string_view name_of(Basis b) { return b == Basis::Z ? "Z" : "X"; }

constexpr std::string_view name_of(Intensity i) {
    switch (i) {
        case Intensity::Signal: return "signal";
        case Intensity::Decoy: return "decoy";
        case Intensity::Vacuum: return "vacuum";
    }
    return "?";
}

inline Channel channel_from_name(std::string_view s) {
    if (s == "H") return Channel::H;
    if (s == "V") return Channel::V;
    if (s == "D") return Channel::D;
    if (s == "A") return Channel::A;
    throw ConfigError("unknown channel name: " + std::string(s));
}

inline Basis basis_from_name(std::string_view s) {
    if (s == "Z") return Basis::Z;
    if (s == "X") return Basis::X;
    throw ConfigError("unknown basis name: " + std::string(s));
}

inline Intensity intensity_from_name(std::string_view s) {
    if (s == "signal") return Intensity::Signal;
    if (s == "decoy") return Intensity::Decoy;
    if (s == "vacuum") return Intensity::Vacuum;
    throw ConfigError("unknown intensity name: " + std::string(s));
}

}  // namespace qpass
