// Spiral-array geometry: pitch classes, chords and keys on nested helices.
//
// Pitches are identified by their line-of-fifths index (C=0, G=1, F=-1, ...).
// Pitch k sits at (r sin(k pi/2), r cos(k pi/2), k h); chords and keys are
// weighted combinations of the positions below them.

#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>

#include "midiminer/config.hpp"
#include "midiminer/error.hpp"

namespace midiminer {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Point3&) const = default;

  Point3& operator+=(const Point3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  friend Point3 operator+(Point3 a, const Point3& b) { return a += b; }
  friend Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Point3 operator*(double s, const Point3& p) { return {s * p.x, s * p.y, s * p.z}; }
  friend Point3 operator/(const Point3& p, double s) { return {p.x / s, p.y / s, p.z / s}; }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

using WeightTriple = std::array<double, 3>;

/// Helix geometry and the weights combining pitches into chords and chords
/// into keys. Defaults are the standard published spiral-array calibration.
struct SpiralParams {
  double r = 1.0;
  double h = std::sqrt(2.0 / 15.0);
  WeightTriple major_chord{0.536, 0.274, 0.19};  // w
  WeightTriple minor_chord{0.536, 0.274, 0.19};  // u
  WeightTriple major_key{0.536, 0.274, 0.19};    // omega
  WeightTriple minor_key{0.536, 0.274, 0.19};    // nu
  double alpha = 0.75;  // share of the major V chord in a minor key's dominant
  double beta = 0.75;   // share of the minor iv chord in a minor key's subdominant

  bool operator==(const SpiralParams&) const = default;

  void validate() const {
    if (!(r > 0.0) || !(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "r and h must be positive");
    for (const WeightTriple* triple : {&major_chord, &minor_chord, &major_key, &minor_key}) {
      double sum = 0.0;
      for (double w : *triple) {
        if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weights must be non-negative");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "weight triple must sum to 1");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "alpha and beta must lie in [0, 1]");
    }
  }
};

/// Reads overrides for r, h, w1..w3, u1..u3, omega1..omega3, nu1..nu3, alpha
/// and beta. Keys may carry a `spiral.` prefix. Unrelated keys are ignored.
inline SpiralParams spiral_params_from_config(const Config& config, SpiralParams base = {}) {
  auto lookup = [&](std::string_view key, double& target) {
    for (const std::string& name : {std::string(key), "spiral." + std::string(key)}) {
      if (auto it = config.find(name); it != config.end()) {
        char* end = nullptr;
        const double value = std::strtod(it->second.c_str(), &end);
        if (end == it->second.c_str() || *end != '\0' || !std::isfinite(value)) {
          throw Error(ErrorCode::InvalidArgument, "bad numeric value for " + name);
        }
        target = value;
      }
    }
  };
  lookup("r", base.r);
  lookup("h", base.h);
  const std::pair<const char*, WeightTriple*> triples[] = {
      {"w", &base.major_chord}, {"u", &base.minor_chord}, {"omega", &base.major_key}, {"nu", &base.minor_key}};
  for (const auto& [prefix, triple] : triples) {
    for (int i = 0; i < 3; ++i) lookup(std::string(prefix) + std::to_string(i + 1), (*triple)[i]);
  }
  lookup("alpha", base.alpha);
  lookup("beta", base.beta);
  base.validate();
  return base;
}

enum class Mode { Major, Minor };
enum class ChordQuality { Major, Minor };

struct KeyId {
  int fifth_index = 0;
  Mode mode = Mode::Major;

  bool operator==(const KeyId&) const = default;
};

inline constexpr std::string_view to_string(Mode mode) { return mode == Mode::Major ? "major" : "minor"; }

/// Position of the pitch with line-of-fifths index `fifth_index`. The quarter
/// turn per fifth is evaluated exactly so that rotations stay bit-stable.
inline Point3 pitch_position(int fifth_index, const SpiralParams& params) {
  static constexpr int kSin[4] = {0, 1, 0, -1};
  static constexpr int kCos[4] = {1, 0, -1, 0};
  const int phase = ((fifth_index % 4) + 4) % 4;
  return {params.r * kSin[phase], params.r * kCos[phase], fifth_index * params.h};
}

inline Point3 chord_center(int root_fifth_index, ChordQuality quality, const SpiralParams& params) {
  const int k = root_fifth_index;
  if (quality == ChordQuality::Major) {
    const auto& w = params.major_chord;
    return w[0] * pitch_position(k, params) + w[1] * pitch_position(k + 1, params) +
           w[2] * pitch_position(k + 4, params);
  }
  const auto& u = params.minor_chord;
  return u[0] * pitch_position(k, params) + u[1] * pitch_position(k + 1, params) +
         u[2] * pitch_position(k - 3, params);
}

inline Point3 key_center(const KeyId& key, const SpiralParams& params) {
  const int k = key.fifth_index;
  if (key.mode == Mode::Major) {
    const auto& omega = params.major_key;
    return omega[0] * chord_center(k, ChordQuality::Major, params) +
           omega[1] * chord_center(k + 1, ChordQuality::Major, params) +
           omega[2] * chord_center(k - 1, ChordQuality::Major, params);
  }
  const auto& nu = params.minor_key;
  const Point3 dominant = params.alpha * chord_center(k + 1, ChordQuality::Major, params) +
                          (1.0 - params.alpha) * chord_center(k + 1, ChordQuality::Minor, params);
  const Point3 subdominant = params.beta * chord_center(k - 1, ChordQuality::Minor, params) +
                             (1.0 - params.beta) * chord_center(k - 1, ChordQuality::Major, params);
  return nu[0] * chord_center(k, ChordQuality::Minor, params) + nu[1] * dominant + nu[2] * subdominant;
}

struct WeightedPoint {
  Point3 point;
  double weight = 0.0;
};

/// Weight-normalized mean of the points.
inline Point3 center_of_effect(std::span<const WeightedPoint> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyCloud, "center of effect of an empty cloud");
  Point3 sum;
  double total = 0.0;
  for (const WeightedPoint& wp : points) {
    if (!(wp.weight > 0.0)) throw Error(ErrorCode::InvalidArgument, "center-of-effect weights must be positive");
    sum += wp.weight * wp.point;
    total += wp.weight;
  }
  return sum / total;
}

/// Pitch class (0-11) of a line-of-fifths index.
inline int fifth_to_pitch_class(int fifth_index) { return (((7 * fifth_index) % 12) + 12) % 12; }

/// Spelled name such as "C", "F#", "Bb", "Cb" or "Fx"-style doubles ("F##").
inline std::string tonic_name(int fifth_index) {
  static constexpr char kLetters[] = {'F', 'C', 'G', 'D', 'A', 'E', 'B'};
  const int shifted = fifth_index + 1;
  const int letter = ((shifted % 7) + 7) % 7;
  const int accidentals = (shifted - letter) / 7;
  std::string name(1, kLetters[letter]);
  if (accidentals > 0) name.append(static_cast<std::size_t>(accidentals), '#');
  if (accidentals < 0) name.append(static_cast<std::size_t>(-accidentals), 'b');
  return name;
}

inline std::string key_name(const KeyId& key) {
  return tonic_name(key.fifth_index) + " " + std::string(to_string(key.mode));
}

}  // namespace midiminer
