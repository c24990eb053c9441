// Tonal tension over time: cloud diameter, cloud momentum and tensile strain,
// per-bar aggregation, and key-change flagging from the strain curve.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "midiminer/midi_io.hpp"
#include "midiminer/spiral.hpp"
#include "midiminer/tonal.hpp"

namespace midiminer {

inline constexpr double kDefaultWindowBeats = 2.0;

/// Overlaps shorter than this (in beats) are treated as rounding slivers.
inline constexpr double kMinOverlapBeats = 1e-9;

struct CloudPoint {
  int fifth_index = 0;
  Point3 position;
  double weight = 0.0;
};

/// Pitches sounding in [start_beat, end_beat). Each spelled pitch appears once,
/// weighted by its total sounding time inside the window.
struct Cloud {
  double start_beat = 0.0;
  double end_beat = 0.0;
  std::vector<CloudPoint> points;

  bool empty() const { return points.empty(); }

  Point3 center() const {
    std::vector<WeightedPoint> weighted;
    weighted.reserve(points.size());
    for (const CloudPoint& p : points) weighted.push_back({p.position, p.weight});
    return center_of_effect(weighted);
  }
};

inline double piece_end_beat(std::span<const SpelledNote> spelled) {
  double end = 0.0;
  for (const SpelledNote& sn : spelled) {
    if (!sn.note.is_drum()) end = std::max(end, sn.note.end_beats());
  }
  return end;
}

inline std::size_t window_count(double piece_end, double window_beats) {
  if (piece_end <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(piece_end / window_beats - 1e-9));
}

inline std::vector<Cloud> window_clouds(std::span<const SpelledNote> spelled, double window_beats,
                                        double piece_end, const SpiralParams& params) {
  if (!(window_beats > 0.0)) throw Error(ErrorCode::InvalidArgument, "window length must be positive");
  const std::size_t n = window_count(piece_end, window_beats);
  std::vector<std::map<int, double>> weights(n);

  for (const SpelledNote& sn : spelled) {
    const Note& note = sn.note;
    if (note.is_drum() || n == 0) continue;
    const double end = note.end_beats();
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(note.onset_beats / window_beats)));
    for (std::size_t i = first; i < n; ++i) {
      const double start = static_cast<double>(i) * window_beats;
      if (start >= end) break;
      const double overlap = std::min(start + window_beats, end) - std::max(start, note.onset_beats);
      if (overlap > kMinOverlapBeats) weights[i][sn.fifth_index] += overlap;
    }
  }

  std::vector<Cloud> clouds(n);
  for (std::size_t i = 0; i < n; ++i) {
    clouds[i].start_beat = static_cast<double>(i) * window_beats;
    clouds[i].end_beat = clouds[i].start_beat + window_beats;
    for (const auto& [fifth, weight] : weights[i]) {
      clouds[i].points.push_back({fifth, pitch_position(fifth, params), weight});
    }
  }
  return clouds;
}

/// Largest pairwise distance between the cloud's pitch positions.
inline double cloud_diameter(const Cloud& cloud) {
  double best = 0.0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    for (std::size_t j = i + 1; j < cloud.points.size(); ++j) {
      best = std::max(best, distance(cloud.points[i].position, cloud.points[j].position));
    }
  }
  return best;
}

/// Distance between consecutive centers of effect; 0 when either is empty.
inline double cloud_momentum(const Cloud& previous, const Cloud& current) {
  if (previous.empty() || current.empty()) return 0.0;
  return distance(previous.center(), current.center());
}

/// Distance from the cloud's center of effect to the key; 0 for empty clouds.
inline double tensile_strain(const Cloud& cloud, const KeyId& key, const SpiralParams& params) {
  if (cloud.empty()) return 0.0;
  return distance(cloud.center(), key_center(key, params));
}

struct WindowTension {
  double start_beat = 0.0;
  int bar = 1;
  double diameter = 0.0;
  double momentum = 0.0;
  double strain = 0.0;

  bool operator==(const WindowTension&) const = default;
};

struct BarTension {
  int bar = 1;
  double diameter = 0.0;
  double momentum = 0.0;
  double strain = 0.0;

  bool operator==(const BarTension&) const = default;
};

struct KeyChange {
  int bar = 1;
  double beat = 0.0;

  bool operator==(const KeyChange&) const = default;
};

struct KeySegment {
  double start_beat = 0.0;
  KeyEstimate key;

  bool operator==(const KeySegment&) const = default;
};

struct TensionSeries {
  double window_beats = kDefaultWindowBeats;
  KeyId key;
  std::vector<WindowTension> windows;
  std::vector<BarTension> per_bar;
  std::vector<KeyChange> key_changes;
  /// Local keys after re-keying; empty for a single global key.
  std::vector<KeySegment> segments;

  bool operator==(const TensionSeries&) const = default;
};

namespace detail {

/// Per-bar means of the windows starting in each bar. A bar with no window
/// start (bars shorter than a window) takes the window covering its first beat.
inline std::vector<BarTension> aggregate_bars(const std::vector<WindowTension>& windows, double window_beats,
                                              double piece_end, const TimeSigMap& map) {
  const int bars = bar_count(piece_end, map);
  std::vector<BarTension> per_bar(static_cast<std::size_t>(bars));
  std::vector<int> counts(static_cast<std::size_t>(bars), 0);
  for (int b = 0; b < bars; ++b) per_bar[b].bar = b + 1;
  for (const WindowTension& w : windows) {
    if (w.bar < 1 || w.bar > bars) continue;
    BarTension& target = per_bar[w.bar - 1];
    target.diameter += w.diameter;
    target.momentum += w.momentum;
    target.strain += w.strain;
    ++counts[w.bar - 1];
  }
  for (int b = 0; b < bars; ++b) {
    BarTension& target = per_bar[b];
    if (counts[b] > 0) {
      target.diameter /= counts[b];
      target.momentum /= counts[b];
      target.strain /= counts[b];
      continue;
    }
    const auto index = static_cast<std::size_t>(std::floor(bar_start_beat(b + 1, map) / window_beats + 1e-9));
    if (index < windows.size()) {
      target.diameter = windows[index].diameter;
      target.momentum = windows[index].momentum;
      target.strain = windows[index].strain;
    }
  }
  return per_bar;
}

}  // namespace detail

/// Per-window and per-bar tension of the spelled notes against `key`.
inline TensionSeries compute_tension(std::span<const SpelledNote> spelled, const KeyId& key, double window_beats,
                                     const TimeSigMap& map, const SpiralParams& params) {
  TensionSeries series;
  series.window_beats = window_beats;
  series.key = key;
  const double end = piece_end_beat(spelled);
  const std::vector<Cloud> clouds = window_clouds(spelled, window_beats, end, params);
  const Point3 key_point = key_center(key, params);

  series.windows.reserve(clouds.size());
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    const Cloud& cloud = clouds[i];
    WindowTension w;
    w.start_beat = cloud.start_beat;
    w.bar = bar_of(cloud.start_beat, map);
    if (!cloud.empty()) {
      const Point3 ce = cloud.center();
      w.diameter = cloud_diameter(cloud);
      w.strain = distance(ce, key_point);
      if (i > 0 && !clouds[i - 1].empty()) w.momentum = distance(clouds[i - 1].center(), ce);
    }
    series.windows.push_back(w);
  }
  series.per_bar = detail::aggregate_bars(series.windows, window_beats, end, map);
  return series;
}

struct KeyChangeOptions {
  double span_beats = 16.0;
  double ratio = 2.0;
  int consecutive = 4;
  double epsilon = 1e-6;
  double suppression_beats = 16.0;
  /// Compare each span with the one after it instead of the one before it.
  bool forward = false;
};

/// Slides two adjacent spans of `span_beats` across the window strains in steps
/// of one window. A step is hot when the later span's mean strain exceeds
/// `ratio` times the earlier span's mean (forward mode compares the earlier
/// span against the later one). After `consecutive` hot steps a change is
/// flagged at the span boundary of the first hot step, and no further flag is
/// raised within `suppression_beats` of it.
inline std::vector<KeyChange> detect_key_changes(const TensionSeries& series, const TimeSigMap& map,
                                                 const KeyChangeOptions& options = {}) {
  std::vector<KeyChange> flags;
  const std::size_t n = series.windows.size();
  const auto m = static_cast<std::size_t>(std::max(1.0, std::round(options.span_beats / series.window_beats)));
  if (n < 2 * m) return flags;

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series.windows[i].strain;
  auto mean = [&](std::size_t begin) { return (prefix[begin + m] - prefix[begin]) / static_cast<double>(m); };

  int run = 0;
  std::size_t first_hot = 0;
  double suppressed_until = -std::numeric_limits<double>::infinity();
  for (std::size_t boundary = m; boundary + m <= n; ++boundary) {
    const double boundary_beat = series.windows[boundary].start_beat;
    if (boundary_beat < suppressed_until) {
      run = 0;
      continue;
    }
    const double before = mean(boundary - m);
    const double after = mean(boundary);
    const double numerator = options.forward ? before : after;
    const double denominator = options.forward ? after : before;
    const bool hot = denominator > options.epsilon && numerator / denominator > options.ratio;
    if (!hot) {
      run = 0;
      continue;
    }
    if (run == 0) first_hot = boundary;
    if (++run == options.consecutive) {
      const double beat = series.windows[first_hot].start_beat;
      flags.push_back({bar_of(beat, map), beat});
      suppressed_until = beat + options.suppression_beats;
      run = 0;
    }
  }
  return flags;
}

/// Re-detects the key between consecutive flags and recomputes tensile strain
/// against each segment's local key. Diameter and momentum are unchanged.
inline TensionSeries rekeyed_series(std::span<const SpelledNote> spelled, const TensionSeries& series,
                                    const TimeSigMap& map, const SpiralParams& params, SpellingClass spelling) {
  if (series.key_changes.empty()) return series;

  std::vector<double> boundaries{0.0};
  for (const KeyChange& change : series.key_changes) {
    if (change.beat > boundaries.back()) boundaries.push_back(change.beat);
  }
  boundaries.push_back(std::numeric_limits<double>::infinity());

  TensionSeries out = series;
  const double end = piece_end_beat(spelled);
  const std::vector<Cloud> clouds = window_clouds(spelled, series.window_beats, end, params);

  for (std::size_t s = 0; s + 1 < boundaries.size(); ++s) {
    const double lo = boundaries[s];
    const double hi = boundaries[s + 1];
    std::vector<SpelledNote> segment;
    for (const SpelledNote& sn : spelled) {
      const double onset = std::max(lo, sn.note.onset_beats);
      const double stop = std::min(hi, sn.note.end_beats());
      if (stop - onset <= kMinOverlapBeats) continue;
      SpelledNote clipped = sn;
      clipped.note.onset_beats = onset;
      clipped.note.duration_beats = stop - onset;
      segment.push_back(clipped);
    }
    KeyEstimate local{series.key, 0.0, 0.0};
    if (!segment.empty()) local = detect_key(segment, params, spelling);
    out.segments.push_back({lo, local});

    const Point3 key_point = key_center(local.key, params);
    for (std::size_t i = 0; i < out.windows.size() && i < clouds.size(); ++i) {
      const double start = out.windows[i].start_beat;
      if (start < lo || start >= hi) continue;
      out.windows[i].strain = clouds[i].empty() ? 0.0 : distance(clouds[i].center(), key_point);
    }
  }
  out.per_bar = detail::aggregate_bars(out.windows, out.window_beats, end, map);
  return out;
}

}  // namespace midiminer
