// The 30 per-track features used by the track-role forests.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "midiminer/error.hpp"
#include "midiminer/midi_io.hpp"

namespace midiminer {

inline constexpr std::size_t kFeatureCount = 30;
using FeatureVector = std::array<double, kFeatureCount>;

// Index order is part of the model file contract; append, never reorder.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "note_count",               // [0, inf)
    "notes_per_beat",           // notes / song span in beats
    "pitch_mean",               // [0, 127]
    "pitch_stddev",             // [0, 63.5]
    "pitch_range",              // [0, 127]
    "pitch_mean_in_song_range", // [0, 1], 0.5 when the song has one pitch
    "distinct_pitch_classes",   // [1, 12]
    "pitch_class_entropy",      // [0, log2 12] bits
    "interval_abs_mean",        // semitones, over the top-voice line
    "interval_abs_stddev",      // semitones
    "stepwise_fraction",        // |interval| <= 2, [0, 1]
    "repeat_fraction",          // interval == 0, [0, 1]
    "contour_changes_per_interval",  // [0, 1]
    "duration_mean",            // beats
    "duration_stddev",          // beats
    "long_note_fraction",       // duration >= 1 beat, [0, 1]
    "velocity_mean",            // / 127
    "velocity_stddev",          // / 127
    "polyphony_rate",           // mean notes sounding while the track sounds, >= 1
    "two_voice_fraction",       // of track sounding time, [0, 1]
    "three_voice_fraction",     // of track sounding time, [0, 1]
    "silence_fraction",         // within the track's active span, [0, 1]
    "active_span_fraction",     // track span / song span, [0, 1]
    "highest_voice_share",      // of song sounding time, [0, 1]
    "lowest_voice_share",       // of song sounding time, [0, 1]
    "pitch_mean_minus_song",    // semitones
    "bar_onset_stddev",         // onsets per bar, population stddev
    "on_beat_fraction",         // onsets on integer beats, [0, 1]
    "bigram_repetition",        // 1 - distinct/total top-voice bigrams, [0, 1)
    "low_register_fraction",    // pitch < 48, [0, 1]
};

/// Song-wide information shared by every track's feature extraction. Drum
/// notes are removed on construction.
struct SongContext {
  std::vector<Note> notes;
  TimeSigMap time_signatures;
  double start_beat = 0.0;
  double end_beat = 0.0;
  int pitch_min = 0;
  int pitch_max = 0;
  double pitch_mean = 0.0;

  SongContext(std::span<const Note> all_notes, TimeSigMap signatures)
      : time_signatures(std::move(signatures)) {
    for (const Note& note : all_notes) {
      if (!note.is_drum()) notes.push_back(note);
    }
    if (notes.empty()) return;
    start_beat = notes.front().onset_beats;
    end_beat = notes.front().end_beats();
    pitch_min = pitch_max = notes.front().pitch;
    double sum = 0.0;
    for (const Note& note : notes) {
      start_beat = std::min(start_beat, note.onset_beats);
      end_beat = std::max(end_beat, note.end_beats());
      pitch_min = std::min(pitch_min, note.pitch);
      pitch_max = std::max(pitch_max, note.pitch);
      sum += note.pitch;
    }
    pitch_mean = sum / static_cast<double>(notes.size());
  }

  double span() const { return end_beat - start_beat; }
};

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

template <typename Range>
MeanStd mean_std(const Range& values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

struct VoiceTimes {
  double track_sounding = 0.0;  // >= 1 track note
  double track_two = 0.0;       // >= 2 track notes
  double track_three = 0.0;     // >= 3 track notes
  double song_sounding = 0.0;   // >= 1 song note
  double highest = 0.0;         // track holds the song's top pitch
  double lowest = 0.0;          // track holds the song's bottom pitch
};

/// Sweeps the union of note boundaries, tracking sounding pitches in the
/// track and in the whole song.
inline VoiceTimes voice_times(std::span<const Note> track, std::span<const Note> song) {
  struct Edge {
    double time;
    int delta;
    int pitch;
    bool in_track;
  };
  std::vector<Edge> edges;
  edges.reserve(2 * (track.size() + song.size()));
  for (const Note& n : track) {
    edges.push_back({n.onset_beats, +1, n.pitch, true});
    edges.push_back({n.end_beats(), -1, n.pitch, true});
  }
  for (const Note& n : song) {
    edges.push_back({n.onset_beats, +1, n.pitch, false});
    edges.push_back({n.end_beats(), -1, n.pitch, false});
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.time < b.time; });

  VoiceTimes out;
  std::multiset<int> track_active;
  std::multiset<int> song_active;
  std::size_t i = 0;
  while (i < edges.size()) {
    const double t = edges[i].time;
    for (; i < edges.size() && edges[i].time == t; ++i) {
      auto& active = edges[i].in_track ? track_active : song_active;
      if (edges[i].delta > 0) {
        active.insert(edges[i].pitch);
      } else {
        active.erase(active.find(edges[i].pitch));
      }
    }
    if (i == edges.size()) break;
    const double length = edges[i].time - t;
    const std::size_t voices = track_active.size();
    if (voices >= 1) out.track_sounding += length;
    if (voices >= 2) out.track_two += length;
    if (voices >= 3) out.track_three += length;
    if (song_active.empty()) continue;
    out.song_sounding += length;
    if (voices == 0) continue;
    if (*track_active.rbegin() >= *song_active.rbegin()) out.highest += length;
    if (*track_active.begin() <= *song_active.begin()) out.lowest += length;
  }
  return out;
}

/// Highest pitch at each distinct onset, in time order.
inline std::vector<int> top_voice(std::span<const Note> notes) {
  std::map<double, int> top;
  for (const Note& n : notes) {
    auto [it, inserted] = top.try_emplace(n.onset_beats, n.pitch);
    if (!inserted) it->second = std::max(it->second, n.pitch);
  }
  std::vector<int> line;
  line.reserve(top.size());
  for (const auto& [onset, pitch] : top) line.push_back(pitch);
  return line;
}

}  // namespace detail

/// Computes the feature vector of one track. `song` must contain the track's
/// notes alongside every other track's. Drum notes are ignored.
inline FeatureVector extract_features(std::span<const Note> track_notes, const SongContext& song) {
  std::vector<Note> notes;
  for (const Note& note : track_notes) {
    if (!note.is_drum()) notes.push_back(note);
  }
  if (notes.empty()) throw Error(ErrorCode::EmptyTrack, "track has no pitched notes");
  std::sort(notes.begin(), notes.end(), note_order);

  FeatureVector f{};
  const double n = static_cast<double>(notes.size());
  const double song_span = song.span();

  std::vector<double> pitches;
  std::vector<double> durations;
  std::vector<double> velocities;
  std::array<int, 12> pc_counts{};
  int pitch_lo = 127;
  int pitch_hi = 0;
  int below_48 = 0;
  int long_notes = 0;
  int on_beat = 0;
  double first_onset = notes.front().onset_beats;
  double last_end = notes.front().end_beats();
  for (const Note& note : notes) {
    pitches.push_back(note.pitch);
    durations.push_back(note.duration_beats);
    velocities.push_back(note.velocity / 127.0);
    ++pc_counts[note.pitch_class()];
    pitch_lo = std::min(pitch_lo, note.pitch);
    pitch_hi = std::max(pitch_hi, note.pitch);
    if (note.pitch < 48) ++below_48;
    if (note.duration_beats >= 1.0) ++long_notes;
    if (std::abs(note.onset_beats - std::round(note.onset_beats)) < 1e-6) ++on_beat;
    first_onset = std::min(first_onset, note.onset_beats);
    last_end = std::max(last_end, note.end_beats());
  }
  const auto pitch_stats = detail::mean_std(pitches);
  const auto duration_stats = detail::mean_std(durations);
  const auto velocity_stats = detail::mean_std(velocities);

  f[0] = n;
  f[1] = detail::safe_ratio(n, song_span);
  f[2] = pitch_stats.mean;
  f[3] = pitch_stats.stddev;
  f[4] = pitch_hi - pitch_lo;
  f[5] = song.pitch_max > song.pitch_min ? (pitch_stats.mean - song.pitch_min) / (song.pitch_max - song.pitch_min)
                                         : 0.5;
  double entropy = 0.0;
  int distinct = 0;
  for (int count : pc_counts) {
    if (count == 0) continue;
    ++distinct;
    const double p = count / n;
    entropy -= p * std::log2(p);
  }
  f[6] = distinct;
  f[7] = entropy + 0.0;  // normalizes -0.0

  const std::vector<int> line = detail::top_voice(notes);
  std::vector<double> abs_intervals;
  int stepwise = 0;
  int repeats = 0;
  int contour_changes = 0;
  int last_direction = 0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const int d = line[i] - line[i - 1];
    abs_intervals.push_back(std::abs(d));
    if (std::abs(d) <= 2) ++stepwise;
    if (d == 0) ++repeats;
    const int direction = (d > 0) - (d < 0);
    if (direction != 0) {
      if (last_direction != 0 && direction != last_direction) ++contour_changes;
      last_direction = direction;
    }
  }
  const double intervals = static_cast<double>(abs_intervals.size());
  const auto interval_stats = detail::mean_std(abs_intervals);
  f[8] = interval_stats.mean;
  f[9] = interval_stats.stddev;
  f[10] = detail::safe_ratio(stepwise, intervals);
  f[11] = detail::safe_ratio(repeats, intervals);
  f[12] = detail::safe_ratio(contour_changes, intervals);

  f[13] = duration_stats.mean;
  f[14] = duration_stats.stddev;
  f[15] = long_notes / n;
  f[16] = velocity_stats.mean;
  f[17] = velocity_stats.stddev;

  const detail::VoiceTimes voices = detail::voice_times(notes, song.notes);
  double total_duration = 0.0;
  for (double d : durations) total_duration += d;
  const double active_span = last_end - first_onset;
  f[18] = detail::safe_ratio(total_duration, voices.track_sounding);
  f[19] = detail::safe_ratio(voices.track_two, voices.track_sounding);
  f[20] = detail::safe_ratio(voices.track_three, voices.track_sounding);
  f[21] = std::clamp(1.0 - detail::safe_ratio(voices.track_sounding, active_span), 0.0, 1.0);
  f[22] = std::clamp(detail::safe_ratio(active_span, song_span), 0.0, 1.0);
  f[23] = detail::safe_ratio(voices.highest, voices.song_sounding);
  f[24] = detail::safe_ratio(voices.lowest, voices.song_sounding);
  f[25] = pitch_stats.mean - song.pitch_mean;

  const int first_bar = bar_of(std::max(0.0, song.start_beat), song.time_signatures);
  const int last_bar = std::max(first_bar, bar_count(song.end_beat, song.time_signatures));
  std::vector<double> per_bar(static_cast<std::size_t>(last_bar - first_bar + 1), 0.0);
  for (const Note& note : notes) {
    const int bar = std::clamp(bar_of(note.onset_beats, song.time_signatures), first_bar, last_bar);
    per_bar[static_cast<std::size_t>(bar - first_bar)] += 1.0;
  }
  f[26] = detail::mean_std(per_bar).stddev;
  f[27] = on_beat / n;

  std::set<std::pair<int, int>> bigrams;
  for (std::size_t i = 1; i < line.size(); ++i) bigrams.insert({line[i - 1], line[i]});
  const double bigram_total = line.size() > 1 ? static_cast<double>(line.size() - 1) : 0.0;
  f[28] = bigram_total > 0.0 ? 1.0 - static_cast<double>(bigrams.size()) / bigram_total : 0.0;
  f[29] = below_48 / n;
  return f;
}

}  // namespace midiminer
