// Key index estimation, two-class pitch spelling and spiral-array key finding.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string_view>
#include <vector>

#include "midiminer/error.hpp"
#include "midiminer/midi_io.hpp"
#include "midiminer/spiral.hpp"

namespace midiminer {

enum class SpellingClass { Sharps, Flats };

inline constexpr std::string_view to_string(SpellingClass c) { return c == SpellingClass::Sharps ? "sharps" : "flats"; }

struct SpelledNote {
  Note note;
  int fifth_index = 0;

  bool operator==(const SpelledNote&) const = default;
};

struct KeyEstimate {
  KeyId key;
  double distance = 0.0;    // from the center of effect to the chosen key
  double confidence = 0.0;  // second-nearest distance minus nearest distance

  bool operator==(const KeyEstimate&) const = default;
};

/// Most frequent pitch class by onset count among non-drum notes. Ties go to
/// the larger total duration, then to the lower pitch class.
inline int estimate_key_index(std::span<const Note> notes) {
  std::array<int, 12> counts{};
  std::array<double, 12> durations{};
  bool any = false;
  for (const Note& note : notes) {
    if (note.is_drum()) continue;
    any = true;
    ++counts[note.pitch_class()];
    durations[note.pitch_class()] += note.duration_beats;
  }
  if (!any) throw Error(ErrorCode::NoNotes, "no pitched notes to estimate a key from");
  int best = 0;
  for (int pc = 1; pc < 12; ++pc) {
    if (counts[pc] > counts[best] || (counts[pc] == counts[best] && durations[pc] > durations[best])) best = pc;
  }
  return best;
}

/// Key indices C, D, E, G, A, B spell accidentals as sharps; the rest as flats.
inline SpellingClass spelling_class(int key_index) {
  switch (((key_index % 12) + 12) % 12) {
    case 0:
    case 2:
    case 4:
    case 7:
    case 9:
    case 11: return SpellingClass::Sharps;
    default: return SpellingClass::Flats;
  }
}

inline int spell_pitch_class(int pitch_class, SpellingClass spelling) {
  static constexpr std::array<int, 12> kSharps{0, 7, 2, 9, 4, -1, 6, 1, 8, 3, 10, 5};
  static constexpr std::array<int, 12> kFlats{0, -5, 2, -3, 4, -1, -6, 1, -4, 3, -2, 5};
  const int pc = ((pitch_class % 12) + 12) % 12;
  return spelling == SpellingClass::Sharps ? kSharps[pc] : kFlats[pc];
}

/// Drum notes are dropped; every other note receives its line-of-fifths index.
inline std::vector<SpelledNote> spell_notes(std::span<const Note> notes, SpellingClass spelling) {
  std::vector<SpelledNote> spelled;
  spelled.reserve(notes.size());
  for (const Note& note : notes) {
    if (note.is_drum()) continue;
    spelled.push_back({note, spell_pitch_class(note.pitch_class(), spelling)});
  }
  return spelled;
}

/// The 24 candidate keys with tonics spelled in the given class.
inline std::vector<KeyId> candidate_keys(SpellingClass spelling) {
  std::vector<KeyId> keys;
  keys.reserve(24);
  for (int pc = 0; pc < 12; ++pc) {
    const int k = spell_pitch_class(pc, spelling);
    keys.push_back({k, Mode::Major});
    keys.push_back({k, Mode::Minor});
  }
  return keys;
}

/// Nearest key to the duration-weighted center of effect. Distances within
/// 1e-12 count as ties: major beats minor, then the smaller |fifth index|,
/// then the smaller fifth index.
inline KeyEstimate detect_key(std::span<const SpelledNote> spelled, const SpiralParams& params,
                              SpellingClass spelling) {
  std::vector<WeightedPoint> cloud;
  cloud.reserve(spelled.size());
  for (const SpelledNote& sn : spelled) {
    if (sn.note.is_drum() || !(sn.note.duration_beats > 0.0)) continue;
    cloud.push_back({pitch_position(sn.fifth_index, params), sn.note.duration_beats});
  }
  if (cloud.empty()) throw Error(ErrorCode::EmptyCloud, "no sounding notes for key detection");
  const Point3 ce = center_of_effect(cloud);

  struct Scored {
    KeyId key;
    double distance;
  };
  std::vector<Scored> scored;
  for (const KeyId& key : candidate_keys(spelling)) scored.push_back({key, distance(ce, key_center(key, params))});
  auto before = [](const Scored& a, const Scored& b) {
    if (std::abs(a.distance - b.distance) > 1e-12) return a.distance < b.distance;
    if (a.key.mode != b.key.mode) return a.key.mode == Mode::Major;
    if (std::abs(a.key.fifth_index) != std::abs(b.key.fifth_index)) {
      return std::abs(a.key.fifth_index) < std::abs(b.key.fifth_index);
    }
    return a.key.fifth_index < b.key.fifth_index;
  };
  std::sort(scored.begin(), scored.end(), before);
  return {scored[0].key, scored[0].distance, scored[1].distance - scored[0].distance};
}

struct KeyOptions {
  /// When set, the key index is also read as a minor tonic: notes are spelled
  /// a second time with the class of its relative major and the reading whose
  /// key lies nearer the center of effect is kept. With it unset, spelling
  /// follows the key index alone.
  bool mode_aware_spelling = true;
};

struct TonalAnalysis {
  int key_index = 0;
  SpellingClass spelling = SpellingClass::Sharps;
  std::vector<SpelledNote> spelled;
  KeyEstimate key;
};

/// Full tonal pipeline: key index, spelling, then key detection.
inline TonalAnalysis analyze_tonality(std::span<const Note> notes, const SpiralParams& params,
                                      const KeyOptions& options = {}) {
  TonalAnalysis result;
  result.key_index = estimate_key_index(notes);
  result.spelling = spelling_class(result.key_index);
  result.spelled = spell_notes(notes, result.spelling);
  result.key = detect_key(result.spelled, params, result.spelling);

  if (options.mode_aware_spelling) {
    const SpellingClass minor_reading = spelling_class(result.key_index + 3);
    if (minor_reading != result.spelling) {
      auto spelled = spell_notes(notes, minor_reading);
      const KeyEstimate key = detect_key(spelled, params, minor_reading);
      if (key.distance < result.key.distance - 1e-12) {
        result.spelling = minor_reading;
        result.spelled = std::move(spelled);
        result.key = key;
      }
    }
  }
  return result;
}

}  // namespace midiminer
