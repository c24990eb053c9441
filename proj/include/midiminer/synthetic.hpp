// Deterministic synthetic songs with stereotyped melody, bass and harmony
// tracks, used to train and exercise the track classifier when no labelled
// corpus is at hand.

#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "midiminer/forest.hpp"
#include "midiminer/midi_io.hpp"

namespace midiminer {

struct SyntheticSongOptions {
  std::optional<int> bars;     // random 16-32 when unset
  std::optional<double> bpm;   // random 80-140 when unset
  std::optional<bool> drums;   // random when unset
  int ppq = 480;
  double informative_name_rate = 0.7;
};

struct SyntheticSong {
  MidiFile file;
  std::vector<std::pair<int, Role>> labels;  // (track index, role)
};

namespace detail {

class SongRng {
 public:
  explicit SongRng(std::uint64_t seed) : engine_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  bool chance(double p) { return real(0.0, 1.0) < p; }
  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(uniform(0, static_cast<int>(items.size()) - 1))];
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Nearest pitch >= lo with the given pitch class.
inline int place(int pitch_class, int lo) {
  int p = lo + ((pitch_class - lo) % 12 + 12) % 12;
  return p;
}

}  // namespace detail

inline SyntheticSong generate_song(std::uint64_t seed, const SyntheticSongOptions& options = {}) {
  detail::SongRng rng(seed);
  const bool minor = rng.chance(0.35);
  const int tonic = rng.uniform(0, 11);
  const std::array<int, 7> major_steps{0, 2, 4, 5, 7, 9, 11};
  const std::array<int, 7> minor_steps{0, 2, 3, 5, 7, 8, 10};
  const auto& steps = minor ? minor_steps : major_steps;
  auto degree_pc = [&](int degree) { return (tonic + steps[static_cast<std::size_t>(((degree % 7) + 7) % 7)]) % 12; };

  const int bars = options.bars.value_or(rng.uniform(16, 32));
  const double bpm = options.bpm.value_or(rng.uniform(80, 140));
  const bool triple = rng.chance(0.2);
  const int beats_per_bar = triple ? 3 : 4;
  const bool drums = options.drums.value_or(rng.chance(0.5));
  const int harmony_tracks = rng.chance(0.4) ? 2 : 1;

  const std::vector<std::vector<int>> progressions{
      {0, 3, 4, 0}, {0, 5, 3, 4}, {0, 4, 5, 3}, {5, 3, 0, 4}, {0, 3, 0, 4}, {1, 4, 0, 0}};
  const std::vector<int>& progression = rng.pick(progressions);
  auto chord_root = [&](int bar) { return progression[static_cast<std::size_t>(bar) % progression.size()]; };

  const auto bar_beats = static_cast<double>(beats_per_bar);
  const double song_end = bars * bar_beats;

  // Melody: stepwise line in the upper register, short notes, one voice.
  std::vector<Note> melody;
  {
    const std::vector<std::vector<double>> rhythms4{
        {1, 1, 1, 1}, {0.5, 0.5, 1, 2}, {1.5, 0.5, 1, 1}, {0.5, 0.5, 0.5, 0.5, 1, 1}, {2, 1, 0.5, 0.5},
        {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5}};
    const std::vector<std::vector<double>> rhythms3{{1, 1, 1}, {2, 1}, {0.5, 0.5, 1, 1}, {1.5, 0.5, 1}};
    int degree = 7 + rng.uniform(0, 4);
    const int base = 60 + tonic;
    const int velocity = rng.uniform(88, 110);
    for (int bar = 0; bar < bars; ++bar) {
      const auto& rhythm = rng.pick(triple ? rhythms3 : rhythms4);
      double t = bar * bar_beats;
      for (std::size_t i = 0; i < rhythm.size(); ++i) {
        if (i == 0) {
          // Land on a chord tone in the octave closest to the current line.
          const int target = chord_root(bar) + 2 * rng.uniform(0, 2);
          int best = target;
          for (int k = -2; k <= 3; ++k) {
            if (std::abs(target + 7 * k - degree) < std::abs(best - degree)) best = target + 7 * k;
          }
          degree = best;
        } else {
          const int roll = rng.uniform(0, 9);
          const int sign = rng.chance(0.5) ? 1 : -1;
          degree += roll < 4 ? sign : roll < 7 ? 2 * sign : roll < 8 ? 0 : 3 * sign;
        }
        degree = std::clamp(degree, 5, 15);
        const int octave = degree / 7;
        const int pitch = base + 12 * (octave - 1) + steps[static_cast<std::size_t>(degree % 7)];
        if (!(i > 0 && rng.chance(0.08))) {
          melody.push_back({t, rhythm[i] * 0.95, std::clamp(pitch, 55, 96), velocity + rng.uniform(-6, 6), 0, 0});
        }
        t += rhythm[i];
      }
    }
  }

  // Bass: chord roots in the low register.
  std::vector<Note> bass;
  {
    const int pattern = rng.uniform(0, 3);
    const int velocity = rng.uniform(78, 100);
    for (int bar = 0; bar < bars; ++bar) {
      const int root_pc = degree_pc(chord_root(bar));
      const int fifth_pc = degree_pc(chord_root(bar) + 4);
      const int root = detail::place(root_pc, 33);
      const int fifth = detail::place(fifth_pc, 33);
      const double t0 = bar * bar_beats;
      std::vector<std::pair<double, int>> hits;
      switch (pattern) {
        case 0: hits = {{bar_beats, root}}; break;
        case 1:
          hits = triple ? std::vector<std::pair<double, int>>{{2, root}, {1, fifth}}
                        : std::vector<std::pair<double, int>>{{2, root}, {2, fifth}};
          break;
        case 2:
          for (int b = 0; b < beats_per_bar; ++b) hits.push_back({1, b % 2 == 0 ? root : fifth});
          break;
        default:
          for (int b = 0; b < 2 * beats_per_bar; ++b) hits.push_back({0.5, root});
          break;
      }
      double t = t0;
      for (const auto& [length, pitch] : hits) {
        bass.push_back({t, length * 0.9, pitch, velocity + rng.uniform(-5, 5), 0, 1});
        t += length;
      }
    }
  }

  // Harmony: block chords, sustained pads or broken chords in the middle register.
  std::vector<std::vector<Note>> harmony(static_cast<std::size_t>(harmony_tracks));
  for (int h = 0; h < harmony_tracks; ++h) {
    const int style = rng.uniform(0, 2);
    const int channel = 2 + h;
    const int velocity = rng.uniform(58, 80);
    const int low = rng.uniform(50, 56);
    auto& notes = harmony[static_cast<std::size_t>(h)];
    for (int bar = 0; bar < bars; ++bar) {
      const int root = chord_root(bar);
      const int tones = rng.chance(0.3) ? 4 : 3;
      std::vector<int> voicing;
      for (int k = 0; k < tones; ++k) voicing.push_back(detail::place(degree_pc(root + 2 * k), low));
      std::sort(voicing.begin(), voicing.end());
      const double t0 = bar * bar_beats;
      if (style == 0) {
        for (int p : voicing) notes.push_back({t0, bar_beats * 0.98, p, velocity, 0, channel});
      } else if (style == 1) {
        const double half = bar_beats / 2.0;
        for (int rep = 0; rep < 2; ++rep) {
          for (int p : voicing) notes.push_back({t0 + rep * half, half * 0.95, p, velocity, 0, channel});
        }
      } else {
        for (int b = 0; b < 2 * beats_per_bar; ++b) {
          const int p = voicing[static_cast<std::size_t>(b) % voicing.size()];
          notes.push_back({t0 + 0.5 * b, 0.5, p, velocity, 0, channel});
          if (b % beats_per_bar == 0) {
            notes.push_back({t0 + 0.5 * b, bar_beats / 2.0, voicing.front(), velocity, 0, channel});
          }
        }
      }
    }
  }

  std::vector<Note> drum_notes;
  if (drums) {
    for (int bar = 0; bar < bars; ++bar) {
      for (int e = 0; e < 2 * beats_per_bar; ++e) {
        const double t = bar * bar_beats + 0.5 * e;
        drum_notes.push_back({t, 0.25, 42, 70, 0, kDrumChannel});
        if (e % 4 == 0) drum_notes.push_back({t, 0.25, 36, 100, 0, kDrumChannel});
        if (e % 4 == 2) drum_notes.push_back({t, 0.25, 38, 95, 0, kDrumChannel});
      }
    }
  }

  struct Part {
    std::optional<Role> role;
    std::vector<Note> notes;
    std::string name;
    int program;
    int channel;
  };
  const bool informative = rng.chance(options.informative_name_rate);
  const std::vector<std::string> melody_names{"Melody", "Vocal", "Lead Vocal", "melody line"};
  const std::vector<std::string> bass_names{"Bass", "Finger Bass", "Synth Bass"};
  const std::vector<std::string> harmony_names{"Chords", "Pad", "Guitar", "Piano Comp", "Strings Pad"};
  const std::vector<int> melody_programs{0, 40, 56, 65, 73, 80};
  const std::vector<int> bass_programs{32, 33, 34, 38};
  const std::vector<int> harmony_programs{0, 4, 24, 48, 89};

  std::vector<Part> parts;
  parts.push_back({Role::Melody, std::move(melody), rng.pick(melody_names), rng.pick(melody_programs), 0});
  parts.push_back({Role::Bass, std::move(bass), rng.pick(bass_names), rng.pick(bass_programs), 1});
  for (int h = 0; h < harmony_tracks; ++h) {
    parts.push_back({Role::Harmony, std::move(harmony[static_cast<std::size_t>(h)]), rng.pick(harmony_names),
                     rng.pick(harmony_programs), 2 + h});
  }
  if (drums) parts.push_back({std::nullopt, std::move(drum_notes), "Drums", 0, kDrumChannel});
  std::shuffle(parts.begin(), parts.end(), rng.engine());

  SyntheticSong song;
  song.file.format = 1;
  song.file.ppq = options.ppq;
  TimeSigMap signatures;
  signatures.entries = {{0.0, beats_per_bar, 4}};
  song.file.tracks.push_back(make_conductor_track(signatures, bpm, options.ppq));
  song.file.tracks.back().end_tick = beats_to_ticks(song_end, options.ppq);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Part& part = parts[i];
    std::string name = informative ? part.name : "Track " + std::to_string(i + 1);
    if (!part.role) name = informative ? "Drums" : "Track " + std::to_string(i + 1);
    song.file.tracks.push_back(
        make_note_track(std::move(name), part.notes, options.ppq,
                        part.channel == kDrumChannel ? std::nullopt : std::optional<int>(part.program), part.channel));
    if (part.role) song.labels.push_back({static_cast<int>(song.file.tracks.size()) - 1, *part.role});
  }
  renumber_tracks(song.file);
  return song;
}

}  // namespace midiminer
