// Standard MIDI File reading and writing, plus the beat-domain note model.
//
// Formats 0 and 1 with PPQ timing are supported. Events keep absolute ticks;
// note lists are expressed in quarter-note beats (tick / ppq).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "midiminer/error.hpp"

namespace midiminer {

inline constexpr int kDrumChannel = 9;
inline constexpr std::uint32_t kMaxVlq = (1u << 28) - 1;

// ---------------------------------------------------------------------------
// Variable-length quantities
// ---------------------------------------------------------------------------

struct VlqResult {
  std::uint32_t value = 0;
  std::size_t bytes_consumed = 0;
};

/// Decodes the SMF variable-length quantity starting at `offset`.
inline VlqResult read_vlq(std::span<const std::uint8_t> bytes, std::size_t offset) {
  VlqResult result;
  for (std::size_t i = 0; i < 4; ++i) {
    if (offset + i >= bytes.size()) {
      throw Error(ErrorCode::MalformedVlq, "truncated variable-length quantity");
    }
    const std::uint8_t byte = bytes[offset + i];
    result.value = (result.value << 7) | (byte & 0x7Fu);
    if ((byte & 0x80u) == 0) {
      result.bytes_consumed = i + 1;
      return result;
    }
  }
  throw Error(ErrorCode::MalformedVlq, "no terminating byte within 4 bytes");
}

inline void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t value) {
  if (value > kMaxVlq) {
    throw Error(ErrorCode::InvalidArgument, "value does not fit in a 4-byte VLQ");
  }
  std::uint8_t buffer[4];
  std::size_t n = 0;
  buffer[n++] = static_cast<std::uint8_t>(value & 0x7Fu);
  while ((value >>= 7) != 0) {
    buffer[n++] = static_cast<std::uint8_t>((value & 0x7Fu) | 0x80u);
  }
  while (n > 0) out.push_back(buffer[--n]);
}

inline std::vector<std::uint8_t> encode_vlq(std::uint32_t value) {
  std::vector<std::uint8_t> out;
  append_vlq(out, value);
  return out;
}

// ---------------------------------------------------------------------------
// Event model
// ---------------------------------------------------------------------------

enum class EventKind {
  NoteOn,
  NoteOff,
  ProgramChange,
  OtherChannel,
  Tempo,
  TimeSignature,
  TrackName,
  OtherMeta,
  SysEx,
};

namespace meta {
inline constexpr std::uint8_t kTrackName = 0x03;
inline constexpr std::uint8_t kEndOfTrack = 0x2F;
inline constexpr std::uint8_t kTempo = 0x51;
inline constexpr std::uint8_t kTimeSignature = 0x58;
}  // namespace meta

/// One timed event. `status` is the full channel status byte, 0xFF for meta
/// events, or 0xF0/0xF7 for sysex. `data` holds the event payload without
/// the status, meta type, or length prefix.
struct Event {
  std::uint64_t tick = 0;
  std::uint8_t status = 0;
  std::uint8_t meta_type = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const Event&) const = default;

  bool is_meta() const { return status == 0xFF; }
  bool is_sysex() const { return status == 0xF0 || status == 0xF7; }
  bool is_channel() const { return status >= 0x80 && status < 0xF0; }
  int channel() const { return status & 0x0F; }

  EventKind kind() const {
    if (is_meta()) {
      switch (meta_type) {
        case meta::kTempo: return EventKind::Tempo;
        case meta::kTimeSignature: return EventKind::TimeSignature;
        case meta::kTrackName: return EventKind::TrackName;
        default: return EventKind::OtherMeta;
      }
    }
    if (is_sysex()) return EventKind::SysEx;
    switch (status & 0xF0) {
      case 0x90: return data.size() >= 2 && data[1] == 0 ? EventKind::NoteOff : EventKind::NoteOn;
      case 0x80: return EventKind::NoteOff;
      case 0xC0: return EventKind::ProgramChange;
      default: return EventKind::OtherChannel;
    }
  }

  static Event note_on(std::uint64_t tick, int channel, int pitch, int velocity) {
    return {tick, static_cast<std::uint8_t>(0x90 | (channel & 0x0F)), 0,
            {static_cast<std::uint8_t>(pitch & 0x7F), static_cast<std::uint8_t>(velocity & 0x7F)}};
  }
  static Event note_off(std::uint64_t tick, int channel, int pitch, int velocity = 64) {
    return {tick, static_cast<std::uint8_t>(0x80 | (channel & 0x0F)), 0,
            {static_cast<std::uint8_t>(pitch & 0x7F), static_cast<std::uint8_t>(velocity & 0x7F)}};
  }
  static Event program_change(std::uint64_t tick, int channel, int program) {
    return {tick, static_cast<std::uint8_t>(0xC0 | (channel & 0x0F)), 0,
            {static_cast<std::uint8_t>(program & 0x7F)}};
  }
  static Event tempo(std::uint64_t tick, std::uint32_t microseconds_per_quarter) {
    return {tick, 0xFF, meta::kTempo,
            {static_cast<std::uint8_t>((microseconds_per_quarter >> 16) & 0xFF),
             static_cast<std::uint8_t>((microseconds_per_quarter >> 8) & 0xFF),
             static_cast<std::uint8_t>(microseconds_per_quarter & 0xFF)}};
  }
  /// `denominator` is the actual denominator (4, 8, ...), stored as a power of two.
  static Event time_signature(std::uint64_t tick, int numerator, int denominator) {
    std::uint8_t power = 0;
    while ((1 << power) < denominator && power < 7) ++power;
    return {tick, 0xFF, meta::kTimeSignature,
            {static_cast<std::uint8_t>(numerator), power, 24, 8}};
  }
  static Event meta_event(std::uint64_t tick, std::uint8_t type, std::vector<std::uint8_t> payload) {
    return {tick, 0xFF, type, std::move(payload)};
  }
};

/// A track chunk. `index` equals the track's position in its file. The first
/// track-name meta event is lifted into `name`; `end_tick` is the tick of the
/// end-of-track event (or of the last event when that marker is missing).
struct Track {
  int index = 0;
  std::optional<std::string> name;
  std::vector<Event> events;
  std::uint64_t end_tick = 0;

  bool operator==(const Track&) const = default;
};

struct MidiFile {
  int format = 1;
  int ppq = 480;
  std::vector<Track> tracks;

  bool operator==(const MidiFile&) const = default;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
  std::uint32_t value = 0;
  for (int i = 0; i < width; ++i) value = (value << 8) | bytes[offset + i];
  return value;
}

inline bool has_tag(std::span<const std::uint8_t> bytes, std::size_t offset, const char* tag) {
  if (offset + 4 > bytes.size()) return false;
  for (int i = 0; i < 4; ++i) {
    if (bytes[offset + i] != static_cast<std::uint8_t>(tag[i])) return false;
  }
  return true;
}

inline int channel_data_length(std::uint8_t status) {
  switch (status & 0xF0) {
    case 0xC0:
    case 0xD0: return 1;
    default: return 2;
  }
}

inline Track parse_track(std::span<const std::uint8_t> chunk, int index) {
  Track track;
  track.index = index;
  std::size_t pos = 0;
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  bool ended = false;

  auto need = [&](std::size_t n) {
    if (n > chunk.size() - pos) throw Error(ErrorCode::BadChunk, "event overruns track chunk");
  };

  while (pos < chunk.size()) {
    const VlqResult delta = read_vlq(chunk, pos);
    pos += delta.bytes_consumed;
    tick += delta.value;
    need(1);
    std::uint8_t status = chunk[pos];

    if (status == 0xFF) {
      ++pos;
      need(1);
      const std::uint8_t type = chunk[pos++];
      const VlqResult length = read_vlq(chunk, pos);
      pos += length.bytes_consumed;
      need(length.value);
      running = 0;
      if (type == meta::kEndOfTrack) {
        ended = true;
        pos += length.value;
        break;
      }
      std::vector<std::uint8_t> payload(chunk.begin() + pos, chunk.begin() + pos + length.value);
      pos += length.value;
      if (type == meta::kTrackName && !track.name) {
        track.name = std::string(payload.begin(), payload.end());
        continue;
      }
      track.events.push_back({tick, 0xFF, type, std::move(payload)});
    } else if (status == 0xF0 || status == 0xF7) {
      ++pos;
      const VlqResult length = read_vlq(chunk, pos);
      pos += length.bytes_consumed;
      need(length.value);
      running = 0;
      track.events.push_back(
          {tick, status, 0, std::vector<std::uint8_t>(chunk.begin() + pos, chunk.begin() + pos + length.value)});
      pos += length.value;
    } else {
      if (status & 0x80) {
        if (status >= 0xF0) throw Error(ErrorCode::BadChunk, "system message inside track chunk");
        running = status;
        ++pos;
      } else if (running == 0) {
        throw Error(ErrorCode::BadChunk, "data byte without running status");
      } else {
        status = running;
      }
      const int length = channel_data_length(status);
      need(static_cast<std::size_t>(length));
      Event event{tick, status, 0, {}};
      for (int i = 0; i < length; ++i) {
        if (chunk[pos + i] & 0x80) throw Error(ErrorCode::BadChunk, "status byte inside channel data");
        event.data.push_back(chunk[pos + i]);
      }
      pos += static_cast<std::size_t>(length);
      track.events.push_back(std::move(event));
    }
  }
  track.end_tick = ended || track.events.empty() ? tick : track.events.back().tick;
  return track;
}

}  // namespace detail

/// Parses a complete Standard MIDI File. Unknown chunks are skipped, unknown
/// meta and sysex events are kept as opaque events.
inline MidiFile parse_smf(std::span<const std::uint8_t> bytes) {
  if (!detail::has_tag(bytes, 0, "MThd") || bytes.size() < 14) {
    throw Error(ErrorCode::BadHeader, "missing or short MThd chunk");
  }
  const std::uint32_t header_length = detail::read_be(bytes, 4, 4);
  if (header_length < 6 || header_length > bytes.size() - 8) {
    throw Error(ErrorCode::BadHeader, "invalid MThd length");
  }
  MidiFile file;
  file.format = static_cast<int>(detail::read_be(bytes, 8, 2));
  const std::uint32_t declared_tracks = detail::read_be(bytes, 10, 2);
  const std::uint32_t division = detail::read_be(bytes, 12, 2);
  if (file.format == 2 || file.format > 2) {
    throw Error(ErrorCode::UnsupportedFormat, "SMF format " + std::to_string(file.format));
  }
  if (division & 0x8000u) throw Error(ErrorCode::UnsupportedDivision, "SMPTE time division");
  if (division == 0) throw Error(ErrorCode::BadHeader, "zero ticks per quarter note");
  if (file.format == 0 && declared_tracks != 1) {
    throw Error(ErrorCode::BadHeader, "format 0 file must declare exactly one track");
  }
  file.ppq = static_cast<int>(division);

  std::size_t pos = 8 + header_length;
  while (file.tracks.size() < declared_tracks) {
    if (pos + 8 > bytes.size()) throw Error(ErrorCode::BadChunk, "missing track chunk");
    const std::uint32_t length = detail::read_be(bytes, pos + 4, 4);
    if (length > bytes.size() - pos - 8) throw Error(ErrorCode::BadChunk, "chunk length overruns buffer");
    const bool is_track = detail::has_tag(bytes, pos, "MTrk");
    const auto body = bytes.subspan(pos + 8, length);
    pos += 8 + static_cast<std::size_t>(length);
    if (!is_track) continue;
    file.tracks.push_back(detail::parse_track(body, static_cast<int>(file.tracks.size())));
  }
  return file;
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

namespace detail {

inline void append_be(std::vector<std::uint8_t>& out, std::uint32_t value, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
}

inline void append_event_body(std::vector<std::uint8_t>& out, const Event& event) {
  out.push_back(event.status);
  if (event.is_meta()) {
    out.push_back(event.meta_type);
    append_vlq(out, static_cast<std::uint32_t>(event.data.size()));
  } else if (event.is_sysex()) {
    append_vlq(out, static_cast<std::uint32_t>(event.data.size()));
  }
  out.insert(out.end(), event.data.begin(), event.data.end());
}

inline std::uint32_t delta_between(std::uint64_t from, std::uint64_t to) {
  const std::uint64_t delta = to - from;
  if (delta > kMaxVlq) throw Error(ErrorCode::InvalidArgument, "delta time exceeds VLQ range");
  return static_cast<std::uint32_t>(delta);
}

}  // namespace detail

/// Serializes to a format-1 SMF with the file's ppq. Running status is not
/// used on output. Events must be sorted by tick within each track.
inline std::vector<std::uint8_t> write_smf(const MidiFile& file) {
  if (file.ppq <= 0 || file.ppq > 0x7FFF) throw Error(ErrorCode::InvalidArgument, "ppq out of range");
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  detail::append_be(out, 6, 4);
  detail::append_be(out, 1, 2);
  detail::append_be(out, static_cast<std::uint32_t>(file.tracks.size()), 2);
  detail::append_be(out, static_cast<std::uint32_t>(file.ppq), 2);

  for (const Track& track : file.tracks) {
    std::vector<std::uint8_t> body;
    std::uint64_t last = 0;
    if (track.name) {
      body.push_back(0);
      detail::append_event_body(
          body, Event::meta_event(0, meta::kTrackName, {track.name->begin(), track.name->end()}));
    }
    for (const Event& event : track.events) {
      if (event.tick < last) throw Error(ErrorCode::InvalidArgument, "track events not sorted by tick");
      append_vlq(body, detail::delta_between(last, event.tick));
      detail::append_event_body(body, event);
      last = event.tick;
    }
    const std::uint64_t end = std::max(last, track.end_tick);
    append_vlq(body, detail::delta_between(last, end));
    body.insert(body.end(), {0xFF, meta::kEndOfTrack, 0x00});

    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    detail::append_be(out, static_cast<std::uint32_t>(body.size()), 4);
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Beat-domain note model
// ---------------------------------------------------------------------------

struct Note {
  double onset_beats = 0.0;
  double duration_beats = 0.0;
  int pitch = 0;
  int velocity = 0;
  int track = 0;
  int channel = 0;

  bool operator==(const Note&) const = default;

  double end_beats() const { return onset_beats + duration_beats; }
  bool is_drum() const { return channel == kDrumChannel; }
  int pitch_class() const { return pitch % 12; }
};

struct TimeSigEntry {
  double start_beat = 0.0;
  int numerator = 4;
  int denominator = 4;

  bool operator==(const TimeSigEntry&) const = default;

  /// Bar length in quarter-note beats.
  double bar_beats() const { return numerator * 4.0 / denominator; }
};

/// Time signatures ordered by start beat; always begins at beat 0.
struct TimeSigMap {
  std::vector<TimeSigEntry> entries{TimeSigEntry{}};

  bool operator==(const TimeSigMap&) const = default;
};

struct TempoEntry {
  std::uint64_t tick = 0;
  std::uint32_t microseconds_per_quarter = 500000;

  bool operator==(const TempoEntry&) const = default;
};

struct NoteDiagnostics {
  std::size_t dangling_note_offs = 0;
  std::size_t unterminated_notes = 0;
  std::size_t zero_length_notes = 0;

  bool operator==(const NoteDiagnostics&) const = default;
};

struct NoteList {
  std::vector<Note> notes;
  TimeSigMap time_signatures;
  std::vector<TempoEntry> tempos;
  NoteDiagnostics diagnostics;
};

inline bool note_order(const Note& a, const Note& b) {
  return std::tie(a.onset_beats, a.track, a.pitch, a.channel, a.duration_beats, a.velocity) <
         std::tie(b.onset_beats, b.track, b.pitch, b.channel, b.duration_beats, b.velocity);
}

/// Pairs note-ons with note-offs FIFO per (track, channel, pitch) and converts
/// ticks to beats. Notes still sounding at the end of a track are closed at
/// its final tick; stray note-offs and zero-length notes are dropped and
/// counted in the diagnostics.
inline NoteList build_note_list(const MidiFile& file) {
  NoteList result;
  const double ppq = static_cast<double>(file.ppq);
  std::map<std::uint64_t, TimeSigEntry> signatures;

  struct Pending {
    std::uint64_t tick;
    int velocity;
  };

  for (std::size_t t = 0; t < file.tracks.size(); ++t) {
    const Track& track = file.tracks[t];
    std::map<std::pair<int, int>, std::deque<Pending>> open;
    auto emit = [&](std::uint64_t on, std::uint64_t off, int channel, int pitch, int velocity) {
      if (off <= on) {
        ++result.diagnostics.zero_length_notes;
        return;
      }
      result.notes.push_back(Note{static_cast<double>(on) / ppq, static_cast<double>(off - on) / ppq, pitch,
                                  velocity, static_cast<int>(t), channel});
    };

    for (const Event& event : track.events) {
      switch (event.kind()) {
        case EventKind::NoteOn:
          if (event.data.size() < 2) break;
          open[{event.channel(), event.data[0]}].push_back({event.tick, event.data[1]});
          break;
        case EventKind::NoteOff: {
          if (event.data.size() < 2) break;
          auto it = open.find({event.channel(), event.data[0]});
          if (it == open.end() || it->second.empty()) {
            ++result.diagnostics.dangling_note_offs;
            break;
          }
          const Pending pending = it->second.front();
          it->second.pop_front();
          emit(pending.tick, event.tick, event.channel(), event.data[0], pending.velocity);
          break;
        }
        case EventKind::Tempo:
          if (event.data.size() >= 3) {
            result.tempos.push_back(
                {event.tick, static_cast<std::uint32_t>((event.data[0] << 16) | (event.data[1] << 8) | event.data[2])});
          }
          break;
        case EventKind::TimeSignature:
          if (event.data.size() >= 2 && event.data[0] > 0 && event.data[1] < 8) {
            signatures[event.tick] = {static_cast<double>(event.tick) / ppq, event.data[0], 1 << event.data[1]};
          }
          break;
        default:
          break;
      }
    }
    for (const auto& [key, queue] : open) {
      for (const Pending& pending : queue) {
        ++result.diagnostics.unterminated_notes;
        emit(pending.tick, track.end_tick, key.first, key.second, pending.velocity);
      }
    }
  }

  std::stable_sort(result.tempos.begin(), result.tempos.end(),
                   [](const TempoEntry& a, const TempoEntry& b) { return a.tick < b.tick; });
  std::sort(result.notes.begin(), result.notes.end(), note_order);

  result.time_signatures.entries.clear();
  if (signatures.empty() || signatures.begin()->first != 0) result.time_signatures.entries.push_back({});
  for (const auto& [tick, entry] : signatures) result.time_signatures.entries.push_back(entry);
  return result;
}

// ---------------------------------------------------------------------------
// Bars
// ---------------------------------------------------------------------------

/// 1-based bar containing `beat`. A time-signature change always starts a new
/// bar, so a partial bar before a mid-bar change still counts as one bar.
inline int bar_of(double beat, const TimeSigMap& map) {
  int bars_before = 0;
  const auto& entries = map.entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double start = entries[i].start_beat;
    const double length = entries[i].bar_beats();
    const bool last = i + 1 == entries.size();
    if (last || beat < entries[i + 1].start_beat) {
      return bars_before + 1 + static_cast<int>(std::floor((beat - start) / length + 1e-9));
    }
    const double span = entries[i + 1].start_beat - start;
    bars_before += static_cast<int>(std::ceil(span / length - 1e-9));
  }
  return 1;
}

/// First beat of a 1-based bar.
inline double bar_start_beat(int bar, const TimeSigMap& map) {
  int bars_before = 0;
  const auto& entries = map.entries;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double start = entries[i].start_beat;
    const double length = entries[i].bar_beats();
    const int in_span = i + 1 == entries.size()
                            ? bar
                            : static_cast<int>(std::ceil((entries[i + 1].start_beat - start) / length - 1e-9));
    if (bar <= bars_before + in_span) return start + (bar - bars_before - 1) * length;
    bars_before += in_span;
  }
  return 0.0;
}

/// Number of bars needed to hold material ending at `end_beat`.
inline int bar_count(double end_beat, const TimeSigMap& map) {
  if (end_beat <= 0.0) return 0;
  int bars = bar_of(end_beat, map);
  if (std::abs(bar_start_beat(bars, map) - end_beat) < 1e-9) --bars;
  return std::max(bars, 1);
}

// ---------------------------------------------------------------------------
// Building files from notes
// ---------------------------------------------------------------------------

inline std::uint64_t beats_to_ticks(double beats, int ppq) {
  return static_cast<std::uint64_t>(std::llround(beats * ppq));
}

inline void sort_events(std::vector<Event>& events) {
  // Note-offs precede note-ons at equal ticks so back-to-back repeats pair up.
  auto rank = [](const Event& e) {
    switch (e.kind()) {
      case EventKind::Tempo:
      case EventKind::TimeSignature:
      case EventKind::OtherMeta: return 0;
      case EventKind::NoteOff: return 2;
      case EventKind::NoteOn: return 3;
      default: return 1;
    }
  };
  std::stable_sort(events.begin(), events.end(), [&](const Event& a, const Event& b) {
    return std::pair(a.tick, rank(a)) < std::pair(b.tick, rank(b));
  });
}

/// Builds a track holding `notes` (their `track` field is ignored).
inline Track make_note_track(std::optional<std::string> name, std::span<const Note> notes, int ppq,
                             std::optional<int> program = std::nullopt, int program_channel = 0) {
  Track track;
  track.name = std::move(name);
  if (program) track.events.push_back(Event::program_change(0, program_channel, *program));
  for (const Note& note : notes) {
    const std::uint64_t on = beats_to_ticks(note.onset_beats, ppq);
    const std::uint64_t off = beats_to_ticks(note.end_beats(), ppq);
    track.events.push_back(Event::note_on(on, note.channel, note.pitch, note.velocity));
    track.events.push_back(Event::note_off(off, note.channel, note.pitch));
    track.end_tick = std::max(track.end_tick, off);
  }
  sort_events(track.events);
  return track;
}

/// Builds a conductor track carrying a constant tempo and the given signatures.
inline Track make_conductor_track(const TimeSigMap& signatures, double bpm, int ppq) {
  Track track;
  track.events.push_back(Event::tempo(0, static_cast<std::uint32_t>(std::llround(60'000'000.0 / bpm))));
  for (const TimeSigEntry& entry : signatures.entries) {
    track.events.push_back(
        Event::time_signature(beats_to_ticks(entry.start_beat, ppq), entry.numerator, entry.denominator));
  }
  sort_events(track.events);
  return track;
}

inline void renumber_tracks(MidiFile& file) {
  for (std::size_t i = 0; i < file.tracks.size(); ++i) file.tracks[i].index = static_cast<int>(i);
}

}  // namespace midiminer
