// Track-role classification: labels, training and evaluation of the three
// per-role forests, role assignment, and filtered MIDI output.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "midiminer/config.hpp"
#include "midiminer/error.hpp"
#include "midiminer/features.hpp"
#include "midiminer/forest.hpp"
#include "midiminer/midi_io.hpp"

namespace midiminer {

// ---------------------------------------------------------------------------
// Tracks of a song
// ---------------------------------------------------------------------------

struct SongTrack {
  int track_index = 0;
  std::optional<std::string> name;
  std::vector<Note> notes;  // every note, drums included
  bool is_drum = false;     // has notes, all on the drum channel
};

struct SongTracks {
  std::vector<SongTrack> tracks;  // note-bearing tracks only
  SongContext context;
};

inline SongTracks split_tracks(const MidiFile& file, const NoteList& list) {
  std::map<int, std::vector<Note>> by_track;
  for (const Note& note : list.notes) by_track[note.track].push_back(note);
  SongTracks out{{}, SongContext(list.notes, list.time_signatures)};
  for (auto& [index, notes] : by_track) {
    SongTrack track;
    track.track_index = index;
    if (index >= 0 && static_cast<std::size_t>(index) < file.tracks.size()) track.name = file.tracks[index].name;
    track.is_drum = std::all_of(notes.begin(), notes.end(), [](const Note& n) { return n.is_drum(); });
    track.notes = std::move(notes);
    out.tracks.push_back(std::move(track));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

using RoleSet = std::set<Role>;

struct LabeledTrack {
  FeatureVector features{};
  RoleSet labels;
  std::string file_id;
  int track_index = 0;
};

/// Case-insensitive substring rules, checked in order; the first match wins.
struct KeywordTable {
  std::vector<std::pair<Role, std::vector<std::string>>> rules{
      {Role::Melody, {"melody", "vocal"}},
      {Role::Bass, {"bass"}},
      {Role::Harmony, {"chord", "pad", "guitar", "piano comp"}},
  };
};

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Reads `keywords.melody = a, b` style entries; roles without an entry keep
/// their defaults.
inline KeywordTable keyword_table_from_config(const Config& config, KeywordTable base = {}) {
  for (auto& [role, words] : base.rules) {
    const auto it = config.find("keywords." + std::string(to_string(role)));
    if (it == config.end()) continue;
    words.clear();
    std::stringstream list(it->second);
    std::string word;
    while (std::getline(list, word, ',')) {
      word = trim(word);
      if (!word.empty()) words.push_back(to_lower(word));
    }
  }
  return base;
}

inline std::optional<Role> match_keywords(std::string_view track_name, const KeywordTable& table) {
  const std::string lowered = to_lower(track_name);
  for (const auto& [role, words] : table.rules) {
    for (const std::string& word : words) {
      if (!word.empty() && lowered.find(to_lower(word)) != std::string::npos) return role;
    }
  }
  return std::nullopt;
}

/// (file id, track index) -> roles.
using LabelMap = std::map<std::pair<std::string, int>, RoleSet>;

/// Parses `file_id,track_index,role` lines. Blank lines, `#` comments and a
/// leading header row are skipped.
inline LabelMap parse_label_file(std::string_view text) {
  LabelMap labels;
  std::istringstream stream{std::string(text)};
  std::string line;
  int line_number = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    const std::string content = trim(line);
    if (content.empty() || content[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream cells(content);
    std::string cell;
    while (std::getline(cells, cell, ',')) fields.push_back(trim(cell));
    if (line_number == 1 && fields.size() == 3 && fields[0] == "file_id") continue;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::InvalidArgument, "label file line " + std::to_string(line_number) + ": " + why);
    };
    if (fields.size() != 3) fail("expected file_id,track_index,role");
    int track = 0;
    try {
      std::size_t used = 0;
      track = std::stoi(fields[1], &used);
      if (used != fields[1].size() || track < 0) fail("bad track index");
    } catch (const std::logic_error&) {
      fail("bad track index");
    }
    const auto role = parse_role(to_lower(fields[2]));
    if (!role) fail("unknown role '" + fields[2] + "'");
    labels[{fields[0], track}].insert(*role);
  }
  return labels;
}

/// Features for every non-drum track of a file, labelled from the label map
/// when it has an entry for the file and from track-name keywords otherwise.
inline std::vector<LabeledTrack> labeled_tracks(const MidiFile& file, const std::string& file_id,
                                                const LabelMap& labels, const KeywordTable& keywords) {
  const NoteList list = build_note_list(file);
  const SongTracks song = split_tracks(file, list);
  const bool file_in_map = std::any_of(labels.begin(), labels.end(),
                                       [&](const auto& entry) { return entry.first.first == file_id; });
  std::vector<LabeledTrack> out;
  for (const SongTrack& track : song.tracks) {
    if (track.is_drum) continue;
    LabeledTrack lt;
    lt.features = extract_features(track.notes, song.context);
    lt.file_id = file_id;
    lt.track_index = track.track_index;
    if (file_in_map) {
      if (auto it = labels.find({file_id, track.track_index}); it != labels.end()) lt.labels = it->second;
    } else if (track.name) {
      if (auto role = match_keywords(*track.name, keywords)) lt.labels.insert(*role);
    }
    out.push_back(std::move(lt));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

inline ForestModel train_forest(std::span<const LabeledTrack> data, Role role, const ForestParams& params) {
  std::vector<FeatureVector> rows;
  std::vector<int> labels;
  rows.reserve(data.size());
  labels.reserve(data.size());
  for (const LabeledTrack& track : data) {
    rows.push_back(track.features);
    labels.push_back(track.labels.contains(role) ? 1 : 0);
  }
  return train_binary_forest<FeatureVector>(rows, labels, kFeatureCount, role, params);
}

inline double predict(const ForestModel& model, const FeatureVector& features) {
  return predict(model, std::span<const double>(features));
}

struct BinaryMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;

  bool operator==(const BinaryMetrics&) const = default;
};

struct RoleEvaluation {
  Role role = Role::Melody;
  BinaryMetrics negative;  // "False" row
  BinaryMetrics positive;  // "True" row

  bool operator==(const RoleEvaluation&) const = default;
};

inline BinaryMetrics class_metrics(std::span<const int> truth, std::span<const int> predicted, int cls) {
  std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == cls;
    const bool p = predicted[i] == cls;
    support += t;
    tp += t && p;
    fp += !t && p;
    fn += t && !p;
  }
  BinaryMetrics m;
  m.support = support;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline RoleEvaluation evaluate_forest(const ForestModel& model, std::span<const LabeledTrack> test) {
  std::vector<int> truth;
  std::vector<int> predicted;
  for (const LabeledTrack& track : test) {
    truth.push_back(track.labels.contains(model.role) ? 1 : 0);
    predicted.push_back(predict(model, track.features) > 0.5 ? 1 : 0);
  }
  return {model.role, class_metrics(truth, predicted, 0), class_metrics(truth, predicted, 1)};
}

/// Table with one False and one True row per role.
inline std::string format_evaluation_table(std::span<const RoleEvaluation> rows) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s  %-10s  %9s  %6s  %8s  %7s\n", "track", "prediction", "precision", "recall",
                "F1 score", "support");
  out << line;
  for (const RoleEvaluation& row : rows) {
    const std::string role(to_string(row.role));
    const std::pair<const char*, const BinaryMetrics*> lines[] = {{"False", &row.negative}, {"True", &row.positive}};
    bool first = true;
    for (const auto& [label, m] : lines) {
      std::snprintf(line, sizeof line, "%-8s  %-10s  %9.2f  %6.2f  %8.2f  %7zu\n", first ? role.c_str() : "", label,
                    m->precision, m->recall, m->f1, m->support);
      out << line;
      first = false;
    }
  }
  return out.str();
}

struct DataSplit {
  std::vector<LabeledTrack> train;
  std::vector<LabeledTrack> test;
};

/// Shuffles each label-set stratum with `seed` and sends round(test_fraction *
/// stratum size) of it to the test side.
inline DataSplit stratified_split(std::span<const LabeledTrack> data, double test_fraction, std::uint64_t seed) {
  std::map<std::uint8_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint8_t key = 0;
    for (Role role : data[i].labels) key |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(role));
    strata[key].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> is_test(data.size(), 0);
  for (auto& [key, indices] : strata) {
    std::shuffle(indices.begin(), indices.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(indices.size())));
    for (std::size_t i = 0; i < n_test && i < indices.size(); ++i) is_test[indices[i]] = 1;
  }
  DataSplit split;
  for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? split.test : split.train).push_back(data[i]);
  return split;
}

struct RoleModels {
  ForestModel melody;
  ForestModel bass;
  ForestModel harmony;

  const ForestModel& operator[](Role role) const {
    switch (role) {
      case Role::Melody: return melody;
      case Role::Bass: return bass;
      default: return harmony;
    }
  }
  ForestModel& operator[](Role role) {
    return const_cast<ForestModel&>(static_cast<const RoleModels&>(*this)[role]);
  }
};

inline std::string model_path(const std::filesystem::path& dir, Role role) {
  return (dir / (std::string(to_string(role)) + ".mmrf")).string();
}

inline RoleModels load_role_models(const std::filesystem::path& dir) {
  RoleModels models;
  for (Role role : kRoles) {
    models[role] = load_model_file(model_path(dir, role));
    if (models[role].role != role || models[role].n_features != kFeatureCount) {
      throw Error(ErrorCode::BadModelFile, model_path(dir, role) + " does not hold a " +
                                               std::string(to_string(role)) + " track model");
    }
  }
  return models;
}

inline void save_role_models(const RoleModels& models, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Role role : kRoles) save_model_file(models[role], model_path(dir, role));
}

struct TrainingResult {
  RoleModels models;
  std::array<RoleEvaluation, 3> evaluation{};
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// 75/25 stratified split, one forest per role, evaluation on the held-out part.
inline TrainingResult train_role_models(std::span<const LabeledTrack> data, const ForestParams& params,
                                        double test_fraction = 0.25) {
  const DataSplit split = stratified_split(data, test_fraction, params.seed);
  TrainingResult result;
  result.train_size = split.train.size();
  result.test_size = split.test.size();
  for (std::size_t r = 0; r < kRoles.size(); ++r) {
    const Role role = kRoles[r];
    result.models[role] = train_forest(split.train, role, params);
    result.evaluation[r] = evaluate_forest(result.models[role], split.test);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Role assignment and extraction
// ---------------------------------------------------------------------------

struct TrackScore {
  int track_index = 0;
  std::array<double, 3> probability{};  // melody, bass, harmony

  bool operator==(const TrackScore&) const = default;
};

struct RoleAssignment {
  std::optional<int> melody;
  std::optional<int> bass;
  std::vector<int> harmony;    // ascending track index
  std::vector<int> discarded;  // drum tracks and tracks winning no role
  std::vector<TrackScore> scores;

  bool operator==(const RoleAssignment&) const = default;

  bool empty() const { return !melody && !bass && harmony.empty(); }
};

/// Resolves per-track role probabilities. Candidates (track, role, p > 0.5)
/// are visited by descending p, ties ordered melody > bass > harmony and then
/// by track index. A track takes the first role still open to it; melody and
/// bass hold one track each, harmony any number.
inline RoleAssignment resolve_roles(std::vector<TrackScore> scores, std::vector<int> drum_tracks) {
  struct Candidate {
    double p;
    std::size_t role;
    int track;
  };
  std::vector<Candidate> candidates;
  for (const TrackScore& s : scores) {
    for (std::size_t r = 0; r < 3; ++r) {
      if (s.probability[r] > 0.5) candidates.push_back({s.probability[r], r, s.track_index});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.p != b.p) return a.p > b.p;
    if (a.role != b.role) return a.role < b.role;
    return a.track < b.track;
  });

  RoleAssignment out;
  std::set<int> taken;
  for (const Candidate& c : candidates) {
    if (taken.contains(c.track)) continue;
    const Role role = kRoles[c.role];
    if (role == Role::Melody && out.melody) continue;
    if (role == Role::Bass && out.bass) continue;
    if (role == Role::Melody) out.melody = c.track;
    if (role == Role::Bass) out.bass = c.track;
    if (role == Role::Harmony) out.harmony.push_back(c.track);
    taken.insert(c.track);
  }
  std::sort(out.harmony.begin(), out.harmony.end());
  out.discarded = std::move(drum_tracks);
  for (const TrackScore& s : scores) {
    if (!taken.contains(s.track_index)) out.discarded.push_back(s.track_index);
  }
  std::sort(out.discarded.begin(), out.discarded.end());
  std::sort(scores.begin(), scores.end(),
            [](const TrackScore& a, const TrackScore& b) { return a.track_index < b.track_index; });
  out.scores = std::move(scores);
  return out;
}

inline RoleAssignment assign_roles(const MidiFile& file, const RoleModels& models) {
  const NoteList list = build_note_list(file);
  const SongTracks song = split_tracks(file, list);
  std::vector<TrackScore> scores;
  std::vector<int> drums;
  for (const SongTrack& track : song.tracks) {
    if (track.is_drum) {
      drums.push_back(track.track_index);
      continue;
    }
    const FeatureVector features = extract_features(track.notes, song.context);
    TrackScore score{track.track_index, {}};
    for (std::size_t r = 0; r < 3; ++r) score.probability[r] = predict(models[kRoles[r]], features);
    scores.push_back(score);
  }
  return resolve_roles(std::move(scores), std::move(drums));
}

/// New format-1 file: a conductor track with every tempo and time-signature
/// event, then the assigned tracks in melody, bass, harmony order, renamed
/// after their roles.
inline MidiFile extract_tracks(const MidiFile& file, const RoleAssignment& assignment) {
  auto is_conductor_event = [](const Event& e) {
    return e.kind() == EventKind::Tempo || e.kind() == EventKind::TimeSignature;
  };
  MidiFile out;
  out.format = 1;
  out.ppq = file.ppq;

  Track conductor;
  for (const Track& track : file.tracks) {
    for (const Event& event : track.events) {
      if (is_conductor_event(event)) {
        conductor.events.push_back(event);
        conductor.end_tick = std::max(conductor.end_tick, event.tick);
      }
    }
  }
  std::stable_sort(conductor.events.begin(), conductor.events.end(),
                   [](const Event& a, const Event& b) { return a.tick < b.tick; });
  out.tracks.push_back(std::move(conductor));

  auto append = [&](int index, Role role) {
    if (index < 0 || static_cast<std::size_t>(index) >= file.tracks.size()) {
      throw Error(ErrorCode::InvalidArgument, "assignment refers to missing track " + std::to_string(index));
    }
    Track track = file.tracks[static_cast<std::size_t>(index)];
    std::erase_if(track.events, is_conductor_event);
    track.name = std::string(to_string(role));
    out.tracks.push_back(std::move(track));
  };
  if (assignment.melody) append(*assignment.melody, Role::Melody);
  if (assignment.bass) append(*assignment.bass, Role::Bass);
  for (int index : assignment.harmony) append(index, Role::Harmony);
  for (const Track& track : out.tracks) out.tracks.front().end_tick = std::max(out.tracks.front().end_tick, track.end_tick);
  renumber_tracks(out);
  return out;
}

}  // namespace midiminer
