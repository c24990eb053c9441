#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "test_support.hpp"

using namespace midiminer;
using mmtest::note;

namespace {

TrackScore score(int track, double melody, double bass, double harmony) { return {track, {melody, bass, harmony}}; }

LabelMap labels_of(const std::vector<SyntheticSong>& songs) {
  LabelMap map;
  for (std::size_t i = 0; i < songs.size(); ++i) {
    for (const auto& [track, role] : songs[i].labels) map[{std::to_string(i), track}].insert(role);
  }
  return map;
}

std::vector<LabeledTrack> corpus(const std::vector<SyntheticSong>& songs) {
  const LabelMap map = labels_of(songs);
  std::vector<LabeledTrack> data;
  for (std::size_t i = 0; i < songs.size(); ++i) {
    auto tracks = labeled_tracks(songs[i].file, std::to_string(i), map, KeywordTable{});
    data.insert(data.end(), tracks.begin(), tracks.end());
  }
  return data;
}

std::vector<SyntheticSong> songs(std::uint64_t first, std::size_t count) {
  std::vector<SyntheticSong> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_song(first + i));
  return out;
}

// Five tracks: conductor, melody, bass, chords, drums.
MidiFile five_track_file() {
  MidiFile file = mmtest::file_from_parts({{note(0, 1, 72), note(1, 1, 74)},
                                           {note(0, 2, 36), note(2, 2, 43)},
                                           {note(0, 4, 60), note(0, 4, 64), note(0, 4, 67)}});
  file.tracks.push_back(make_note_track("drums", std::vector<Note>{note(0, 0.5, 36, 100, 0, 9)}, file.ppq, std::nullopt, 9));
  renumber_tracks(file);
  return file;
}

}  // namespace

// ---------------------------------------------------------------------------
// Role resolution

TEST(ResolveRoles, HigherProbabilityWinsTheSingleMelodySlot) {
  const auto a = resolve_roles({score(1, 0.9, 0.1, 0.2), score(2, 0.6, 0.1, 0.3)}, {});
  EXPECT_EQ(a.melody, 1);
  EXPECT_FALSE(a.bass);
  EXPECT_TRUE(a.harmony.empty());
  EXPECT_EQ(a.discarded, std::vector<int>{2});
}

TEST(ResolveRoles, LoserFallsBackToItsNextRole) {
  const auto a = resolve_roles({score(1, 0.9, 0.1, 0.2), score(2, 0.8, 0.1, 0.7)}, {});
  EXPECT_EQ(a.melody, 1);
  EXPECT_EQ(a.harmony, std::vector<int>{2});
}

TEST(ResolveRoles, TiesPreferMelodyThenLowerTrack) {
  const auto a = resolve_roles({score(3, 0.8, 0.8, 0.0), score(2, 0.8, 0.0, 0.0)}, {});
  EXPECT_EQ(a.melody, 2);
  EXPECT_EQ(a.bass, 3);
}

TEST(ResolveRoles, ThresholdIsStrict) {
  const auto a = resolve_roles({score(1, 0.5, 0.5, 0.5)}, {});
  EXPECT_TRUE(a.empty());
  EXPECT_EQ(a.discarded, std::vector<int>{1});
}

TEST(ResolveRoles, HarmonyTakesAnyNumber) {
  const auto a = resolve_roles({score(4, 0, 0, 0.9), score(2, 0, 0, 0.6), score(3, 0, 0, 0.7)}, {9});
  EXPECT_EQ(a.harmony, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(a.discarded, std::vector<int>{9});
}

TEST(ResolveRoles, EveryTrackEndsUpInExactlyOnePlace) {
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TrackScore> scores;
    const int n = std::uniform_int_distribution<int>(0, 8)(rng);
    for (int t = 0; t < n; ++t) scores.push_back(score(t + 1, p(rng), p(rng), p(rng)));
    const auto a = resolve_roles(scores, {20});
    std::multiset<int> seen(a.discarded.begin(), a.discarded.end());
    seen.insert(a.harmony.begin(), a.harmony.end());
    if (a.melody) seen.insert(*a.melody);
    if (a.bass) seen.insert(*a.bass);
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(n) + 1);
    EXPECT_EQ(std::set<int>(seen.begin(), seen.end()).size(), seen.size());
    if (a.melody) {
      EXPECT_GT(scores[static_cast<std::size_t>(*a.melody - 1)].probability[0], 0.5);
    }
    if (a.bass) {
      EXPECT_GT(scores[static_cast<std::size_t>(*a.bass - 1)].probability[1], 0.5);
    }
    for (int h : a.harmony) EXPECT_GT(scores[static_cast<std::size_t>(h - 1)].probability[2], 0.5);
    // Input order never matters.
    std::shuffle(scores.begin(), scores.end(), rng);
    EXPECT_EQ(resolve_roles(scores, {20}), a);
  }
}

TEST(AssignRoles, DrumsOnlyFileIsEmpty) {
  MidiFile file;
  file.format = 1;
  file.tracks.push_back(make_conductor_track(TimeSigMap{}, 120.0, file.ppq));
  file.tracks.push_back(make_note_track("drums", std::vector<Note>{note(0, 0.5, 36, 100, 0, 9), note(1, 0.5, 38, 100, 0, 9)}, file.ppq,
                                        std::nullopt, 9));
  renumber_tracks(file);
  const auto data = corpus(songs(0, 40));
  ForestParams params;
  params.n_trees = 10;
  const TrainingResult trained = train_role_models(data, params);
  const RoleAssignment a = assign_roles(file, trained.models);
  EXPECT_TRUE(a.empty());
  EXPECT_EQ(a.discarded, std::vector<int>{1});
  const MidiFile out = extract_tracks(file, a);
  ASSERT_EQ(out.tracks.size(), 1u);
}

// ---------------------------------------------------------------------------
// Extraction

TEST(ExtractTracks, EmptyAssignmentKeepsOnlyTheConductor) {
  const MidiFile file = five_track_file();
  const MidiFile out = extract_tracks(file, RoleAssignment{});
  ASSERT_EQ(out.tracks.size(), 1u);
  EXPECT_EQ(out.format, 1);
  EXPECT_EQ(out.ppq, file.ppq);
  bool has_tempo = false;
  for (const Event& e : out.tracks[0].events) has_tempo |= e.kind() == EventKind::Tempo;
  EXPECT_TRUE(has_tempo);
}

TEST(ExtractTracks, FullAssignmentOrdersAndRenamesTracks) {
  const MidiFile file = five_track_file();
  RoleAssignment a;
  a.melody = 1;
  a.bass = 2;
  a.harmony = {3};
  a.discarded = {4};
  const MidiFile out = extract_tracks(file, a);
  ASSERT_EQ(out.tracks.size(), 4u);
  EXPECT_EQ(out.tracks[1].name, "melody");
  EXPECT_EQ(out.tracks[2].name, "bass");
  EXPECT_EQ(out.tracks[3].name, "harmony");
  const NoteList before = build_note_list(file);
  const NoteList after = build_note_list(parse_smf(write_smf(out)));
  std::size_t pitched = 0;
  for (const Note& n : before.notes) pitched += !n.is_drum();
  EXPECT_EQ(after.notes.size(), pitched);
  std::multiset<std::tuple<double, double, int>> a_notes, b_notes;
  for (const Note& n : before.notes) {
    if (!n.is_drum()) a_notes.insert({n.onset_beats, n.duration_beats, n.pitch});
  }
  for (const Note& n : after.notes) b_notes.insert({n.onset_beats, n.duration_beats, n.pitch});
  EXPECT_EQ(a_notes, b_notes);
}

TEST(ExtractTracks, Idempotent) {
  const MidiFile file = five_track_file();
  RoleAssignment a;
  a.melody = 1;
  a.bass = 2;
  a.harmony = {3};
  const MidiFile once = extract_tracks(file, a);
  RoleAssignment again;
  again.melody = 1;
  again.bass = 2;
  again.harmony = {3};
  EXPECT_EQ(extract_tracks(once, again), once);
}

TEST(ExtractTracks, RejectsMissingTrack) {
  RoleAssignment a;
  a.melody = 12;
  EXPECT_THROW(extract_tracks(five_track_file(), a), Error);
}

// ---------------------------------------------------------------------------
// Labels

TEST(Keywords, DefaultTable) {
  const KeywordTable table;
  EXPECT_EQ(match_keywords("Lead Vocal", table), Role::Melody);
  EXPECT_EQ(match_keywords("SYNTH BASS", table), Role::Bass);
  EXPECT_EQ(match_keywords("Strings Pad", table), Role::Harmony);
  EXPECT_EQ(match_keywords("Piano Comp 2", table), Role::Harmony);
  EXPECT_EQ(match_keywords("Drums", table), std::nullopt);
  EXPECT_EQ(match_keywords("Bass melody", table), Role::Melody);
}

TEST(Keywords, ConfigOverridesOneRole) {
  const KeywordTable table = keyword_table_from_config(parse_config("keywords.bass = Low End, sub\n"));
  EXPECT_EQ(match_keywords("low end", table), Role::Bass);
  EXPECT_EQ(match_keywords("SUB 808", table), Role::Bass);
  EXPECT_EQ(match_keywords("Bass", table), std::nullopt);
  EXPECT_EQ(match_keywords("melody", table), Role::Melody);
}

TEST(LabelFile, ParsesRowsAndSkipsHeaderAndComments) {
  const LabelMap map = parse_label_file("file_id,track_index,role\n# comment\n\nsong_0001, 2, Bass\nsong_0001,3,harmony\n"
                                        "song_0001,3,melody\n");
  ASSERT_EQ(map.size(), 2u);
  EXPECT_EQ(map.at({"song_0001", 2}), RoleSet{Role::Bass});
  EXPECT_EQ(map.at({"song_0001", 3}), (RoleSet{Role::Melody, Role::Harmony}));
}

TEST(LabelFile, RejectsBadRows) {
  EXPECT_THROW(parse_label_file("a,1\n"), Error);
  EXPECT_THROW(parse_label_file("a,x,bass\n"), Error);
  EXPECT_THROW(parse_label_file("a,1,drums\n"), Error);
}

TEST(LabeledTracks, MapTakesPrecedenceOverKeywords) {
  const MidiFile file = five_track_file();  // track names "part N"
  LabelMap map;
  map[{"f", 2}] = {Role::Bass};
  const auto data = labeled_tracks(file, "f", map, KeywordTable{});
  ASSERT_EQ(data.size(), 3u);  // drums skipped
  EXPECT_TRUE(data[0].labels.empty());
  EXPECT_EQ(data[1].labels, RoleSet{Role::Bass});
  EXPECT_TRUE(data[2].labels.empty());
}

TEST(LabeledTracks, KeywordsWhenFileIsUnlisted) {
  MidiFile file = five_track_file();
  file.tracks[1].name = "Melody";
  file.tracks[2].name = "bass gtr";
  const auto data = labeled_tracks(file, "f", LabelMap{}, KeywordTable{});
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data[0].labels, RoleSet{Role::Melody});
  EXPECT_EQ(data[1].labels, RoleSet{Role::Bass});
  EXPECT_TRUE(data[2].labels.empty());
}

// ---------------------------------------------------------------------------
// Splitting and training

TEST(StratifiedSplit, DisjointCompleteAndProportional) {
  const auto data = corpus(songs(100, 60));
  const DataSplit split = stratified_split(data, 0.25, 7);
  EXPECT_EQ(split.train.size() + split.test.size(), data.size());
  std::set<std::pair<std::string, int>> train_ids, test_ids;
  for (const auto& t : split.train) train_ids.insert({t.file_id, t.track_index});
  for (const auto& t : split.test) test_ids.insert({t.file_id, t.track_index});
  for (const auto& id : test_ids) EXPECT_FALSE(train_ids.contains(id));
  EXPECT_EQ(train_ids.size() + test_ids.size(), data.size());
  for (Role role : kRoles) {
    const auto in = [&](const std::vector<LabeledTrack>& v) {
      return std::count_if(v.begin(), v.end(), [&](const LabeledTrack& t) { return t.labels.contains(role); });
    };
    const double total = static_cast<double>(in(split.train) + in(split.test));
    EXPECT_NEAR(static_cast<double>(in(split.test)), 0.25 * total, 1.0) << to_string(role);
  }
}

TEST(StratifiedSplit, DeterministicPerSeed) {
  const auto data = corpus(songs(200, 20));
  auto ids = [](const DataSplit& s) {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& t : s.test) out.push_back({t.file_id, t.track_index});
    return out;
  };
  EXPECT_EQ(ids(stratified_split(data, 0.25, 1)), ids(stratified_split(data, 0.25, 1)));
  EXPECT_NE(ids(stratified_split(data, 0.25, 1)), ids(stratified_split(data, 0.25, 2)));
}

TEST(Classifier, TrackOrderDoesNotChangeAssignments) {
  const auto data = corpus(songs(300, 60));
  ForestParams params;
  params.n_trees = 20;
  const TrainingResult trained = train_role_models(data, params);
  for (std::uint64_t seed = 1000; seed < 1010; ++seed) {
    const SyntheticSong song = generate_song(seed);
    const RoleAssignment a = assign_roles(song.file, trained.models);
    MidiFile reversed = song.file;
    std::reverse(reversed.tracks.begin() + 1, reversed.tracks.end());
    renumber_tracks(reversed);
    const RoleAssignment b = assign_roles(reversed, trained.models);
    const auto n = static_cast<int>(song.file.tracks.size());
    auto flip = [n](int t) { return n - t; };
    EXPECT_EQ(a.melody.has_value(), b.melody.has_value());
    if (a.melody && b.melody) {
      EXPECT_EQ(flip(*a.melody), *b.melody);
    }
    if (a.bass && b.bass) {
      EXPECT_EQ(flip(*a.bass), *b.bass);
    }
    std::vector<int> harmony;
    for (int h : a.harmony) harmony.push_back(flip(h));
    std::sort(harmony.begin(), harmony.end());
    EXPECT_EQ(harmony, b.harmony);
  }
}

TEST(Classifier, EndToEndOnSyntheticSongs) {
  const auto data = corpus(songs(500, 120));
  ForestParams params;
  params.n_trees = 30;
  const TrainingResult trained = train_role_models(data, params);
  EXPECT_EQ(trained.train_size + trained.test_size, data.size());
  for (const RoleEvaluation& e : trained.evaluation) {
    EXPECT_GE(e.positive.f1, 0.9) << to_string(e.role);
    EXPECT_GE(e.negative.f1, 0.9) << to_string(e.role);
  }
  const std::string table = format_evaluation_table(trained.evaluation);
  EXPECT_NE(table.find("F1 score"), std::string::npos);
  EXPECT_NE(table.find("melody"), std::string::npos);

  int correct = 0;
  int total = 0;
  for (std::uint64_t seed = 5000; seed < 5020; ++seed) {
    const SyntheticSong song = generate_song(seed);
    const RoleAssignment a = assign_roles(song.file, trained.models);
    for (const auto& [track, role] : song.labels) {
      ++total;
      if (role == Role::Melody) correct += a.melody == track;
      if (role == Role::Bass) correct += a.bass == track;
      if (role == Role::Harmony) correct += std::count(a.harmony.begin(), a.harmony.end(), track) > 0;
    }
  }
  EXPECT_GE(correct, total * 9 / 10);
}

TEST(RoleModels, SaveLoadRoundTrip) {
  const auto data = corpus(songs(700, 30));
  ForestParams params;
  params.n_trees = 5;
  const TrainingResult trained = train_role_models(data, params);
  const auto dir = std::filesystem::temp_directory_path() / "midiminer_role_models_test";
  std::filesystem::remove_all(dir);
  save_role_models(trained.models, dir);
  const RoleModels loaded = load_role_models(dir);
  for (Role role : kRoles) EXPECT_EQ(loaded[role], trained.models[role]);
  std::filesystem::copy_file(model_path(dir, Role::Bass), model_path(dir, Role::Melody),
                             std::filesystem::copy_options::overwrite_existing);
  EXPECT_THROW(load_role_models(dir), Error);
  std::filesystem::remove_all(dir);
}
