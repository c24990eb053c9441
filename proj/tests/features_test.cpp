#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace midiminer;
using mmtest::note;

namespace {

FeatureVector features_of(const std::vector<Note>& track, const std::vector<Note>& song) {
  return extract_features(track, SongContext(song, TimeSigMap{}));
}

// Voice-time fractions recomputed by sampling the midpoint of every 1/8-beat
// cell. Exact for notes on the quarter-beat grid.
struct Sampled {
  double polyphony = 0.0;
  double two = 0.0;
  double three = 0.0;
  double silence = 0.0;
  double highest = 0.0;
  double lowest = 0.0;
};

Sampled sample_voices(const std::vector<Note>& track, const std::vector<Note>& song) {
  double end = 0.0;
  double first = 1e300;
  double last = 0.0;
  for (const Note& n : song) end = std::max(end, n.end_beats());
  for (const Note& n : track) {
    first = std::min(first, n.onset_beats);
    last = std::max(last, n.end_beats());
  }
  double sounding = 0.0, two = 0.0, three = 0.0, song_sounding = 0.0, highest = 0.0, lowest = 0.0, total = 0.0;
  const double cell = 0.125;
  for (double t = cell / 2; t < end; t += cell) {
    std::vector<int> mine;
    std::vector<int> all;
    for (const Note& n : track) {
      if (n.onset_beats <= t && t < n.end_beats()) mine.push_back(n.pitch);
    }
    for (const Note& n : song) {
      if (n.onset_beats <= t && t < n.end_beats()) all.push_back(n.pitch);
    }
    if (!mine.empty()) sounding += cell;
    if (mine.size() >= 2) two += cell;
    if (mine.size() >= 3) three += cell;
    if (!all.empty()) song_sounding += cell;
    if (!mine.empty()) {
      if (*std::max_element(mine.begin(), mine.end()) >= *std::max_element(all.begin(), all.end())) highest += cell;
      if (*std::min_element(mine.begin(), mine.end()) <= *std::min_element(all.begin(), all.end())) lowest += cell;
    }
  }
  for (const Note& n : track) total += n.duration_beats;
  Sampled s;
  s.polyphony = total / sounding;
  s.two = two / sounding;
  s.three = three / sounding;
  s.silence = 1.0 - sounding / (last - first);
  s.highest = highest / song_sounding;
  s.lowest = lowest / song_sounding;
  return s;
}

}  // namespace

TEST(Features, NamesAreUniqueAndComplete) {
  std::set<std::string_view> names(kFeatureNames.begin(), kFeatureNames.end());
  EXPECT_EQ(names.size(), kFeatureCount);
  EXPECT_EQ(kFeatureCount, 30u);
}

TEST(Features, SingleNoteTrack) {
  const std::vector<Note> track{note(0, 1, 60, 64)};
  const FeatureVector f = features_of(track, track);
  const std::array<double, kFeatureCount> expected{
      1, 1, 60, 0, 0, 0.5, 1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 64.0 / 127.0, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 1, 0, 0};
  for (std::size_t i = 0; i < kFeatureCount; ++i) EXPECT_NEAR(f[i], expected[i], 1e-12) << kFeatureNames[i];
}

TEST(Features, SustainedThirds) {
  std::vector<Note> track;
  for (int i = 0; i < 8; ++i) {
    track.push_back(note(i, 1.0, 60));
    track.push_back(note(i, 1.0, 64));
  }
  const FeatureVector f = features_of(track, track);
  EXPECT_NEAR(f[18], 2.0, 1e-12);  // polyphony_rate
  EXPECT_NEAR(f[19], 1.0, 1e-12);  // two_voice_fraction
  EXPECT_NEAR(f[20], 0.0, 1e-12);
  EXPECT_NEAR(f[8], 0.0, 1e-12);   // top voice repeats E
  EXPECT_NEAR(f[11], 1.0, 1e-12);
  EXPECT_NEAR(f[6], 2.0, 1e-12);
  EXPECT_NEAR(f[7], 1.0, 1e-12);
}

TEST(Features, AscendingEighthNoteScale) {
  std::vector<Note> track;
  const std::array<int, 8> scale{60, 62, 64, 65, 67, 69, 71, 72};
  for (std::size_t i = 0; i < scale.size(); ++i) track.push_back(note(0.5 * static_cast<double>(i), 0.5, scale[i]));
  const FeatureVector f = features_of(track, track);
  EXPECT_NEAR(f[10], 1.0, 1e-12);  // stepwise_fraction
  EXPECT_NEAR(f[12], 0.0, 1e-12);  // contour changes
  EXPECT_NEAR(f[11], 0.0, 1e-12);
  EXPECT_NEAR(f[27], 0.5, 1e-12);  // on_beat_fraction
  EXPECT_NEAR(f[15], 0.0, 1e-12);
  EXPECT_NEAR(f[8], 12.0 / 7.0, 1e-12);
  EXPECT_NEAR(f[28], 0.0, 1e-12);
}

TEST(Features, ContourAndBigrams) {
  // Up, down, up, down over a repeating two-note figure.
  std::vector<Note> track;
  for (int i = 0; i < 6; ++i) track.push_back(note(i, 1.0, i % 2 == 0 ? 60 : 67));
  const FeatureVector f = features_of(track, track);
  EXPECT_NEAR(f[12], 4.0 / 5.0, 1e-12);
  EXPECT_NEAR(f[28], 1.0 - 2.0 / 5.0, 1e-12);
  EXPECT_NEAR(f[10], 0.0, 1e-12);
}

TEST(Features, SongRelativeFeatures) {
  const std::vector<Note> bass{note(0, 4, 36), note(4, 4, 43)};
  const std::vector<Note> melody{note(0, 2, 72), note(2, 2, 74), note(4, 4, 76)};
  std::vector<Note> song = bass;
  song.insert(song.end(), melody.begin(), melody.end());
  const FeatureVector fb = features_of(bass, song);
  const FeatureVector fm = features_of(melody, song);
  EXPECT_NEAR(fb[23], 0.0, 1e-12);
  EXPECT_NEAR(fb[24], 1.0, 1e-12);
  EXPECT_NEAR(fm[23], 1.0, 1e-12);
  EXPECT_NEAR(fm[24], 0.0, 1e-12);
  EXPECT_NEAR(fb[29], 1.0, 1e-12);
  EXPECT_NEAR(fm[29], 0.0, 1e-12);
  EXPECT_LT(fb[25], 0.0);
  EXPECT_GT(fm[25], 0.0);
  EXPECT_NEAR(fb[5], 3.5 / 40.0, 1e-12);
}

TEST(Features, VoiceTimesMatchSampling) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    const auto song = mmtest::random_piece(rng, 20);
    std::vector<Note> track;
    for (const Note& n : song) {
      if (n.track == 0) track.push_back(n);
    }
    if (track.empty()) continue;
    const FeatureVector f = features_of(track, song);
    const Sampled s = sample_voices(track, song);
    EXPECT_NEAR(f[18], s.polyphony, 1e-9);
    EXPECT_NEAR(f[19], s.two, 1e-9);
    EXPECT_NEAR(f[20], s.three, 1e-9);
    EXPECT_NEAR(f[21], s.silence, 1e-9);
    EXPECT_NEAR(f[23], s.highest, 1e-9);
    EXPECT_NEAR(f[24], s.lowest, 1e-9);
  }
}

TEST(Features, DrumsAreIgnored) {
  const std::vector<Note> track{note(0, 1, 60), note(1, 1, 62)};
  std::vector<Note> with_drums = track;
  with_drums.push_back(note(0, 0.5, 36, 100, 0, 9));
  with_drums.push_back(note(3, 0.5, 38, 100, 0, 9));
  EXPECT_EQ(features_of(with_drums, with_drums), features_of(track, track));
}

TEST(Features, EmptyTrack) {
  const std::vector<Note> drums{note(0, 1, 36, 90, 0, 9)};
  try {
    features_of({}, drums);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTrack);
  }
  EXPECT_THROW(features_of(drums, drums), Error);
}

TEST(Features, FiniteInRangeAndDeterministicOnSyntheticSongs) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SyntheticSong song = generate_song(seed);
    const NoteList list = build_note_list(song.file);
    const SongTracks tracks = split_tracks(song.file, list);
    for (const SongTrack& track : tracks.tracks) {
      if (track.is_drum) continue;
      const FeatureVector f = extract_features(track.notes, tracks.context);
      EXPECT_EQ(f, extract_features(track.notes, tracks.context));
      for (std::size_t i = 0; i < kFeatureCount; ++i) EXPECT_TRUE(std::isfinite(f[i])) << kFeatureNames[i];
      for (std::size_t i : {5u, 10u, 11u, 12u, 15u, 19u, 20u, 21u, 22u, 23u, 24u, 27u, 28u, 29u}) {
        EXPECT_GE(f[i], 0.0) << kFeatureNames[i];
        EXPECT_LE(f[i], 1.0 + 1e-12) << kFeatureNames[i];
      }
      EXPECT_GE(f[6], 1.0);
      EXPECT_LE(f[6], 12.0);
      EXPECT_GE(f[7], 0.0);
      EXPECT_LE(f[7], std::log2(12.0) + 1e-12);
      EXPECT_GE(f[18], 1.0 - 1e-12);
      EXPECT_GE(f[26], 0.0);
    }
  }
}

TEST(Features, TimeShiftInvariantExceptBarLayout) {
  std::mt19937_64 rng(89);
  for (int trial = 0; trial < 50; ++trial) {
    const auto song = mmtest::random_piece(rng, 20);
    std::vector<Note> track;
    for (const Note& n : song) {
      if (n.track == 1) track.push_back(n);
    }
    if (track.empty()) continue;
    auto shift = [](std::vector<Note> notes) {
      for (Note& n : notes) n.onset_beats += 4.0;
      return notes;
    };
    const FeatureVector a = features_of(track, song);
    const FeatureVector b = features_of(shift(track), shift(song));
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (i == 26) continue;
      EXPECT_NEAR(a[i], b[i], 1e-12) << kFeatureNames[i];
    }
  }
}
