// midiminer command-line front end.
//
// Exit codes: 0 success, 1 unreadable input or runtime failure, 2 bad flags.
// Data goes to standard output, diagnostics to standard error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "midiminer.hpp"

namespace fs = std::filesystem;
using namespace midiminer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Settings {
  std::string config_path;
  Config config;

  void load() {
    if (!config_path.empty()) config = load_config(config_path);
  }
  SpiralParams spiral() const { return spiral_params_from_config(config); }
  KeywordTable keywords() const { return keyword_table_from_config(config); }
};

struct TensionArgs {
  std::string input;
  double window = kDefaultWindowBeats;
  std::string out_json;
  std::string out_csv;
  std::string out_svg;
  int svg_width = 800;
  int svg_height = 300;
  bool rekey = false;
  bool forward = false;
  bool single_spelling = false;
};

struct ModelArgs {
  std::string input;
  std::string model_dir;
  std::string out;
  bool json = false;
};

struct TrainArgs {
  std::string labels;
  std::string corpus;
  std::string out;
  std::uint64_t seed = 42;
  int trees = 100;
  int depth = 12;
  int min_leaf = 2;
  unsigned threads = 1;
  double test_fraction = 0.25;
};

struct BatchArgs {
  std::string dir;
  std::string command;
  std::string out_dir;
  std::string model_dir;
  unsigned jobs = 1;
};

struct SynthArgs {
  std::string out;
  int songs = 600;
  std::uint64_t seed = 1;
};

AnalysisOptions analysis_options(const Settings& settings, const TensionArgs& args) {
  AnalysisOptions options;
  options.window_beats = args.window;
  options.rekey = args.rekey;
  options.spiral = settings.spiral();
  options.key.mode_aware_spelling = !args.single_spelling;
  options.key_changes.forward = args.forward;
  return options;
}

std::string key_line(const KeyEstimate& key) {
  char buffer[96];
  std::snprintf(buffer, sizeof buffer, "%s (confidence %.6f)", key_name(key.key).c_str(), key.confidence);
  return buffer;
}

std::string describe_track(const MidiFile& file, int index) {
  std::string text = "track " + std::to_string(index);
  const auto& name = file.tracks[static_cast<std::size_t>(index)].name;
  if (name) text += " \"" + *name + "\"";
  return text;
}

nlohmann::ordered_json assignment_json(const std::string& input, const MidiFile& file, const RoleAssignment& a) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["tool_version"] = std::string(kToolVersion);
  j["input"] = input;
  j["melody"] = a.melody ? nlohmann::ordered_json(*a.melody) : nlohmann::ordered_json(nullptr);
  j["bass"] = a.bass ? nlohmann::ordered_json(*a.bass) : nlohmann::ordered_json(nullptr);
  j["harmony"] = a.harmony;
  j["discarded"] = a.discarded;
  auto tracks = nlohmann::ordered_json::array();
  for (const TrackScore& s : a.scores) {
    nlohmann::ordered_json t;
    t["track"] = s.track_index;
    const auto& name = file.tracks[static_cast<std::size_t>(s.track_index)].name;
    t["name"] = name ? nlohmann::ordered_json(*name) : nlohmann::ordered_json(nullptr);
    t["melody"] = s.probability[0];
    t["bass"] = s.probability[1];
    t["harmony"] = s.probability[2];
    tracks.push_back(t);
  }
  j["scores"] = tracks;
  return j;
}

std::string assignment_text(const MidiFile& file, const RoleAssignment& a) {
  std::string out;
  char buffer[160];
  for (const TrackScore& s : a.scores) {
    std::snprintf(buffer, sizeof buffer, "%-32s melody %.3f  bass %.3f  harmony %.3f\n",
                  describe_track(file, s.track_index).c_str(), s.probability[0], s.probability[1], s.probability[2]);
    out += buffer;
  }
  out += "melody: " + (a.melody ? describe_track(file, *a.melody) : std::string("none")) + '\n';
  out += "bass: " + (a.bass ? describe_track(file, *a.bass) : std::string("none")) + '\n';
  out += "harmony:";
  if (a.harmony.empty()) out += " none";
  for (int t : a.harmony) out += ' ' + std::to_string(t);
  out += "\ndiscarded:";
  if (a.discarded.empty()) out += " none";
  for (int t : a.discarded) out += ' ' + std::to_string(t);
  out += '\n';
  return out;
}

MidiFile read_midi(const std::string& path) { return parse_smf(read_file_bytes(path)); }

// ---------------------------------------------------------------------------

int run_tension(const Settings& settings, const TensionArgs& args) {
  const AnalysisReport report = analyze_file(args.input, analysis_options(settings, args));
  const std::string json = report_json(report).dump(2) + '\n';
  bool wrote = false;
  if (!args.out_json.empty()) {
    write_file_text(args.out_json, json);
    wrote = true;
  }
  if (!args.out_csv.empty()) {
    write_file_text(args.out_csv, series_csv(report.series));
    wrote = true;
  }
  if (!args.out_svg.empty()) {
    write_file_text(args.out_svg, strain_svg(report.series, {args.svg_width, args.svg_height}));
    wrote = true;
  }
  if (!wrote) std::cout << json;
  for (const KeyChange& change : report.series.key_changes) {
    std::cerr << "key change flagged at bar " << change.bar << " (beat " << change.beat << ")\n";
  }
  return kExitOk;
}

int run_key(const Settings& settings, const TensionArgs& args, bool json) {
  const NoteList list = build_note_list(read_midi(args.input));
  KeyOptions options;
  options.mode_aware_spelling = !args.single_spelling;
  const TonalAnalysis tonal = analyze_tonality(list.notes, settings.spiral(), options);
  if (json) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["tool_version"] = std::string(kToolVersion);
    j["input"] = args.input;
    j["key"] = key_json(tonal.key);
    j["key_index"] = tonal.key_index;
    j["spelling"] = std::string(to_string(tonal.spelling));
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << key_line(tonal.key) << '\n';
  }
  return kExitOk;
}

int run_classify(const ModelArgs& args) {
  const RoleModels models = load_role_models(args.model_dir);
  const MidiFile file = read_midi(args.input);
  const RoleAssignment assignment = assign_roles(file, models);
  if (args.json) {
    std::cout << assignment_json(args.input, file, assignment).dump(2) << '\n';
  } else {
    std::cout << assignment_text(file, assignment);
  }
  return kExitOk;
}

int run_extract(const ModelArgs& args) {
  const RoleModels models = load_role_models(args.model_dir);
  const MidiFile file = read_midi(args.input);
  const RoleAssignment assignment = assign_roles(file, models);
  if (assignment.empty()) std::cerr << "warning: no melody, bass or harmony track identified in " << args.input << '\n';
  write_file_bytes(args.out, write_smf(extract_tracks(file, assignment)));
  std::cout << assignment_text(file, assignment);
  return kExitOk;
}

int run_train(const Settings& settings, const TrainArgs& args) {
  LabelMap labels;
  if (!args.labels.empty()) {
    const auto bytes = read_file_bytes(args.labels);
    labels = parse_label_file(std::string(bytes.begin(), bytes.end()));
  }
  const KeywordTable keywords = settings.keywords();
  std::vector<LabeledTrack> data;
  for (const fs::path& path : midi_files_in(args.corpus)) {
    try {
      auto tracks = labeled_tracks(read_midi(path.string()), path.filename().string(), labels, keywords);
      data.insert(data.end(), tracks.begin(), tracks.end());
    } catch (const std::exception& e) {
      std::cerr << "skipping " << path.string() << ": " << e.what() << '\n';
    }
  }
  ForestParams params;
  params.n_trees = args.trees;
  params.max_depth = args.depth;
  params.min_leaf = args.min_leaf;
  params.seed = args.seed;
  params.threads = args.threads;
  const TrainingResult result = train_role_models(data, params, args.test_fraction);
  save_role_models(result.models, args.out);
  std::cout << "train " << result.train_size << " tracks, test " << result.test_size << " tracks\n";
  std::cout << format_evaluation_table(result.evaluation);
  return kExitOk;
}

int run_batch_command(const Settings& settings, const BatchArgs& args, const TensionArgs& tension) {
  const std::vector<fs::path> inputs = midi_files_in(args.dir);
  fs::create_directories(args.out_dir);
  std::optional<RoleModels> models;
  if (args.command == "classify" || args.command == "extract") {
    if (args.model_dir.empty()) throw CLI::ValidationError("--model-dir", "required for " + args.command);
    models = load_role_models(args.model_dir);
  }
  const AnalysisOptions options = analysis_options(settings, tension);
  const fs::path out_dir(args.out_dir);

  auto task = [&](const fs::path& input) {
    const std::string stem = input.stem().string();
    if (args.command == "tension") {
      const AnalysisReport report = analyze_file(input.string(), options);
      write_file_text((out_dir / (stem + ".json")).string(), report_json(report).dump(2) + '\n');
      write_file_text((out_dir / (stem + ".csv")).string(), series_csv(report.series));
    } else if (args.command == "key") {
      const NoteList list = build_note_list(read_midi(input.string()));
      const TonalAnalysis tonal = analyze_tonality(list.notes, options.spiral, options.key);
      nlohmann::ordered_json j;
      j["input"] = input.string();
      j["key"] = key_json(tonal.key);
      write_file_text((out_dir / (stem + ".json")).string(), j.dump(2) + '\n');
    } else {
      const MidiFile file = read_midi(input.string());
      const RoleAssignment assignment = assign_roles(file, *models);
      write_file_text((out_dir / (stem + ".json")).string(),
                      assignment_json(input.string(), file, assignment).dump(2) + '\n');
      if (args.command == "extract") {
        write_file_bytes((out_dir / (stem + ".mid")).string(), write_smf(extract_tracks(file, assignment)));
      }
    }
  };
  const std::vector<BatchOutcome> outcomes = run_batch(inputs, args.jobs, task);
  const std::string summary = batch_summary_json(outcomes).dump(2) + '\n';
  write_file_text((out_dir / "summary.json").string(), summary);
  for (const BatchOutcome& o : outcomes) {
    if (!o.ok) std::cerr << "failed: " << o.input << ": " << o.error << '\n';
  }
  std::cout << summary;
  return kExitOk;
}

int run_synth(const SynthArgs& args) {
  fs::create_directories(args.out);
  std::string labels = "file_id,track_index,role\n";
  for (int i = 0; i < args.songs; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "song_%04d.mid", i);
    const SyntheticSong song = generate_song(args.seed * 1000003ULL + static_cast<std::uint64_t>(i));
    write_file_bytes((fs::path(args.out) / name).string(), write_smf(song.file));
    for (const auto& [track, role] : song.labels) {
      labels += std::string(name) + ',' + std::to_string(track) + ',' + std::string(to_string(role)) + '\n';
    }
  }
  write_file_text((fs::path(args.out) / "labels.csv").string(), labels);
  std::cout << "wrote " << args.songs << " songs to " << args.out << '\n';
  return kExitOk;
}

void add_analysis_flags(CLI::App* cmd, TensionArgs& args) {
  cmd->add_option("--window", args.window, "Analysis window in beats")->check(CLI::PositiveNumber);
  cmd->add_flag("--rekey", args.rekey, "Re-detect the key between flagged key changes");
  cmd->add_flag("--forward", args.forward, "Compare each 16-beat span with the following one");
  cmd->add_flag("--single-spelling", args.single_spelling, "Spell from the key index only");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIDI tonal tension analysis and track role extraction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  Settings settings;
  app.add_option("--config", settings.config_path, "key = value file with spiral parameters and keywords")
      ->check(CLI::ExistingFile);

  TensionArgs tension;
  auto* tension_cmd = app.add_subcommand("tension", "Tonal tension curves and key changes");
  tension_cmd->add_option("file", tension.input, "MIDI file")->required();
  add_analysis_flags(tension_cmd, tension);
  tension_cmd->add_option("--out-json", tension.out_json, "Write the JSON report here");
  tension_cmd->add_option("--out-csv", tension.out_csv, "Write per-window values here");
  tension_cmd->add_option("--out-svg", tension.out_svg, "Write the per-bar strain plot here");
  tension_cmd->add_option("--svg-width", tension.svg_width, "Plot width in pixels")->check(CLI::Range(120, 20000));
  tension_cmd->add_option("--svg-height", tension.svg_height, "Plot height in pixels")->check(CLI::Range(100, 20000));

  TensionArgs key;
  bool key_json_flag = false;
  auto* key_cmd = app.add_subcommand("key", "Global key estimate");
  key_cmd->add_option("file", key.input, "MIDI file")->required();
  key_cmd->add_flag("--json", key_json_flag, "JSON output");
  key_cmd->add_flag("--single-spelling", key.single_spelling, "Spell from the key index only");

  ModelArgs classify;
  auto* classify_cmd = app.add_subcommand("classify", "Melody, bass and harmony track roles");
  classify_cmd->add_option("file", classify.input, "MIDI file")->required();
  classify_cmd->add_option("--model-dir", classify.model_dir, "Directory holding the trained models")
      ->envname("MIDIMINER_MODEL_DIR")
      ->required()
      ->check(CLI::ExistingDirectory);
  classify_cmd->add_flag("--json", classify.json, "JSON output");

  ModelArgs extract;
  auto* extract_cmd = app.add_subcommand("extract", "Write a MIDI file with only the identified tracks");
  extract_cmd->add_option("file", extract.input, "MIDI file")->required();
  extract_cmd->add_option("--model-dir", extract.model_dir, "Directory holding the trained models")
      ->envname("MIDIMINER_MODEL_DIR")
      ->required()
      ->check(CLI::ExistingDirectory);
  extract_cmd->add_option("--out", extract.out, "Output MIDI file")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the three role forests and print the evaluation table");
  train_cmd->add_option("--corpus", train.corpus, "Directory of MIDI files")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--labels", train.labels, "file_id,track_index,role label file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Model output directory")->required();
  train_cmd->add_option("--seed", train.seed, "Random seed");
  train_cmd->add_option("--trees", train.trees, "Trees per forest")->check(CLI::Range(1, 100000));
  train_cmd->add_option("--depth", train.depth, "Maximum tree depth")->check(CLI::Range(1, 64));
  train_cmd->add_option("--min-leaf", train.min_leaf, "Minimum samples per leaf")->check(CLI::Range(1, 1000000));
  train_cmd->add_option("--threads", train.threads, "Worker threads")->check(CLI::Range(1u, 256u));
  train_cmd->add_option("--test-fraction", train.test_fraction, "Held-out share")->check(CLI::Range(0.0, 0.9));

  BatchArgs batch;
  TensionArgs batch_tension;
  auto* batch_cmd = app.add_subcommand("batch", "Run a subcommand over every MIDI file in a directory");
  batch_cmd->add_option("dir", batch.dir, "Input directory")->required()->check(CLI::ExistingDirectory);
  batch_cmd->add_option("command", batch.command, "tension, key, classify or extract")
      ->required()
      ->check(CLI::IsMember({"tension", "key", "classify", "extract"}));
  batch_cmd->add_option("--out-dir", batch.out_dir, "Directory for per-file reports")->required();
  batch_cmd->add_option("--model-dir", batch.model_dir, "Directory holding the trained models")
      ->envname("MIDIMINER_MODEL_DIR")
      ->check(CLI::ExistingDirectory);
  batch_cmd->add_option("--jobs", batch.jobs, "Worker threads")->check(CLI::Range(1u, 256u));
  add_analysis_flags(batch_cmd, batch_tension);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labelled corpus");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--songs", synth.songs, "Number of songs")->check(CLI::Range(1, 1000000));
  synth_cmd->add_option("--seed", synth.seed, "Corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    settings.load();
    if (*tension_cmd) return run_tension(settings, tension);
    if (*key_cmd) return run_key(settings, key, key_json_flag);
    if (*classify_cmd) return run_classify(classify);
    if (*extract_cmd) return run_extract(extract);
    if (*train_cmd) return run_train(settings, train);
    if (*batch_cmd) return run_batch_command(settings, batch, batch_tension);
    if (*synth_cmd) return run_synth(synth);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
