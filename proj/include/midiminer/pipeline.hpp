// Analysis pipeline and report writers: parse, spell, key, tension, key
// changes; JSON, CSV and SVG output; a worker pool for batch runs.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "json.hpp"
#include "midiminer/error.hpp"
#include "midiminer/file_io.hpp"
#include "midiminer/midi_io.hpp"
#include "midiminer/spiral.hpp"
#include "midiminer/tension.hpp"
#include "midiminer/tonal.hpp"

namespace midiminer {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct AnalysisOptions {
  double window_beats = kDefaultWindowBeats;
  bool rekey = false;
  SpiralParams spiral;
  KeyOptions key;
  KeyChangeOptions key_changes;
};

struct AnalysisDiagnostics {
  NoteDiagnostics notes;
  std::size_t drum_notes_dropped = 0;
};

struct AnalysisReport {
  std::string input;
  int key_index = 0;
  SpellingClass spelling = SpellingClass::Sharps;
  KeyEstimate key;
  TensionSeries series;
  AnalysisDiagnostics diagnostics;
};

/// Runs the tonal pipeline over an already-built note list.
inline AnalysisReport analyze_notes(const NoteList& list, const AnalysisOptions& options, std::string input = {}) {
  if (!(options.window_beats > 0.0)) throw Error(ErrorCode::InvalidArgument, "window length must be positive");
  options.spiral.validate();

  AnalysisReport report;
  report.input = std::move(input);
  report.diagnostics.notes = list.diagnostics;
  report.diagnostics.drum_notes_dropped = static_cast<std::size_t>(
      std::count_if(list.notes.begin(), list.notes.end(), [](const Note& n) { return n.is_drum(); }));

  const TonalAnalysis tonal = analyze_tonality(list.notes, options.spiral, options.key);
  report.key_index = tonal.key_index;
  report.spelling = tonal.spelling;
  report.key = tonal.key;

  TensionSeries series =
      compute_tension(tonal.spelled, tonal.key.key, options.window_beats, list.time_signatures, options.spiral);
  series.key_changes = detect_key_changes(series, list.time_signatures, options.key_changes);
  if (options.rekey) {
    series = rekeyed_series(tonal.spelled, series, list.time_signatures, options.spiral, tonal.spelling);
  }
  report.series = std::move(series);
  return report;
}

inline AnalysisReport analyze_file(const std::string& path, const AnalysisOptions& options) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return analyze_notes(build_note_list(parse_smf(bytes)), options, path);
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json key_json(const KeyEstimate& key) {
  nlohmann::ordered_json j;
  j["tonic_name"] = tonic_name(key.key.fifth_index);
  j["mode"] = std::string(to_string(key.key.mode));
  j["confidence"] = key.confidence;
  j["fifth_index"] = key.key.fifth_index;
  return j;
}

/// Stable report layout; per_bar arrays all have one entry per bar.
inline nlohmann::ordered_json report_json(const AnalysisReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["tool_version"] = std::string(kToolVersion);
  j["input"] = report.input;
  j["key"] = key_json(report.key);
  j["key_index"] = report.key_index;
  j["spelling"] = std::string(to_string(report.spelling));
  j["window_beats"] = report.series.window_beats;
  j["bars"] = report.series.per_bar.size();

  auto diameter = nlohmann::ordered_json::array();
  auto momentum = nlohmann::ordered_json::array();
  auto strain = nlohmann::ordered_json::array();
  for (const BarTension& b : report.series.per_bar) {
    diameter.push_back(b.diameter);
    momentum.push_back(b.momentum);
    strain.push_back(b.strain);
  }
  j["per_bar"] = {{"diameter", diameter}, {"momentum", momentum}, {"strain", strain}};

  auto changes = nlohmann::ordered_json::array();
  for (const KeyChange& c : report.series.key_changes) changes.push_back({{"bar", c.bar}, {"beat", c.beat}});
  j["key_changes"] = changes;
  if (!report.series.segments.empty()) {
    auto segments = nlohmann::ordered_json::array();
    for (const KeySegment& s : report.series.segments) {
      nlohmann::ordered_json seg;
      seg["start_beat"] = s.start_beat;
      seg["key"] = key_json(s.key);
      segments.push_back(seg);
    }
    j["segments"] = segments;
  }
  j["diagnostics"] = {{"dangling_note_offs", report.diagnostics.notes.dangling_note_offs},
                      {"unterminated_notes", report.diagnostics.notes.unterminated_notes},
                      {"zero_length_notes", report.diagnostics.notes.zero_length_notes},
                      {"drum_notes_dropped", report.diagnostics.drum_notes_dropped}};
  return j;
}

/// Shortest text that reads back to the same double.
inline std::string format_real(double value) {
  char buffer[32];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buffer, sizeof buffer, "%.*g", precision, value);
    if (std::strtod(buffer, nullptr) == value) break;
  }
  return buffer;
}

inline std::string series_csv(const TensionSeries& series) {
  std::string out = "window_start_beat,bar,diameter,momentum,strain\n";
  for (const WindowTension& w : series.windows) {
    out += format_real(w.start_beat) + ',' + std::to_string(w.bar) + ',' + format_real(w.diameter) + ',' +
           format_real(w.momentum) + ',' + format_real(w.strain) + '\n';
  }
  return out;
}

struct SvgOptions {
  int width = 800;
  int height = 300;
};

/// Line plot of per-bar tensile strain with a dashed marker at every key
/// change. Self-contained; no fonts or assets beyond generic families.
inline std::string strain_svg(const TensionSeries& series, const SvgOptions& options = {}) {
  const double left = 56.0;
  const double right = 16.0;
  const double top = 16.0;
  const double bottom = 40.0;
  const double width = std::max(options.width, 120);
  const double height = std::max(options.height, 100);
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const std::size_t bars = series.per_bar.size();

  double y_max = 0.0;
  for (const BarTension& b : series.per_bar) y_max = std::max(y_max, b.strain);
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.05;
  const double x_span = bars > 1 ? static_cast<double>(bars - 1) : 1.0;
  auto x_of = [&](double bar) { return left + (bar - 1.0) / x_span * plot_w; };
  auto y_of = [&](double v) { return top + plot_h - v / y_max * plot_h; };
  auto num = [](double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.2f", v);
    return std::string(buffer);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + plot_h) << "\" x2=\"" << num(left + plot_w)
      << "\" y2=\"" << num(top + plot_h) << "\"/>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + plot_h) << "\"/>\n";
  svg << "</g>\n";

  svg << "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"black\">\n";
  const std::size_t step = std::max<std::size_t>(1, (bars + 9) / 10);
  for (std::size_t b = 1; b <= bars; b += step) {
    svg << "<text x=\"" << num(x_of(static_cast<double>(b))) << "\" y=\"" << num(top + plot_h + 14)
        << "\" text-anchor=\"middle\">" << b << "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    const double v = y_max * t / 4.0;
    svg << "<text x=\"" << num(left - 4) << "\" y=\"" << num(y_of(v) + 3) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(height - 6)
      << "\" text-anchor=\"middle\">bar</text>\n";
  svg << "<text x=\"12\" y=\"" << num(top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 12 "
      << num(top + plot_h / 2) << ")\">tensile strain</text>\n";
  svg << "</g>\n";

  for (const KeyChange& change : series.key_changes) {
    const double x = x_of(change.bar);
    svg << "<line class=\"key-change\" data-bar=\"" << change.bar << "\" x1=\"" << num(x) << "\" y1=\"" << num(top)
        << "\" x2=\"" << num(x) << "\" y2=\"" << num(top + plot_h)
        << "\" stroke=\"red\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"/>\n";
  }
  if (bars > 0) {
    svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
    for (const BarTension& b : series.per_bar) svg << num(x_of(b.bar)) << ',' << num(y_of(b.strain)) << ' ';
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

struct BatchOutcome {
  std::string input;
  bool ok = false;
  std::string error;  // "Code: message" on failure
};

/// MIDI files directly inside `dir`, sorted by path.
inline std::vector<std::filesystem::path> midi_files_in(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".mid" || ext == ".midi" || ext == ".smf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Applies `task` to every input on `jobs` workers. A throwing task marks its
/// own input failed and nothing else; outcomes keep input order.
inline std::vector<BatchOutcome> run_batch(const std::vector<std::filesystem::path>& inputs, unsigned jobs,
                                           const std::function<void(const std::filesystem::path&)>& task) {
  std::vector<BatchOutcome> outcomes(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      BatchOutcome& out = outcomes[i];
      out.input = inputs[i].string();
      try {
        task(inputs[i]);
        out.ok = true;
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, inputs.size()))));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  return outcomes;
}

inline nlohmann::ordered_json batch_summary_json(const std::vector<BatchOutcome>& outcomes) {
  nlohmann::ordered_json j;
  std::size_t ok = 0;
  auto failures = nlohmann::ordered_json::array();
  for (const BatchOutcome& o : outcomes) {
    if (o.ok) {
      ++ok;
    } else {
      failures.push_back({{"input", o.input}, {"error", o.error}});
    }
  }
  j["schema_version"] = kReportSchemaVersion;
  j["tool_version"] = std::string(kToolVersion);
  j["processed"] = outcomes.size();
  j["succeeded"] = ok;
  j["failures"] = failures;
  return j;
}

}  // namespace midiminer
