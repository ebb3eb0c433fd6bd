#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tpap/eval.hpp"
#include "tpap/purify.hpp"
#include "tpap/training.hpp"

namespace tpap {

// ---- training history (one CSV row per epoch) ----

/// Column order of history files.
const std::vector<std::string>& history_columns();

std::string history_csv_header();
std::string history_csv_row(const EpochRecord& rec);

/// Appends one record, writing the header first if the file is new. A partial
/// trailing line left by an interrupted writer is cut off before appending.
void append_history(const std::filesystem::path& path, const EpochRecord& rec);
void write_history(const std::filesystem::path& path, const TrainHistory& history);

/// Reads every complete record. An unterminated or malformed last line is
/// ignored (the last complete record wins); malformed earlier lines throw
/// FormatError.
TrainHistory read_history(const std::filesystem::path& path);

// ---- evaluation reports ----

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);
std::string report_to_csv(const RunReport& report);

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const RunReport& report);
RunReport read_report(const std::filesystem::path& json_path);

/// Attack rows against plain / purified accuracy with the difference.
std::string render_report_table(const RunReport& report);
std::string render_history_table(const TrainHistory& history);

// ---- purification traces ----

/// index,pre_label,post_label,linf_delta[,true_label]
std::string purify_trace_csv(const PurifyTrace& trace, const Labels* truth = nullptr);

// ---- ablation ----

std::string verdict_to_json(const OverfitVerdict& v);
/// One row per cell with its final accuracies and verdict.
std::string ablation_cells_csv(const std::vector<AblationCell>& cells);
/// History rows of every cell, prefixed by epsilon and batch size.
std::string ablation_curves_csv(const std::vector<AblationCell>& cells);

/// Any CSV with a header row as an aligned text table.
std::string render_csv_table(const std::string& csv);

/// Writes `text` to `path`, replacing any existing file.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tpap
