#include "tpap/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "tpap/error.hpp"

namespace tpap {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : std::string(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_record(const std::string& line, EpochRecord& rec) {
  const auto f = split_csv_line(line);
  if (f.size() != history_columns().size()) return false;
  double v = 0.0;
  if (!parse_double(f[0], v)) return false;
  rec.epoch = static_cast<int>(v);
  if (!parse_double(f[1], v)) return false;
  rec.lr = static_cast<float>(v);
  if (!parse_double(f[2], rec.mean_loss)) return false;
  std::optional<double>* accs[] = {&rec.clean_train_acc, &rec.adv_train_acc, &rec.clean_test_acc,
                                   &rec.trained_test_acc, &rec.fgsm_test_acc, &rec.pgd_test_acc};
  for (std::size_t i = 0; i < 6; ++i) {
    if (f[3 + i].empty()) {
      accs[i]->reset();
    } else {
      if (!parse_double(f[3 + i], v) || v < 0.0 || v > 100.0) return false;
      *accs[i] = v;
    }
  }
  return parse_double(f[9], rec.wall_seconds);
}

}  // namespace

const std::vector<std::string>& history_columns() {
  static const std::vector<std::string> cols = {"epoch",          "lr",           "mean_loss",     "clean_train_acc",
                                                "adv_train_acc",  "clean_test_acc", "trained_test_acc",
                                                "fgsm_test_acc",  "pgd_test_acc", "wall_seconds"};
  return cols;
}

std::string history_csv_header() {
  std::string s;
  for (const auto& c : history_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

std::string history_csv_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + fmt("%.9g", r.lr) + "," + fmt("%.6f", r.mean_loss) + "," +
         opt(r.clean_train_acc) + "," + opt(r.adv_train_acc) + "," + opt(r.clean_test_acc) + "," +
         opt(r.trained_test_acc) + "," + opt(r.fgsm_test_acc) + "," + opt(r.pgd_test_acc) + "," +
         fmt("%.3f", r.wall_seconds);
}

void append_history(const std::filesystem::path& path, const EpochRecord& rec) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path, ec) == 0;
  if (!fresh) {
    // Drop an unterminated tail so the new row starts on its own line.
    const std::string text = read_text(path);
    if (text.back() != '\n') {
      const std::size_t keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
      std::filesystem::resize_file(path, keep);
    }
  }
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot open for appending");
  if (fresh || std::filesystem::file_size(path) == 0) out << history_csv_header() << '\n';
  out << history_csv_row(rec) << '\n';
  out.flush();
  if (!out) throw Error(path.string() + ": write failed");
}

void write_history(const std::filesystem::path& path, const TrainHistory& history) {
  std::string s = history_csv_header() + "\n";
  for (const auto& r : history) s += history_csv_row(r) + "\n";
  write_text(path, s);
}

TrainHistory read_history(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  bool last_terminated = true;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      last_terminated = false;
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) return {};
  if (split_csv_line(lines[0]) != history_columns())
    throw FormatError(path.string() + ": not a history file (unexpected header)");

  TrainHistory out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const bool last = i + 1 == lines.size();
    if (last && !last_terminated) break;
    EpochRecord rec;
    if (!parse_record(lines[i], rec)) {
      if (last) break;
      throw FormatError(path.string() + ": malformed record on line " + std::to_string(i + 1));
    }
    out.push_back(rec);
  }
  return out;
}

std::string report_to_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["version"] = report.version;
  j["model"] = report.model_id;
  j["dataset"] = report.dataset;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["attack"] = r.attack;
    row["purified"] = r.purified;
    row["n"] = r.n;
    row["correct"] = r.correct;
    row["accuracy_pct"] = r.accuracy_pct;
    row["mean_linf"] = r.mean_linf;
    row["mean_purify_linf"] = r.mean_purify_linf;
    row["wall_seconds"] = r.wall_seconds;
    j["rows"].push_back(row);
  }
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunReport rep;
    rep.version = j.at("version").get<int>();
    if (rep.version != RunReport::kVersion)
      throw FormatError("report: unsupported version " + std::to_string(rep.version));
    rep.model_id = j.at("model").get<std::string>();
    rep.dataset = j.at("dataset").get<std::string>();
    for (const auto& row : j.at("rows")) {
      ReportRow r;
      r.attack = row.at("attack").get<std::string>();
      r.purified = row.at("purified").get<bool>();
      r.n = row.at("n").get<std::size_t>();
      r.correct = row.at("correct").get<std::size_t>();
      r.accuracy_pct = row.at("accuracy_pct").get<double>();
      r.mean_linf = row.at("mean_linf").get<double>();
      r.mean_purify_linf = row.value("mean_purify_linf", 0.0);
      r.wall_seconds = row.at("wall_seconds").get<double>();
      if (r.n == 0 || r.correct > r.n || r.accuracy_pct < 0.0 || r.accuracy_pct > 100.0)
        throw FormatError("report: row '" + r.attack + "' violates 0 <= correct <= n, n > 0");
      rep.rows.push_back(r);
    }
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

std::string report_to_csv(const RunReport& report) {
  std::string s = "model,dataset,attack,purified,n,correct,accuracy_pct,mean_linf,mean_purify_linf,wall_seconds\n";
  for (const auto& r : report.rows) {
    s += report.model_id + "," + report.dataset + "," + r.attack + "," + (r.purified ? "1" : "0") + "," +
         std::to_string(r.n) + "," + std::to_string(r.correct) + "," + fmt("%.4f", r.accuracy_pct) + "," +
         fmt("%.6f", r.mean_linf) + "," + fmt("%.6f", r.mean_purify_linf) + "," + fmt("%.3f", r.wall_seconds) + "\n";
  }
  return s;
}

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const RunReport& report) {
  write_text(json_path, report_to_json(report));
  write_text(csv_path, report_to_csv(report));
}

RunReport read_report(const std::filesystem::path& json_path) { return report_from_json(read_text(json_path)); }

namespace {

std::string render_rows(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) os << "  ";
      os << rows[i][c] << std::string(width[c] - rows[i][c].size(), ' ');
    }
    os << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

}  // namespace

std::string render_report_table(const RunReport& report) {
  std::vector<std::vector<std::string>> rows = {{"attack", "n", "plain %", "TPAP %", "delta", "mean Linf*255"}};
  std::vector<std::string> order;
  for (const auto& r : report.rows)
    if (std::find(order.begin(), order.end(), r.attack) == order.end()) order.push_back(r.attack);
  for (const auto& name : order) {
    const ReportRow* plain = report.find(name, false);
    const ReportRow* pur = report.find(name, true);
    const ReportRow* any = plain ? plain : pur;
    rows.push_back({name, std::to_string(any->n), plain ? fmt("%.2f", plain->accuracy_pct) : "-",
                    pur ? fmt("%.2f", pur->accuracy_pct) : "-",
                    plain && pur ? fmt("%+.2f", pur->accuracy_pct - plain->accuracy_pct) : "-",
                    fmt("%.2f", any->mean_linf * 255.0)});
  }
  return "model " + report.model_id + " on " + report.dataset + "\n" + render_rows(rows);
}

std::string render_history_table(const TrainHistory& history) {
  std::vector<std::vector<std::string>> rows = {
      {"epoch", "lr", "loss", "clean tr", "adv tr", "clean te", "trained te", "fgsm te", "pgd te", "sec"}};
  auto o = [](const std::optional<double>& v) { return v ? fmt("%.2f", *v) : std::string("-"); };
  for (const auto& r : history)
    rows.push_back({std::to_string(r.epoch), fmt("%.6g", r.lr), fmt("%.4f", r.mean_loss), o(r.clean_train_acc),
                    o(r.adv_train_acc), o(r.clean_test_acc), o(r.trained_test_acc), o(r.fgsm_test_acc),
                    o(r.pgd_test_acc), fmt("%.1f", r.wall_seconds)});
  return render_rows(rows);
}

std::string purify_trace_csv(const PurifyTrace& trace, const Labels* truth) {
  std::string s = truth ? "index,pre_label,post_label,linf_delta,true_label\n" : "index,pre_label,post_label,linf_delta\n";
  for (std::size_t i = 0; i < trace.pre_labels.size(); ++i) {
    s += std::to_string(i) + "," + std::to_string(trace.pre_labels[i]) + "," +
         (i < trace.post_labels.size() ? std::to_string(trace.post_labels[i]) : std::string()) + "," +
         fmt("%.9g", trace.linf_delta.at(i));
    if (truth) s += "," + std::to_string(truth->at(i));
    s += "\n";
  }
  return s;
}

std::string verdict_to_json(const OverfitVerdict& v) {
  nlohmann::ordered_json j;
  j["is_robust_overfit"] = v.is_robust_overfit;
  j["trained_attack_train_acc"] = v.trained_attack_train_acc;
  j["other_attack_train_acc"] = v.other_attack_train_acc;
  j["clean_test_acc"] = v.clean_test_acc;
  j["trained_attack_test_acc"] = v.trained_attack_test_acc;
  return j.dump(2) + "\n";
}

std::string ablation_cells_csv(const std::vector<AblationCell>& cells) {
  std::string s =
      "epsilon_255,batch_size,clean_test_acc,fgsm_test_acc,pgd_test_acc,trained_attack_train_acc,"
      "other_attack_train_acc,verdict_clean_test_acc,verdict_trained_test_acc,is_robust_overfit\n";
  for (const auto& c : cells) {
    const auto& v = c.verdict;
    s += fmt("%g", c.epsilon * 255.0) + "," + std::to_string(c.batch_size) + "," + fmt("%.4f", c.clean_test_acc) +
         "," + fmt("%.4f", c.fgsm_test_acc) + "," + fmt("%.4f", c.pgd_test_acc) + "," +
         fmt("%.4f", v.trained_attack_train_acc) + "," + fmt("%.4f", v.other_attack_train_acc) + "," +
         fmt("%.4f", v.clean_test_acc) + "," + fmt("%.4f", v.trained_attack_test_acc) + "," +
         (v.is_robust_overfit ? "1" : "0") + "\n";
  }
  return s;
}

std::string ablation_curves_csv(const std::vector<AblationCell>& cells) {
  std::string s = "epsilon_255,batch_size," + history_csv_header() + "\n";
  for (const auto& c : cells)
    for (const auto& r : c.history)
      s += fmt("%g", c.epsilon * 255.0) + "," + std::to_string(c.batch_size) + "," + history_csv_row(r) + "\n";
  return s;
}

std::string render_csv_table(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) rows.push_back(split_csv_line(line));
  return render_rows(rows);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw Error(path.string() + ": write failed");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open for reading");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace tpap
