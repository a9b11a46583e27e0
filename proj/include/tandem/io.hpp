#pragma once

// Manifest and CSV ingestion for ensemble prediction sets.
//
// Manifest (JSON):
//   { "num_classes": 2, "mode": "prob" | "hard", "labels": "labels.csv",
//     "members": [ {"id": "a", "predictions": "a.csv", "mask": "a_mask.csv",
//                   "run_id": "run0"} ],
//     "prior": "prior.csv" | "uniform" }
// Relative paths resolve against the manifest's directory.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "tandem/data.hpp"

namespace tandem {

struct Ensemble {
  PredictionSet predictions;
  LabelVector labels;
  OverlapMask mask;
  std::vector<double> prior;
};

namespace io {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string(), {}, {}, path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path.string(), {}, {}, path.string());
    out << contents;
    if (!out.flush()) throw InputError("write failed: " + path.string(), {}, {}, path.string());
  }
  fs::rename(tmp, path);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Non-empty lines of a CSV file.
inline std::vector<std::string_view> csv_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(start, end - start));
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

template <typename T>
T parse_number(std::string_view field, const fs::path& path, std::size_t row,
               const std::string& member) {
  field = trim(field);
  T value{};
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw InputError("cannot parse '" + std::string(field) + "' in " + path.string(), member, row,
                     path.string());
  }
  return value;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline std::vector<int> read_int_column(const fs::path& path, const std::string& member = {}) {
  const auto text = read_text(path);
  std::vector<int> out;
  std::size_t row = 0;
  for (auto line : csv_lines(text)) out.push_back(parse_number<int>(line, path, row++, member));
  return out;
}

inline std::vector<double> read_double_column(const fs::path& path) {
  const auto text = read_text(path);
  std::vector<double> out;
  std::size_t row = 0;
  for (auto line : csv_lines(text)) out.push_back(parse_number<double>(line, path, row++, {}));
  return out;
}

// Row-major n x K matrix; every row must carry exactly K fields.
inline std::vector<double> read_probability_matrix(const fs::path& path, int num_classes,
                                                   const std::string& member,
                                                   std::size_t& rows_read) {
  const auto text = read_text(path);
  std::vector<double> out;
  rows_read = 0;
  for (auto line : csv_lines(text)) {
    auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(num_classes)) {
      throw InputError("row has " + std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(num_classes),
                       member, rows_read, path.string());
    }
    for (auto f : fields) out.push_back(parse_number<double>(f, path, rows_read, member));
    ++rows_read;
  }
  return out;
}

// Shortest decimal that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline void throw_first_violation(const std::vector<Violation>& violations) {
  if (violations.empty()) return;
  const auto& v = violations.front();
  std::string where;
  if (!v.member.empty()) where += " (member '" + v.member + "'";
  if (v.row) where += (where.empty() ? " (" : ", ") + std::string("row ") + std::to_string(*v.row);
  if (!where.empty()) where += ")";
  throw InputError(std::string(to_string(v.kind)) + " violation: " + v.message + where, v.member,
                   v.row);
}

}  // namespace io

// Loads and validates a manifest. Missing masks default to all-true, a missing
// prior (or "uniform") to the uniform distribution.
inline Ensemble load_manifest(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  const auto text = io::read_text(manifest_path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError("malformed manifest: " + std::string(e.what()), {}, {},
                     manifest_path.string());
  }
  const fs::path base = manifest_path.parent_path();

  Ensemble ens;
  auto& set = ens.predictions;
  try {
    set.num_classes = doc.at("num_classes").get<int>();
    const auto mode = doc.value("mode", std::string("prob"));
    if (mode == "prob") {
      set.mode = PredictionMode::probability;
    } else if (mode == "hard") {
      set.mode = PredictionMode::hard;
    } else {
      throw InputError("unknown mode '" + mode + "'", {}, {}, manifest_path.string());
    }
    if (set.num_classes < 2) throw InputError("num_classes must be at least 2");

    ens.labels = io::read_int_column(io::resolve(base, doc.at("labels").get<std::string>()));
    set.num_examples = ens.labels.size();

    const auto& members = doc.at("members");
    if (!members.is_array() || members.empty()) {
      throw InputError("manifest lists no members", {}, {}, manifest_path.string());
    }
    bool any_run_id = false;
    for (const auto& m : members) any_run_id = any_run_id || m.contains("run_id");

    for (const auto& m : members) {
      const auto id = m.at("id").get<std::string>();
      const auto pred_path = io::resolve(base, m.at("predictions").get<std::string>());
      std::size_t rows = 0;
      if (set.mode == PredictionMode::probability) {
        set.probabilities.push_back(
            io::read_probability_matrix(pred_path, set.num_classes, id, rows));
      } else {
        set.hard_labels.push_back(io::read_int_column(pred_path, id));
        rows = set.hard_labels.back().size();
      }
      if (rows != set.num_examples) {
        throw InputError("dimension mismatch: member '" + id + "' has " + std::to_string(rows) +
                             " rows but labels have " + std::to_string(set.num_examples),
                         id, {}, pred_path.string());
      }
      set.member_ids.push_back(id);
      if (any_run_id) set.run_ids.push_back(m.value("run_id", std::string{}));

      if (m.contains("mask") && !m.at("mask").is_null()) {
        const auto mask_path = io::resolve(base, m.at("mask").get<std::string>());
        auto values = io::read_int_column(mask_path, id);
        if (values.size() != set.num_examples) {
          throw InputError("dimension mismatch: mask of member '" + id + "' has " +
                               std::to_string(values.size()) + " rows",
                           id, {}, mask_path.string());
        }
        std::vector<std::uint8_t> bits;
        bits.reserve(values.size());
        for (std::size_t t = 0; t < values.size(); ++t) {
          if (values[t] != 0 && values[t] != 1) {
            throw InputError("mask entries must be 0 or 1", id, t, mask_path.string());
          }
          bits.push_back(static_cast<std::uint8_t>(values[t]));
        }
        ens.mask.valid.push_back(std::move(bits));
      } else {
        ens.mask.valid.emplace_back(set.num_examples, std::uint8_t{1});
      }
    }

    if (!doc.contains("prior") || doc.at("prior") == "uniform") {
      ens.prior = uniform_distribution(set.num_members());
    } else {
      const auto prior_path = io::resolve(base, doc.at("prior").get<std::string>());
      auto raw = io::read_double_column(prior_path);
      if (raw.size() != set.num_members()) {
        throw InputError("prior has " + std::to_string(raw.size()) + " entries for " +
                             std::to_string(set.num_members()) + " members",
                         {}, {}, prior_path.string());
      }
      ens.prior = normalize_prior(std::move(raw));
    }
  } catch (const json::exception& e) {
    throw InputError("malformed manifest: " + std::string(e.what()), {}, {},
                     manifest_path.string());
  }

  io::throw_first_violation(validate(set, ens.labels, ens.mask));
  return ens;
}

// Writes `ens` as manifest.json plus CSV files into `dir` (created if needed).
// Reloading yields bit-identical matrices.
inline std::filesystem::path write_manifest(const std::filesystem::path& dir, const Ensemble& ens,
                                            bool write_masks = true) {
  namespace fs = std::filesystem;
  using nlohmann::json;
  fs::create_directories(dir);
  const auto& set = ens.predictions;

  std::string labels;
  for (int y : ens.labels) labels += std::to_string(y) + "\n";
  io::write_atomic(dir / "labels.csv", labels);

  json doc;
  doc["num_classes"] = set.num_classes;
  doc["mode"] = set.mode == PredictionMode::probability ? "prob" : "hard";
  doc["labels"] = "labels.csv";
  doc["members"] = json::array();
  for (std::size_t i = 0; i < set.num_members(); ++i) {
    const auto& id = set.member_ids[i];
    std::string body;
    if (set.mode == PredictionMode::probability) {
      for (std::size_t t = 0; t < set.num_examples; ++t) {
        auto r = set.row(i, t);
        for (std::size_t k = 0; k < r.size(); ++k) {
          if (k) body += ',';
          body += io::format_double(r[k]);
        }
        body += '\n';
      }
    } else {
      for (int y : set.hard_labels[i]) body += std::to_string(y) + "\n";
    }
    const auto pred_name = "member_" + std::to_string(i) + ".csv";
    io::write_atomic(dir / pred_name, body);
    json entry = {{"id", id}, {"predictions", pred_name}};
    if (!set.run_ids.empty()) entry["run_id"] = set.run_ids[i];
    if (write_masks && i < ens.mask.num_members()) {
      std::string mask;
      for (auto b : ens.mask.valid[i]) mask += b ? "1\n" : "0\n";
      const auto mask_name = "member_" + std::to_string(i) + "_mask.csv";
      io::write_atomic(dir / mask_name, mask);
      entry["mask"] = mask_name;
    }
    doc["members"].push_back(entry);
  }
  if (!ens.prior.empty()) {
    std::string prior;
    for (double p : ens.prior) prior += io::format_double(p) + "\n";
    io::write_atomic(dir / "prior.csv", prior);
    doc["prior"] = "prior.csv";
  } else {
    doc["prior"] = "uniform";
  }
  const auto manifest = dir / "manifest.json";
  io::write_atomic(manifest, doc.dump(2) + "\n");
  return manifest;
}

}  // namespace tandem
