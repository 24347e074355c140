/*
 * Copyright 2026 The MARS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mars/error.hpp"
#include "mars/telemetry.hpp"

namespace mars {
namespace {

using nlohmann::json;

constexpr const char* kColumns[] = {
    "run_id", "r_ve",           "r_llm",       "dataset_size", "batch_size",
    "step",   "val_perplexity", "ve_progress", "llm_progress"};

struct Event {
  std::string run_id;
  RankPair ranks;
  std::int64_t dataset_size = 0;
  std::int64_t batch_size = 0;
  std::int64_t step = 0;
  double perplexity = 0.0;
  double ve_progress = 0.0;
  double llm_progress = 0.0;
  std::size_t line = 0;
};

void CheckValue(double v, const char* field, std::size_t line) {
  if (!std::isfinite(v) || v <= 0.0) {
    throw ValidationError(fmt::format("line {}: {} must be finite and > 0",
                                      line, field));
  }
}

void CheckEvent(const Event& e) {
  if (e.run_id.empty()) throw ParseError("empty run_id", e.line);
  if (e.ranks.r_ve < 1 || e.ranks.r_llm < 1) {
    throw ValidationError(
        fmt::format("line {}: ranks must be positive", e.line));
  }
  if (e.dataset_size <= 0 || e.batch_size <= 0) {
    throw ValidationError(fmt::format(
        "line {}: dataset_size and batch_size must be positive", e.line));
  }
  if (e.step < 0) {
    throw ValidationError(
        fmt::format("line {}: step must be non-negative", e.line));
  }
  CheckValue(e.perplexity, "val_perplexity", e.line);
  CheckValue(e.ve_progress, "ve_progress", e.line);
  CheckValue(e.llm_progress, "llm_progress", e.line);
}

std::int64_t IntField(const json& record, const char* key, std::size_t line) {
  const auto it = record.find(key);
  if (it == record.end()) {
    throw ParseError(fmt::format("missing field '{}'", key), line);
  }
  if (!it->is_number_integer()) {
    throw ParseError(fmt::format("field '{}' must be an integer", key), line);
  }
  return it->get<std::int64_t>();
}

double RealField(const json& record, const char* key, std::size_t line) {
  const auto it = record.find(key);
  if (it == record.end()) {
    throw ParseError(fmt::format("missing field '{}'", key), line);
  }
  if (!it->is_number()) {
    throw ParseError(fmt::format("field '{}' must be a number", key), line);
  }
  return it->get<double>();
}

int RankField(const json& record, const char* key, std::size_t line) {
  const auto v = IntField(record, key, line);
  if (v > std::numeric_limits<int>::max() || v < std::numeric_limits<int>::min()) {
    throw ParseError(fmt::format("field '{}' out of range", key), line);
  }
  return static_cast<int>(v);
}

Event EventFromJson(const std::string& text, std::size_t line) {
  json record;
  try {
    record = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("invalid JSON ({})", e.what()), line);
  }
  if (!record.is_object()) throw ParseError("record is not an object", line);
  const auto id = record.find("run_id");
  if (id == record.end() || !id->is_string()) {
    throw ParseError("missing string field 'run_id'", line);
  }
  Event e;
  e.line = line;
  e.run_id = id->get<std::string>();
  e.ranks = {RankField(record, "r_ve", line), RankField(record, "r_llm", line)};
  e.dataset_size = IntField(record, "dataset_size", line);
  e.batch_size = IntField(record, "batch_size", line);
  e.step = IntField(record, "step", line);
  e.perplexity = RealField(record, "val_perplexity", line);
  e.ve_progress = RealField(record, "ve_progress", line);
  e.llm_progress = RealField(record, "llm_progress", line);
  return e;
}

std::vector<std::string_view> SplitCsv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <typename T>
T ParseNumber(std::string_view text, const char* field, std::size_t line) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ParseError(fmt::format("field '{}' is not a valid number: '{}'",
                                 field, text),
                     line);
  }
  return value;
}

std::vector<Event> ReadJsonl(std::istream& in) {
  std::vector<Event> events;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (Trim(text).empty()) continue;
    events.push_back(EventFromJson(text, line));
  }
  return events;
}

std::vector<Event> ReadCsv(std::istream& in) {
  std::vector<Event> events;
  std::string text;
  std::size_t line = 0;
  std::unordered_map<std::string, std::size_t> column;
  while (std::getline(in, text)) {
    ++line;
    const auto trimmed = Trim(text);
    if (trimmed.empty()) continue;
    const auto cells = SplitCsv(trimmed);
    if (column.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        column[std::string(Trim(cells[i]))] = i;
      }
      for (const char* name : kColumns) {
        if (!column.contains(name)) {
          throw ParseError(fmt::format("header lacks column '{}'", name), line);
        }
      }
      continue;
    }
    if (cells.size() != column.size()) {
      throw ParseError(fmt::format("expected {} cells, found {}",
                                   column.size(), cells.size()),
                       line);
    }
    auto cell = [&](const char* name) { return Trim(cells[column.at(name)]); };
    Event e;
    e.line = line;
    e.run_id = std::string(cell("run_id"));
    e.ranks = {ParseNumber<int>(cell("r_ve"), "r_ve", line),
               ParseNumber<int>(cell("r_llm"), "r_llm", line)};
    e.dataset_size =
        ParseNumber<std::int64_t>(cell("dataset_size"), "dataset_size", line);
    e.batch_size =
        ParseNumber<std::int64_t>(cell("batch_size"), "batch_size", line);
    e.step = ParseNumber<std::int64_t>(cell("step"), "step", line);
    e.perplexity =
        ParseNumber<double>(cell("val_perplexity"), "val_perplexity", line);
    e.ve_progress = ParseNumber<double>(cell("ve_progress"), "ve_progress", line);
    e.llm_progress =
        ParseNumber<double>(cell("llm_progress"), "llm_progress", line);
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<TelemetryRun> Assemble(std::vector<Event> events) {
  std::vector<TelemetryRun> runs;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<const Event*>> grouped;
  for (auto& e : events) {
    CheckEvent(e);
    const auto [it, inserted] = index.try_emplace(e.run_id, runs.size());
    if (inserted) {
      TelemetryRun run;
      run.run_id = e.run_id;
      run.ranks = e.ranks;
      run.dataset_size = e.dataset_size;
      run.batch_size = e.batch_size;
      runs.push_back(std::move(run));
      grouped.emplace_back();
    } else {
      const auto& run = runs[it->second];
      if (run.ranks != e.ranks || run.dataset_size != e.dataset_size ||
          run.batch_size != e.batch_size) {
        throw ParseError(fmt::format("run '{}' changes its ranks, dataset "
                                     "size or batch size",
                                     e.run_id),
                         e.line);
      }
    }
    grouped[it->second].push_back(&e);
  }

  for (std::size_t r = 0; r < runs.size(); ++r) {
    auto& group = grouped[r];
    std::stable_sort(group.begin(), group.end(),
                     [](const Event* a, const Event* b) { return a->step < b->step; });
    auto& run = runs[r];
    std::int64_t interval = 0;
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto& e = *group[i];
      if (i > 0) {
        const auto gap = e.step - group[i - 1]->step;
        if (gap == 0) {
          const auto line = std::max(e.line, group[i - 1]->line);
          throw ParseError(fmt::format("duplicate step {} for run '{}'",
                                       e.step, run.run_id),
                           line);
        }
        interval = interval == 0 ? gap : std::min(interval, gap);
      }
      run.curve.push_back({e.step, e.perplexity});
      run.ve_progress.push_back({e.step, e.ve_progress});
      run.llm_progress.push_back({e.step, e.llm_progress});
    }
    // A single evaluation carries no spacing; fall back to its own step.
    run.eval_interval =
        interval > 0 ? interval : std::max<std::int64_t>(1, run.curve.front().step);
  }
  return runs;
}

void CheckSeries(const Series& series, const std::string& name,
                 const std::string& run_id, bool allow_empty) {
  if (series.empty() && !allow_empty) {
    throw ValidationError(fmt::format("run '{}': {} is empty", run_id, name));
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].step < 0 || (i > 0 && series[i].step <= series[i - 1].step)) {
      throw ValidationError(fmt::format(
          "run '{}': {} steps must be non-negative and strictly increasing",
          run_id, name));
    }
    if (!std::isfinite(series[i].value) || series[i].value <= 0.0) {
      throw ValidationError(fmt::format(
          "run '{}': {} values must be finite and > 0", run_id, name));
    }
  }
}

}  // namespace

void ValidateRun(const TelemetryRun& run, int r_max) {
  ValidateRankPair(run.ranks, r_max);
  if (run.dataset_size <= 0 || run.batch_size <= 0 || run.eval_interval <= 0) {
    throw ValidationError(fmt::format(
        "run '{}': dataset_size, batch_size and eval_interval must be positive",
        run.run_id));
  }
  CheckSeries(run.curve, "curve", run.run_id, false);
  CheckSeries(run.ve_progress, "ve_progress", run.run_id, true);
  CheckSeries(run.llm_progress, "llm_progress", run.run_id, true);
}

TelemetryFormat ParseTelemetryFormat(std::string_view name) {
  if (name == "jsonl") return TelemetryFormat::kJsonl;
  if (name == "csv") return TelemetryFormat::kCsv;
  throw UsageError("unknown telemetry format '" + std::string(name) +
                   "' (expected jsonl or csv)");
}

std::vector<TelemetryRun> ParseTelemetry(std::istream& in,
                                         TelemetryFormat format) {
  return Assemble(format == TelemetryFormat::kJsonl ? ReadJsonl(in)
                                                    : ReadCsv(in));
}

std::vector<TelemetryRun> ParseTelemetryFile(const std::filesystem::path& path,
                                             TelemetryFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open telemetry file " + path.string());
  return ParseTelemetry(in, format);
}

void WriteTelemetry(std::ostream& out, std::span<const TelemetryRun> runs,
                    TelemetryFormat format) {
  if (format == TelemetryFormat::kCsv) {
    for (std::size_t i = 0; i < std::size(kColumns); ++i) {
      out << (i ? "," : "") << kColumns[i];
    }
    out << '\n';
  }
  for (const auto& run : runs) {
    if (run.ve_progress.size() != run.curve.size() ||
        run.llm_progress.size() != run.curve.size()) {
      throw ValidationError("run '" + run.run_id +
                            "': series lengths differ; cannot emit events");
    }
    if (format == TelemetryFormat::kCsv &&
        run.run_id.find_first_of(",\"\n") != std::string::npos) {
      throw ValidationError("run_id '" + run.run_id +
                            "' cannot be written as CSV");
    }
    for (std::size_t i = 0; i < run.curve.size(); ++i) {
      const auto step = run.curve[i].step;
      if (run.ve_progress[i].step != step || run.llm_progress[i].step != step) {
        throw ValidationError("run '" + run.run_id +
                              "': series steps differ; cannot emit events");
      }
      if (format == TelemetryFormat::kJsonl) {
        const json record = {{"run_id", run.run_id},
                             {"r_ve", run.ranks.r_ve},
                             {"r_llm", run.ranks.r_llm},
                             {"dataset_size", run.dataset_size},
                             {"batch_size", run.batch_size},
                             {"step", step},
                             {"val_perplexity", run.curve[i].value},
                             {"ve_progress", run.ve_progress[i].value},
                             {"llm_progress", run.llm_progress[i].value}};
        out << record.dump() << '\n';
      } else {
        out << fmt::format("{},{},{},{},{},{},{:.17g},{:.17g},{:.17g}\n",
                           run.run_id, run.ranks.r_ve, run.ranks.r_llm,
                           run.dataset_size, run.batch_size, step,
                           run.curve[i].value, run.ve_progress[i].value,
                           run.llm_progress[i].value);
      }
    }
  }
}

}  // namespace mars
