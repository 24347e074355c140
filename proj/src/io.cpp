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

#include "mars/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "mars/error.hpp"

namespace mars {
namespace {

using nlohmann::json;

template <typename T>
T Get(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(fmt::format("missing key '{}'", key));
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(fmt::format("key '{}' has the wrong type", key));
  }
}

const json& Array(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_array()) {
    throw ValidationError(fmt::format("missing array '{}'", key));
  }
  return j.at(key);
}

json ToJson(const ConvObservation& o) {
  return {{"rank", o.rank}, {"d_eff", o.d_eff}, {"t_steps", o.t_steps}};
}

ConvObservation ConvFromJson(const json& j) {
  return {Get<int>(j, "rank"), Get<std::int64_t>(j, "d_eff"),
          Get<double>(j, "t_steps")};
}

json ToJson(const Candidate& c) {
  json j = {{"r_ve", c.ranks.r_ve},
            {"r_llm", c.ranks.r_llm},
            {"fallback_used", c.fallback_used},
            {"clamped", c.clamped},
            {"predicted_t_ve", c.predicted_t_ve},
            {"predicted_t_llm", c.predicted_t_llm},
            {"predicted_loss", c.predicted_loss}};
  j["r_ve_continuous"] =
      c.r_ve_continuous ? json(*c.r_ve_continuous) : json(nullptr);
  return j;
}

}  // namespace

void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open {} for writing", tmp.string()));
    out << contents;
    out.flush();
    if (!out) throw IoError(fmt::format("write to {} failed", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError(fmt::format("cannot rename onto {}", path.string()));
  }
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string Dump(const json& j) { return j.dump(2) + "\n"; }

json ToJson(const LawPCoefficients& c) {
  return {{"A", c.A}, {"alpha_m", c.alpha_m}, {"alpha_l", c.alpha_l},
          {"beta", c.beta}, {"E", c.E}};
}

json ToJson(const LawCCoefficients& c) {
  return {{"k", c.k}, {"gamma", c.gamma}, {"delta", c.delta}, {"E", c.E}};
}

LawPCoefficients LawPFromJson(const json& j) {
  LawPCoefficients c{Get<double>(j, "A"), Get<double>(j, "alpha_m"),
                     Get<double>(j, "alpha_l"), Get<double>(j, "beta"),
                     Get<double>(j, "E")};
  Validate(c);
  return c;
}

LawCCoefficients LawCFromJson(const json& j, Module module) {
  LawCCoefficients c{module, Get<double>(j, "k"), Get<double>(j, "gamma"),
                     Get<double>(j, "delta"), Get<double>(j, "E")};
  Validate(c);
  return c;
}

json ToJson(const CoefficientsFile& file) {
  const auto& m = file.fit_meta;
  return {{"law_p", ToJson(file.law_p)},
          {"law_c_ve", ToJson(file.law_c_ve)},
          {"law_c_llm", ToJson(file.law_c_llm)},
          {"fit_meta",
           {{"huber_delta", m.huber_delta},
            {"starts",
             {{"law_p", m.starts_law_p},
              {"law_c_ve", m.starts_law_c_ve},
              {"law_c_llm", m.starts_law_c_llm}}},
            {"objective_values",
             {{"law_p", m.objective_law_p},
              {"law_c_ve", m.objective_law_c_ve},
              {"law_c_llm", m.objective_law_c_llm}}}}}};
}

CoefficientsFile CoefficientsFromJson(const json& j) {
  CoefficientsFile file;
  file.law_p = LawPFromJson(Get<json>(j, "law_p"));
  file.law_c_ve = LawCFromJson(Get<json>(j, "law_c_ve"), Module::kVisionEncoder);
  file.law_c_llm = LawCFromJson(Get<json>(j, "law_c_llm"), Module::kLlm);
  if (j.contains("fit_meta")) {
    const auto meta = Get<json>(j, "fit_meta");
    auto& m = file.fit_meta;
    m.huber_delta = Get<double>(meta, "huber_delta");
    const auto starts = Get<json>(meta, "starts");
    m.starts_law_p = Get<int>(starts, "law_p");
    m.starts_law_c_ve = Get<int>(starts, "law_c_ve");
    m.starts_law_c_llm = Get<int>(starts, "law_c_llm");
    const auto objectives = Get<json>(meta, "objective_values");
    m.objective_law_p = Get<double>(objectives, "law_p");
    m.objective_law_c_ve = Get<double>(objectives, "law_c_ve");
    m.objective_law_c_llm = Get<double>(objectives, "law_c_llm");
  }
  return file;
}

json ToJson(const CalibrationDataset& dataset) {
  json perf = json::array();
  for (const auto& o : dataset.perf_obs) {
    perf.push_back({{"r_ve", o.ranks.r_ve},
                    {"r_llm", o.ranks.r_llm},
                    {"d_eff", o.d_eff},
                    {"perplexity", o.perplexity}});
  }
  json ve = json::array();
  for (const auto& o : dataset.conv_obs_ve) ve.push_back(ToJson(o));
  json llm = json::array();
  for (const auto& o : dataset.conv_obs_llm) llm.push_back(ToJson(o));
  const auto& d = dataset.diagnostics;
  return {{"perf_obs", perf},
          {"conv_obs_ve", ve},
          {"conv_obs_llm", llm},
          {"provenance", dataset.provenance},
          {"diagnostics",
           {{"censored_ve", d.censored_ve},
            {"censored_llm", d.censored_llm},
            {"skipped_checkpoints", d.skipped_checkpoints}}}};
}

CalibrationDataset CalibrationDatasetFromJson(const json& j) {
  CalibrationDataset out;
  for (const auto& o : Array(j, "perf_obs")) {
    out.perf_obs.push_back({{Get<int>(o, "r_ve"), Get<int>(o, "r_llm")},
                            Get<std::int64_t>(o, "d_eff"),
                            Get<double>(o, "perplexity")});
  }
  for (const auto& o : Array(j, "conv_obs_ve")) out.conv_obs_ve.push_back(ConvFromJson(o));
  for (const auto& o : Array(j, "conv_obs_llm")) out.conv_obs_llm.push_back(ConvFromJson(o));
  if (j.contains("provenance")) {
    out.provenance = Get<std::vector<std::string>>(j, "provenance");
  }
  if (j.contains("diagnostics")) {
    const auto d = Get<json>(j, "diagnostics");
    out.diagnostics = {Get<int>(d, "censored_ve"), Get<int>(d, "censored_llm"),
                       Get<int>(d, "skipped_checkpoints")};
  }
  return out;
}

json ToJson(const CostReport& cost) {
  return {{"naive_runs", cost.naive_runs},
          {"naive_steps", cost.naive_steps},
          {"mars_calibration_steps", cost.mars_calibration_steps},
          {"mars_final_steps", cost.mars_final_steps},
          {"speedup", cost.speedup},
          {"shared_backbone_mode", cost.shared_backbone_mode},
          {"parallel_heads", cost.parallel_heads}};
}

json ToJson(const SearchResult& result, const std::optional<CostReport>& cost) {
  json candidates = json::array();
  for (const auto& c : result.candidates) candidates.push_back(ToJson(c));
  json j = {{"candidates", candidates},
            {"chosen", {{"r_ve", result.chosen.r_ve}, {"r_llm", result.chosen.r_llm}}},
            {"chosen_predicted_loss", result.chosen_predicted_loss},
            {"fallback_rate", result.fallback_rate},
            {"d_target", result.d_target}};
  if (cost) j["cost"] = ToJson(*cost);
  return j;
}

SearchResult SearchResultFromJson(const json& j) {
  SearchResult out;
  for (const auto& c : Array(j, "candidates")) {
    Candidate cand;
    cand.ranks = {Get<int>(c, "r_ve"), Get<int>(c, "r_llm")};
    if (c.contains("r_ve_continuous") && !c.at("r_ve_continuous").is_null()) {
      cand.r_ve_continuous = Get<double>(c, "r_ve_continuous");
    }
    cand.fallback_used = Get<bool>(c, "fallback_used");
    cand.clamped = Get<bool>(c, "clamped");
    cand.predicted_t_ve = Get<double>(c, "predicted_t_ve");
    cand.predicted_t_llm = Get<double>(c, "predicted_t_llm");
    cand.predicted_loss = Get<double>(c, "predicted_loss");
    out.candidates.push_back(cand);
  }
  const auto chosen = Get<json>(j, "chosen");
  out.chosen = {Get<int>(chosen, "r_ve"), Get<int>(chosen, "r_llm")};
  out.chosen_predicted_loss = Get<double>(j, "chosen_predicted_loss");
  out.fallback_rate = Get<double>(j, "fallback_rate");
  out.d_target = Get<std::int64_t>(j, "d_target");
  return out;
}

std::string FormatExact(double value) { return fmt::format("{:.17g}", value); }

std::string OracleCsv(std::span<const OracleRow> rows) {
  std::string out = "r_ve,r_llm,true_perplexity,t_ve,t_llm\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.ranks.r_ve, r.ranks.r_llm,
                       FormatExact(r.true_perplexity), FormatExact(r.t_ve),
                       FormatExact(r.t_llm));
  }
  return out;
}

std::vector<OracleRow> ParseOracleCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<OracleRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "r_ve,r_llm,true_perplexity,t_ve,t_llm") {
        throw ParseError("unexpected oracle header", line_no);
      }
      continue;
    }
    OracleRow row;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    std::istringstream fields(line);
    fields >> row.ranks.r_ve >> c1 >> row.ranks.r_llm >> c2 >>
        row.true_perplexity >> c3 >> row.t_ve >> c4 >> row.t_llm;
    if (!fields || c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',') {
      throw ParseError("malformed oracle row", line_no);
    }
    rows.push_back(row);
  }
  return rows;
}

json GroundTruthJson(std::span<const SimRunOutput> runs) {
  json pairs = json::array();
  for (const auto& r : runs) {
    pairs.push_back({{"run_id", r.run.run_id},
                     {"r_ve", r.run.ranks.r_ve},
                     {"r_llm", r.run.ranks.r_llm},
                     {"dataset_size", r.run.dataset_size},
                     {"true_final_perplexity", r.true_final_perplexity},
                     {"true_t_ve", r.true_t_ve},
                     {"true_t_llm", r.true_t_llm},
                     {"realized_t_ve", r.realized_t_ve},
                     {"realized_t_llm", r.realized_t_llm},
                     {"steps_run", r.steps_run}});
  }
  return {{"pairs", pairs}};
}

}  // namespace mars
