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

#ifndef MARS_IO_HPP_
#define MARS_IO_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mars/laws.hpp"
#include "mars/search.hpp"
#include "mars/simulator.hpp"
#include "mars/telemetry.hpp"

namespace mars {

// Writes to a sibling temporary file and renames it over `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& contents);
std::string ReadFile(const std::filesystem::path& path);

// JSON text of `j`. Doubles use the shortest representation that parses back
// to the same bits.
std::string Dump(const nlohmann::json& j);

nlohmann::json ToJson(const LawPCoefficients& c);
nlohmann::json ToJson(const LawCCoefficients& c);
LawPCoefficients LawPFromJson(const nlohmann::json& j);
LawCCoefficients LawCFromJson(const nlohmann::json& j, Module module);

struct FitMeta {
  double huber_delta = 0.0;
  int starts_law_p = 0;
  int starts_law_c_ve = 0;
  int starts_law_c_llm = 0;
  double objective_law_p = 0.0;
  double objective_law_c_ve = 0.0;
  double objective_law_c_llm = 0.0;
};

struct CoefficientsFile {
  LawPCoefficients law_p;
  LawCCoefficients law_c_ve{Module::kVisionEncoder};
  LawCCoefficients law_c_llm{Module::kLlm};
  FitMeta fit_meta;
};

nlohmann::json ToJson(const CoefficientsFile& file);
// Throws ValidationError on missing keys or violated sign constraints.
CoefficientsFile CoefficientsFromJson(const nlohmann::json& j);

nlohmann::json ToJson(const CalibrationDataset& dataset);
CalibrationDataset CalibrationDatasetFromJson(const nlohmann::json& j);

nlohmann::json ToJson(const SearchResult& result,
                      const std::optional<CostReport>& cost = std::nullopt);
SearchResult SearchResultFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const CostReport& cost);

// r_ve,r_llm,true_perplexity,t_ve,t_llm
std::string OracleCsv(std::span<const OracleRow> rows);
std::vector<OracleRow> ParseOracleCsv(const std::string& text);

// {pairs: [{r_ve, r_llm, dataset_size, true_final_perplexity, true_t_ve,
// true_t_llm, ...}]}
nlohmann::json GroundTruthJson(std::span<const SimRunOutput> runs);

// Formats a double with 17 significant digits.
std::string FormatExact(double value);

}  // namespace mars

#endif  // MARS_IO_HPP_
