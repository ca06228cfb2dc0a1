/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The echotrace Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Shared JSON helpers for the library sources. Not installed.

#ifndef ECHOTRACE_SRC_JSON_IO_HPP
#define ECHOTRACE_SRC_JSON_IO_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "echotrace/anatomy.hpp"

namespace echotrace::detail {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline json tissue_to_json(const TissueProperties& t) {
  return {{"name", t.name}, {"z", t.z},           {"alpha_db_cm_mhz", t.alpha}, {"c_m_s", t.c},     {"mu0", t.mu0},
          {"sigma0", t.sigma0}, {"mu1", t.mu1}, {"tau", t.tau},              {"gamma", t.gamma}};
}

/// Required keys: z, alpha_db_cm_mhz, c_m_s, mu0, sigma0, mu1. Throws naming `where` on failure.
inline TissueProperties tissue_from_json(const json& v, const std::string& where) {
  TissueProperties t;
  try {
    t.name = v.value("name", where);
    t.z = v.at("z").get<double>();
    t.alpha = v.at("alpha_db_cm_mhz").get<double>();
    t.c = v.at("c_m_s").get<double>();
    t.mu0 = v.at("mu0").get<double>();
    t.sigma0 = v.at("sigma0").get<double>();
    t.mu1 = v.at("mu1").get<double>();
    t.tau = v.value("tau", 1.0);
    t.gamma = v.value("gamma", 0.0);
  } catch (const json::exception& e) {
    throw std::invalid_argument("tissue " + where + ": " + e.what());
  }
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("tissue " + where + ": " + e.what());
  }
  return t;
}

}  // namespace echotrace::detail

#endif /* ECHOTRACE_SRC_JSON_IO_HPP */
