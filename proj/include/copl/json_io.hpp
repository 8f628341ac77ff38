// Copyright 2026 The copl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COPL_JSON_IO_HPP_
#define COPL_JSON_IO_HPP_

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"

namespace copl {

using Json = nlohmann::ordered_json;

/// Serializes with every floating-point number printed to 17 significant
/// digits, so any double survives a write/read cycle exactly. Output is
/// pretty-printed with two-space indentation and a trailing newline.
std::string dump_json(const Json& value);

void write_json_file(const std::filesystem::path& path, const Json& value);
Json read_json_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

// Matrices travel as {"rows", "cols", "data"} with data in row-major order.
Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

}  // namespace copl

#endif  // COPL_JSON_IO_HPP_
