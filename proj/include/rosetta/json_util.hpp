// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rosetta/error.hpp"

namespace rosetta::json_util {

using nlohmann::json;

// Parses a whole file. Missing file -> MissingFile, malformed -> SchemaViolation.
json read_file(const std::filesystem::path& path);

// Writes `doc` pretty-printed with a trailing newline.
void write_file(const std::filesystem::path& path, const json& doc);
void write_text(const std::filesystem::path& path, std::string_view text);

const json& require(const json& obj, std::string_view key, std::string_view context);

std::string require_string(const json& obj, std::string_view key, std::string_view context);
std::int64_t require_int(const json& obj, std::string_view key, std::string_view context);
double require_number(const json& obj, std::string_view key, std::string_view context);
const json& require_array(const json& obj, std::string_view key, std::string_view context);
const json& require_object(const json& obj, std::string_view key, std::string_view context);

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view context);

// Decimal with 17 significant digits; round-trips every finite double.
std::string format_double(double value);

}  // namespace rosetta::json_util
