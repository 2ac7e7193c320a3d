// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/json_util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace rosetta::json_util {

namespace {

[[noreturn]] void schema_error(std::string_view context, std::string_view what) {
  throw Error(ErrorKind::SchemaViolation, fmt::format("{}: {}", context, what));
}

}  // namespace

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    schema_error(path.string(), e.what());
  }
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

void write_file(const std::filesystem::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

const json& require(const json& obj, std::string_view key, std::string_view context) {
  if (!obj.is_object()) schema_error(context, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(context, fmt::format("missing field '{}'", key));
  return *it;
}

std::string require_string(const json& obj, std::string_view key, std::string_view context) {
  const json& v = require(obj, key, context);
  if (!v.is_string()) schema_error(context, fmt::format("field '{}' must be a string", key));
  return v.get<std::string>();
}

std::int64_t require_int(const json& obj, std::string_view key, std::string_view context) {
  const json& v = require(obj, key, context);
  if (!v.is_number_integer())
    schema_error(context, fmt::format("field '{}' must be an integer", key));
  return v.get<std::int64_t>();
}

double require_number(const json& obj, std::string_view key, std::string_view context) {
  const json& v = require(obj, key, context);
  if (!v.is_number()) schema_error(context, fmt::format("field '{}' must be a number", key));
  return v.get<double>();
}

const json& require_array(const json& obj, std::string_view key, std::string_view context) {
  const json& v = require(obj, key, context);
  if (!v.is_array()) schema_error(context, fmt::format("field '{}' must be an array", key));
  return v;
}

const json& require_object(const json& obj, std::string_view key, std::string_view context) {
  const json& v = require(obj, key, context);
  if (!v.is_object()) schema_error(context, fmt::format("field '{}' must be an object", key));
  return v;
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view context) {
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      schema_error(context, fmt::format("unknown field '{}'", item.key()));
  }
}

std::string format_double(double value) { return fmt::format("{:.17g}", value); }

}  // namespace rosetta::json_util
