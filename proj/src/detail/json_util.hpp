#pragma once

#include <cstdint>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emu/common.hpp"

namespace emu::detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Parses `text`, rejecting duplicate keys inside any object.
json parse_strict(std::string_view text, std::string_view what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// Throws ParseError naming the first key of `obj` not in `allowed`.
void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where);

const json& require(const json& obj, std::string_view key, std::string_view where);
const json& require_object(const json& obj, std::string_view key, std::string_view where);
const json& require_array(const json& obj, std::string_view key, std::string_view where);
std::string require_string(const json& obj, std::string_view key, std::string_view where);
std::uint64_t require_uint(const json& obj, std::string_view key, std::string_view where);
std::int64_t require_int(const json& obj, std::string_view key, std::string_view where);
bool require_bool(const json& obj, std::string_view key, std::string_view where);
double require_number(const json& obj, std::string_view key, std::string_view where);

std::uint64_t as_uint(const json& v, std::string_view where);
std::string as_string(const json& v, std::string_view where);
std::vector<std::string> as_string_list(const json& v, std::string_view where);

/// Two-space indented output where arrays of scalars stay on one line.
std::string pretty(const ordered_json& doc);

}  // namespace emu::detail
