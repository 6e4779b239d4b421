#include "detail/json_util.hpp"

#include <fstream>
#include <sstream>

namespace emu::detail {

json parse_strict(std::string_view text, std::string_view what) {
  std::vector<std::set<std::string>> seen;
  auto callback = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        seen.emplace_back();
        break;
      case json::parse_event_t::object_end:
        seen.pop_back();
        break;
      case json::parse_event_t::key: {
        auto key = parsed.get<std::string>();
        if (!seen.back().insert(key).second) throw ParseError(std::string(what) + ": duplicate key " + key);
        break;
      }
      default:
        break;
    }
    return true;
  };
  try {
    return json::parse(text.begin(), text.end(), callback);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EngineError("cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (!known) throw ParseError(std::string(where) + ": unknown key " + item.key());
  }
}

const json& require(const json& obj, std::string_view key, std::string_view where) {
  if (!obj.is_object()) throw ParseError(std::string(where) + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string(where) + ": missing required key " + std::string(key));
  return *it;
}

namespace {

[[noreturn]] void type_mismatch(std::string_view where, std::string_view key, std::string_view expected) {
  throw ParseError(std::string(where) + ": key " + std::string(key) + " must be " + std::string(expected));
}

}  // namespace

const json& require_object(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_object()) type_mismatch(where, key, "an object");
  return v;
}

const json& require_array(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_array()) type_mismatch(where, key, "an array");
  return v;
}

std::string require_string(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) type_mismatch(where, key, "a string");
  return v.get<std::string>();
}

std::uint64_t require_uint(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_unsigned()) type_mismatch(where, key, "a non-negative integer");
  return v.get<std::uint64_t>();
}

std::int64_t require_int(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) type_mismatch(where, key, "an integer");
  return v.get<std::int64_t>();
}

bool require_bool(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_boolean()) type_mismatch(where, key, "a boolean");
  return v.get<bool>();
}

double require_number(const json& obj, std::string_view key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) type_mismatch(where, key, "a number");
  return v.get<double>();
}

std::uint64_t as_uint(const json& v, std::string_view where) {
  if (!v.is_number_unsigned()) throw ParseError(std::string(where) + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, std::string_view where) {
  if (!v.is_string()) throw ParseError(std::string(where) + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::string> as_string_list(const json& v, std::string_view where) {
  if (!v.is_array()) throw ParseError(std::string(where) + ": expected an array of strings");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_string(e, where));
  return out;
}

namespace {

bool is_scalar_array(const ordered_json& v) {
  for (const auto& e : v)
    if (e.is_structured()) return false;
  return true;
}

void pretty_into(const ordered_json& v, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(depth + 1) * 2, ' ');
  if (v.is_object()) {
    if (v.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (const auto& item : v.items()) {
      if (!first) out += ",\n";
      first = false;
      out += inner;
      out += ordered_json(item.key()).dump();
      out += ": ";
      pretty_into(item.value(), depth + 1, out);
    }
    out += "\n" + pad + "}";
  } else if (v.is_array()) {
    if (v.empty()) {
      out += "[]";
      return;
    }
    if (is_scalar_array(v)) {
      out += "[";
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += ", ";
        first = false;
        out += e.dump();
      }
      out += "]";
      return;
    }
    out += "[\n";
    bool first = true;
    for (const auto& e : v) {
      if (!first) out += ",\n";
      first = false;
      out += inner;
      pretty_into(e, depth + 1, out);
    }
    out += "\n" + pad + "]";
  } else {
    out += v.dump();
  }
}

}  // namespace

std::string pretty(const ordered_json& doc) {
  std::string out;
  pretty_into(doc, 0, out);
  out += "\n";
  return out;
}

}  // namespace emu::detail
