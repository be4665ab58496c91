#include <cmath>
#include <cstdio>
#include <string>

#include "entroscope/scenario.hpp"

namespace entroscope {

namespace {

using ojson = nlohmann::ordered_json;

void write_value(std::string& out, const ojson& j, int depth);

void write_indent(std::string& out, int depth) { out.append(static_cast<size_t>(depth) * 2, ' '); }

void write_float(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";  // JSON has no NaN/inf; non-convergence is also flagged in-band
    return;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

bool primitive(const ojson& j) { return !j.is_object() && !j.is_array(); }

void write_array(std::string& out, const ojson& j, int depth) {
  if (j.empty()) {
    out += "[]";
    return;
  }
  bool flat = true;
  for (const auto& e : j)
    if (!primitive(e)) {
      flat = false;
      break;
    }
  if (flat) {
    out += "[";
    for (size_t i = 0; i < j.size(); ++i) {
      if (i) out += ", ";
      write_value(out, j[i], depth);
    }
    out += "]";
    return;
  }
  out += "[\n";
  for (size_t i = 0; i < j.size(); ++i) {
    write_indent(out, depth + 1);
    write_value(out, j[i], depth + 1);
    if (i + 1 < j.size()) out += ",";
    out += "\n";
  }
  write_indent(out, depth);
  out += "]";
}

void write_value(std::string& out, const ojson& j, int depth) {
  switch (j.type()) {
    case ojson::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        write_indent(out, depth + 1);
        out += ojson(it.key()).dump();  // reuse the library's string escaping
        out += ": ";
        write_value(out, it.value(), depth + 1);
        if (i + 1 < j.size()) out += ",";
        out += "\n";
      }
      write_indent(out, depth);
      out += "}";
      return;
    }
    case ojson::value_t::array:
      write_array(out, j, depth);
      return;
    case ojson::value_t::string:
      out += j.dump();
      return;
    case ojson::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      return;
    case ojson::value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      return;
    case ojson::value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      return;
    case ojson::value_t::number_float:
      write_float(out, j.get<double>());
      return;
    default:
      out += "null";
      return;
  }
}

}  // namespace

std::string dump_report(const nlohmann::ordered_json& j) {
  std::string out;
  write_value(out, j, 0);
  out += "\n";
  return out;
}

}  // namespace entroscope
