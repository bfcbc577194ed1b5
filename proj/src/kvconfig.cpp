#include "cvpose/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "cvpose/errors.hpp"

namespace cvpose {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const KeyValue& kv, const char* expected) {
  throw SchemaError("key '" + kv.key + "': expected " + expected + ", got '" + kv.value + "'", kv.line);
}

template <typename T>
T parse_number(const KeyValue& kv, const char* expected) {
  T v{};
  const char* first = kv.value.data();
  const char* last = first + kv.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) bad_value(kv, expected);
  return v;
}

}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw SchemaError("expected 'key = value'", line);
    KeyValue kv{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (kv.key.empty()) throw SchemaError("empty key", line);
    if (!seen.insert(kv.key).second) throw SchemaError("key '" + kv.key + "' given twice", line);
    out.push_back(std::move(kv));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int kv_int(const KeyValue& kv) { return parse_number<int>(kv, "an integer"); }
std::uint64_t kv_uint(const KeyValue& kv) { return parse_number<std::uint64_t>(kv, "a non-negative integer"); }
double kv_double(const KeyValue& kv) { return parse_number<double>(kv, "a number"); }

bool kv_bool(const KeyValue& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  bad_value(kv, "true or false");
}

std::vector<double> kv_doubles(const KeyValue& kv) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(kv.value);
  while (in >> item) {
    if (!item.empty() && item.back() == ',') item.pop_back();
    if (item.empty()) continue;
    out.push_back(parse_number<double>(KeyValue{kv.key, item, kv.line}, "a list of numbers"));
  }
  return out;
}

void kv_unknown(const KeyValue& kv) { throw SchemaError("unknown key '" + kv.key + "'", kv.line); }

}  // namespace cvpose
