#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cvpose {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// `key = value` lines; blank lines and text after '#' are ignored.
/// Throws SchemaError on a line without '=' or a repeated key.
std::vector<KeyValue> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Value conversions; SchemaError names the key and line on failure.
int kv_int(const KeyValue& kv);
std::uint64_t kv_uint(const KeyValue& kv);
double kv_double(const KeyValue& kv);
bool kv_bool(const KeyValue& kv);
std::vector<double> kv_doubles(const KeyValue& kv);

[[noreturn]] void kv_unknown(const KeyValue& kv);

}  // namespace cvpose
