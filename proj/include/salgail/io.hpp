#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace salgail {

inline constexpr std::string_view kToolName = "salgail";
inline constexpr std::string_view kToolVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view bytes);

/// {"tool","version","config_hash"}; the hash covers the canonical dump of
/// `config` so identical runs produce identical headers.
nlohmann::json make_provenance(const nlohmann::json& config);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or -1.
  int column(std::string_view name) const;
  int require_column(std::string_view name) const;
};

/// Lines starting with '#' are comments (provenance headers).
CsvTable read_csv(const std::filesystem::path& path);

/// Writes an optional "# {json}" provenance line, then header and rows.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows,
               const nlohmann::json& provenance = nullptr);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);
double parse_number(const std::string& s);
long parse_integer(const std::string& s);

}  // namespace salgail
