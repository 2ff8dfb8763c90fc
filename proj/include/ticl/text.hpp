#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ticl::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Trimmed, lowercased copy. Canonical form for labels and answers.
std::string normalize(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of non-overlapping occurrences of `needle` in `haystack`.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

}  // namespace ticl::text
