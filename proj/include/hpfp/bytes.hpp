#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hpfp/types.hpp"

namespace hpfp {

class EscapeError : public std::runtime_error {
public:
    EscapeError(std::size_t offset, const std::string& what)
        : std::runtime_error(what), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Text form used by signature files, profiles and JSON records:
// \xNN, \n, \r, \t, \\ and \| are recognised; everything else is literal.
Bytes unescape(std::string_view text);
// Inverse of unescape. Leading and trailing spaces are written as \x20 so the
// result survives field trimming.
std::string escape(std::string_view bytes);

// Splits on '|' that is not preceded by an escaping backslash. Fields keep
// their escapes and are trimmed of blanks.
std::vector<std::string> split_fields(std::string_view line);

std::string_view trim(std::string_view s);
std::string_view trim_trailing_newlines(std::string_view s);

Bytes from_hex(std::string_view hex);
std::string to_hex(std::string_view bytes);

// Splits on '\n', dropping one trailing '\r' per line. A trailing newline does
// not produce an empty last element.
std::vector<std::string_view> split_lines(std::string_view s);

std::string to_lower(std::string_view s);
bool icontains(std::string_view haystack, std::string_view needle);

}  // namespace hpfp
