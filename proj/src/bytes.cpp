#include "hpfp/bytes.hpp"

#include <algorithm>
#include <cctype>

namespace hpfp {

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

constexpr char kHex[] = "0123456789abcdef";

}  // namespace

Bytes unescape(std::string_view text) {
    Bytes out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (i + 1 >= text.size()) throw EscapeError(i, "dangling backslash");
        char e = text[++i];
        switch (e) {
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            case 't': out.push_back('\t'); break;
            case '\\': out.push_back('\\'); break;
            case '|': out.push_back('|'); break;
            case 'x': {
                if (i + 2 >= text.size()) throw EscapeError(i - 1, "truncated \\x escape");
                int hi = hex_value(text[i + 1]);
                int lo = hex_value(text[i + 2]);
                if (hi < 0 || lo < 0) throw EscapeError(i - 1, "bad \\x escape");
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
                break;
            }
            default:
                // Regex escapes such as \. or \[ pass through untouched.
                if (std::ispunct(static_cast<unsigned char>(e))) {
                    out.push_back('\\');
                    out.push_back(e);
                    break;
                }
                throw EscapeError(i - 1, std::string("unknown escape \\") + e);
        }
    }
    return out;
}

std::string escape(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        auto u = static_cast<unsigned char>(bytes[i]);
        bool edge = i == 0 || i + 1 == bytes.size();
        switch (u) {
            case '\n': out += "\\n"; continue;
            case '\r': out += "\\r"; continue;
            case '\t': out += "\\t"; continue;
            case '\\': out += "\\\\"; continue;
            case '|': out += "\\|"; continue;
            default: break;
        }
        if (u < 0x20 || u > 0x7e || (u == ' ' && edge)) {
            out += "\\x";
            out.push_back(kHex[u >> 4]);
            out.push_back(kHex[u & 0xf]);
        } else {
            out.push_back(static_cast<char>(u));
        }
    }
    return out;
}

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '\\' && i + 1 < line.size()) {
            cur.push_back(c);
            cur.push_back(line[++i]);
        } else if (c == '|') {
            fields.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.emplace_back(trim(cur));
    return fields;
}

std::string_view trim(std::string_view s) {
    auto blank = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && blank(s.front())) s.remove_prefix(1);
    while (!s.empty() && blank(s.back())) s.remove_suffix(1);
    return s;
}

std::string_view trim_trailing_newlines(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

Bytes from_hex(std::string_view hex) {
    Bytes out;
    int pending = -1;
    for (char c : hex) {
        if (c == ' ' || c == ':') continue;
        int v = hex_value(c);
        if (v < 0) throw EscapeError(0, "bad hex digit");
        if (pending < 0) {
            pending = v;
        } else {
            out.push_back(static_cast<char>(pending * 16 + v));
            pending = -1;
        }
    }
    if (pending >= 0) throw EscapeError(hex.size(), "odd number of hex digits");
    return out;
}

std::string to_hex(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char u : bytes) {
        out.push_back(kHex[u >> 4]);
        out.push_back(kHex[u & 0xf]);
    }
    return out;
}

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < s.size()) {
        auto nl = s.find('\n', start);
        std::string_view line =
            nl == std::string_view::npos ? s.substr(start) : s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return lines;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool icontains(std::string_view haystack, std::string_view needle) {
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

}  // namespace hpfp
