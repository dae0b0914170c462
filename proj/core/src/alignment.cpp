#include "wcl/alignment.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "wcl/error.hpp"
#include "wcl/utf8.hpp"

namespace wcl {

namespace {

std::size_t parse_index(std::string_view text, std::size_t line_no, std::string_view token) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(line_no, "malformed alignment token '" + std::string(token) + "'");
  }
  return value;
}

WordRange parse_range(std::string_view text, std::size_t line_no, std::string_view token) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    std::size_t i = parse_index(text, line_no, token);
    return {i, i + 1};
  }
  WordRange r{parse_index(text.substr(0, colon), line_no, token),
              parse_index(text.substr(colon + 1), line_no, token)};
  if (r.empty()) throw ParseError(line_no, "empty range in '" + std::string(token) + "'");
  return r;
}

template <typename Parse>
auto read_lines(std::istream& in, Parse parse) {
  std::vector<decltype(parse(std::string_view{}, std::size_t{}))> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    out.push_back(parse(line, line_no));
  }
  return out;
}

}  // namespace

std::vector<WordPair> to_word_pairs(const Links& links) {
  std::vector<WordPair> out;
  out.reserve(links.size());
  for (const auto& l : links) out.push_back({{l.src, l.src + 1}, {l.tgt, l.tgt + 1}});
  return out;
}

std::string format_pharaoh(const Links& links) {
  std::ostringstream os;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (i) os << ' ';
    os << links[i].src << '-' << links[i].tgt;
  }
  return os.str();
}

Links parse_pharaoh_line(std::string_view line, std::size_t line_no) {
  Links links;
  for (const auto& token : split_words(line)) {
    auto dash = token.find('-');
    if (dash == std::string::npos) {
      throw ParseError(line_no, "malformed alignment token '" + token + "'");
    }
    std::string_view tv(token);
    links.push_back({parse_index(tv.substr(0, dash), line_no, token),
                     parse_index(tv.substr(dash + 1), line_no, token)});
  }
  return links;
}

void write_pharaoh(std::ostream& out, const std::vector<Links>& sentences) {
  for (const auto& links : sentences) out << format_pharaoh(links) << '\n';
}

std::vector<Links> read_pharaoh(std::istream& in) {
  return read_lines(in, parse_pharaoh_line);
}

std::string format_word_pairs(const std::vector<WordPair>& pairs) {
  std::ostringstream os;
  auto put = [&os](const WordRange& r) {
    if (r.size() == 1) {
      os << r.begin;
    } else {
      os << r.begin << ':' << r.end;
    }
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) os << ' ';
    put(pairs[i].src);
    os << '-';
    put(pairs[i].tgt);
  }
  return os.str();
}

std::vector<WordPair> parse_word_pairs_line(std::string_view line, std::size_t line_no) {
  std::vector<WordPair> pairs;
  for (const auto& token : split_words(line)) {
    auto dash = token.find('-');
    if (dash == std::string::npos) {
      throw ParseError(line_no, "malformed alignment token '" + token + "'");
    }
    std::string_view tv(token);
    pairs.push_back({parse_range(tv.substr(0, dash), line_no, token),
                     parse_range(tv.substr(dash + 1), line_no, token)});
  }
  return pairs;
}

void write_word_pairs(std::ostream& out, const std::vector<std::vector<WordPair>>& sentences) {
  for (const auto& pairs : sentences) out << format_word_pairs(pairs) << '\n';
}

std::vector<std::vector<WordPair>> read_word_pairs(std::istream& in) {
  return read_lines(in, parse_word_pairs_line);
}

}  // namespace wcl
