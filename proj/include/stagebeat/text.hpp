#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stagebeat::text {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Position of the first case-insensitive whole-word occurrence of `phrase`
/// in `haystack`.
inline std::optional<std::size_t> find_whole_word(std::string_view haystack,
                                                  std::string_view phrase) {
  if (phrase.empty()) return std::nullopt;
  const std::string h = lower(haystack);
  const std::string p = lower(phrase);
  for (std::size_t pos = h.find(p); pos != std::string::npos; pos = h.find(p, pos + 1)) {
    bool left_ok = pos == 0 || !is_word_char(h[pos - 1]);
    std::size_t end = pos + p.size();
    bool right_ok = end == h.size() || !is_word_char(h[end]);
    if (left_ok && right_ok) return pos;
  }
  return std::nullopt;
}

inline bool contains_whole_word(std::string_view haystack, std::string_view phrase) {
  return find_whole_word(haystack, phrase).has_value();
}

/// Lowercased lexical words: runs of letters, digits and inner apostrophes.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    std::size_t lead = 0;
    while (lead < cur.size() && cur[lead] == '\'') ++lead;
    if (lead < cur.size()) out.push_back(cur.substr(lead));
    cur.clear();
  };
  for (char c : s) {
    if (is_word_char(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

/// Whitespace-delimited token count, the unit of the prompt-size estimate.
inline std::size_t whitespace_word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

/// Client-side token estimate: ceil(words * 1.3).
inline std::size_t tokens_for_words(std::size_t word_count) { return (word_count * 13 + 9) / 10; }

inline std::size_t estimate_tokens(std::string_view s) {
  return tokens_for_words(whitespace_word_count(s));
}

/// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Jaccard similarity of word n-gram sets (bigrams; unigrams for one-word
/// lines).
inline double ngram_similarity(std::string_view a, std::string_view b) {
  auto grams = [](const std::vector<std::string>& w, std::size_t n) {
    std::set<std::string> g;
    if (w.size() < n) return g;
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      std::string k = w[i];
      for (std::size_t j = 1; j < n; ++j) k += ' ' + w[i + j];
      g.insert(std::move(k));
    }
    return g;
  };
  auto wa = words(a), wb = words(b);
  if (wa.empty() && wb.empty()) return 1.0;
  std::size_t n = (wa.size() < 2 || wb.size() < 2) ? 1 : 2;
  auto ga = grams(wa, n), gb = grams(wb, n);
  if (ga.empty() || gb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& g : ga) inter += gb.count(g);
  std::size_t uni = ga.size() + gb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::string line;
  std::istringstream in{std::string(s)};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  if (from.empty()) return;
  for (std::size_t pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace stagebeat::text
