#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include "wcl/corpus.hpp"
#include "wcl/error.hpp"
#include "wcl/utf8.hpp"

namespace wcl {

namespace {

constexpr std::string_view kSpecialPieces[] = {"<pad>", "<s>", "</s>", "<unk>"};

bool looks_like_tag(std::string_view piece) {
  return piece.size() > 3 && piece.substr(0, 2) == "<2" && piece.back() == '>';
}

std::vector<std::string> initial_symbols(std::string_view word) {
  auto symbols = utf8_chars(word);
  symbols.emplace_back(kEndOfWord);
  return symbols;
}

// Merges every left-to-right occurrence of (a, b) in place.
void apply_merge(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      out.push_back(a + b);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

}  // namespace

std::string language_tag_piece(std::string_view lang) { return "<2" + std::string(lang) + ">"; }

Vocabulary::Vocabulary(const std::vector<std::string>& languages) {
  for (auto sp : kSpecialPieces) pieces_.emplace_back(sp);
  num_special_ = pieces_.size();
  for (const auto& lang : languages) add_language(lang);
}

TokenId Vocabulary::add_language(const std::string& lang) {
  if (auto it = tags_.find(lang); it != tags_.end()) return it->second;
  if (pieces_.size() != num_special_) {
    throw ContractViolation("language tags must be added before learned subwords");
  }
  auto id = static_cast<TokenId>(pieces_.size());
  pieces_.push_back(language_tag_piece(lang));
  tags_.emplace(lang, id);
  languages_.push_back(lang);
  ++num_special_;
  return id;
}

TokenId Vocabulary::add_piece(const std::string& piece) {
  if (auto it = learned_.find(piece); it != learned_.end()) return it->second;
  auto id = static_cast<TokenId>(pieces_.size());
  pieces_.push_back(piece);
  learned_.emplace(piece, id);
  return id;
}

TokenId Vocabulary::piece_id(std::string_view piece) const {
  auto it = learned_.find(std::string(piece));
  return it == learned_.end() ? kUnk : it->second;
}

bool Vocabulary::contains_piece(std::string_view piece) const {
  return learned_.count(std::string(piece)) > 0;
}

const std::string& Vocabulary::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
    throw ContractViolation("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(pieces_.size()));
  }
  return pieces_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::lang_tag(std::string_view lang) const {
  auto it = tags_.find(std::string(lang));
  if (it == tags_.end()) throw ConfigError("unknown language '" + std::string(lang) + "'");
  return it->second;
}

void Vocabulary::set_merges(std::vector<std::pair<std::string, std::string>> merges) {
  merges_ = std::move(merges);
  merge_rank_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) merge_rank_.emplace(merges_[r], r);
  cache_.clear();
}

std::vector<TokenId> Vocabulary::encode_word(std::string_view word) const {
  std::string key(word);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  auto symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = merge_rank_.size();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find({symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank == merge_rank_.size()) break;
    const std::string a = symbols[best_pos];
    const std::string b = symbols[best_pos + 1];
    apply_merge(symbols, a, b);
  }

  std::vector<TokenId> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(piece_id(s));
  cache_.emplace(std::move(key), ids);
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  std::string current;
  for (TokenId id : ids) {
    if (is_special(id) && id != kUnk) continue;
    std::string p = id == kUnk ? std::string("<unk>") : piece(id);
    bool ends = p.size() >= kEndOfWord.size() &&
                std::string_view(p).substr(p.size() - kEndOfWord.size()) == kEndOfWord;
    if (ends) p.resize(p.size() - kEndOfWord.size());
    current += p;
    if (ends) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

void Vocabulary::write_tsv(std::ostream& out) const {
  for (std::size_t i = 0; i < pieces_.size(); ++i) out << pieces_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::read_tsv(std::istream& in) {
  Vocabulary v(std::vector<std::string>{});
  std::string line;
  std::size_t line_no = 0;
  bool in_specials = true;
  while (std::getline(in, line)) {
    ++line_no;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError(line_no, "expected 'subword<TAB>id'");
    std::string piece = line.substr(0, tab);
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad id '" + line.substr(tab + 1) + "'");
    }
    if (id != line_no - 1) throw ParseError(line_no, "ids must be dense and in order");
    if (id < std::size(kSpecialPieces)) {
      if (piece != kSpecialPieces[id]) throw ParseError(line_no, "unexpected special '" + piece + "'");
      continue;
    }
    if (in_specials && looks_like_tag(piece)) {
      v.add_language(piece.substr(2, piece.size() - 3));
      continue;
    }
    in_specials = false;
    v.add_piece(piece);
  }
  if (line_no < std::size(kSpecialPieces)) throw ParseError(line_no, "truncated vocabulary");
  return v;
}

void Vocabulary::write_merges(std::ostream& out) const {
  for (const auto& [a, b] : merges_) out << a << ' ' << b << '\n';
}

void Vocabulary::read_merges(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> merges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto parts = split_words(line);
    if (parts.size() != 2) throw ParseError(line_no, "expected two symbols per merge");
    merges.emplace_back(parts[0], parts[1]);
  }
  set_merges(std::move(merges));
}

Vocabulary train_bpe(const std::vector<std::string>& lines, std::size_t merges,
                     const std::vector<std::string>& languages) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : lines) {
    for (auto& w : split_words(line)) ++word_counts[w];
  }
  if (word_counts.empty()) throw ConfigError("cannot train BPE on an empty corpus");

  struct Entry {
    std::vector<std::string> symbols;
    std::size_t count;
  };
  std::vector<Entry> words;
  std::set<std::string> alphabet;
  for (const auto& [w, c] : word_counts) {
    auto symbols = initial_symbols(w);
    alphabet.insert(symbols.begin(), symbols.end());
    words.push_back({std::move(symbols), c});
  }

  std::vector<std::pair<std::string, std::string>> learned;
  for (std::size_t m = 0; m < merges; ++m) {
    std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
    for (const auto& e : words) {
      for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i) {
        pair_counts[{e.symbols[i], e.symbols[i + 1]}] += e.count;
      }
    }
    if (pair_counts.empty()) break;
    // std::map iterates pairs in lexicographic order, so strict > keeps the
    // smallest pair among equal counts.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [a, b] = best->first;
    for (auto& e : words) apply_merge(e.symbols, a, b);
    learned.emplace_back(a, b);
  }

  Vocabulary vocab(languages);
  for (const auto& s : alphabet) vocab.add_piece(s);
  for (const auto& [a, b] : learned) vocab.add_piece(a + b);
  vocab.set_merges(std::move(learned));
  return vocab;
}

}  // namespace wcl
