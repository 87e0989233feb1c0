#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "debias/common.hpp"
#include "debias/csv.hpp"

namespace debias {

namespace detail {

// Decodes one UTF-8 code point starting at s[i]; advances i. Malformed bytes
// decode to themselves so no input is ever lost.
inline char32_t decode_utf8(std::string_view s, std::size_t& i) {
  auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0) {
    int c1 = cont(1);
    if (c1 >= 0) {
      i += 2;
      return (char32_t(b0 & 0x1F) << 6) | char32_t(c1);
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      i += 3;
      return (char32_t(b0 & 0x0F) << 12) | (char32_t(c1) << 6) | char32_t(c2);
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      i += 4;
      return (char32_t(b0 & 0x07) << 18) | (char32_t(c1) << 12) |
             (char32_t(c2) << 6) | char32_t(c3);
    }
  }
  i += 1;
  return 0xDC00 + b0;  // lone surrogate range: never produced by valid UTF-8
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp >= 0xDC80 && cp <= 0xDCFF) {  // round-trip a malformed byte
    out.push_back(static_cast<char>(cp - 0xDC00));
  } else if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_separator(char32_t c) {
  if (c < 0x80) {
    return !((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
             (c >= 'A' && c <= 'Z'));
  }
  switch (c) {
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xD7: case 0xF7:
    case 0xFEFF:
      return true;
    default:
      break;
  }
  if (c >= 0xA1 && c <= 0xBF) {
    // Latin-1 punctuation and symbols, minus the letter-like and numeric ones
    switch (c) {
      case 0xAA: case 0xB2: case 0xB3: case 0xB5: case 0xB9: case 0xBA:
      case 0xBC: case 0xBD: case 0xBE:
        return false;
      default:
        return true;
    }
  }
  if (c >= 0x2000 && c <= 0x206F) return true;  // spaces + general punctuation
  if (c >= 0x3001 && c <= 0x3003) return true;
  if (c >= 0x3008 && c <= 0x3011) return true;
  if (c >= 0xFF01 && c <= 0xFF0F) return true;
  return false;
}

inline char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c < 0x80) return c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c >= 0x100 && c <= 0x137 && c % 2 == 0 && c != 0x130) return c + 1;
  if (c >= 0x14A && c <= 0x177 && c % 2 == 0) return c + 1;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

}  // namespace detail

/// Lowercases and splits on whitespace and punctuation. Only word characters
/// survive, so punctuation-only tokens never appear in the output.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp = detail::decode_utf8(text, i);
    if (detail::is_separator(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      detail::encode_utf8(detail::to_lower(cp), current);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

class ClassSet {
 public:
  ClassSet() = default;
  explicit ClassSet(const std::vector<std::string>& names) {
    for (const auto& n : names) add(n);
  }

  ClassId add(const std::string& name) {
    if (name.empty()) throw ValidationError("class name must be non-empty");
    auto [it, inserted] =
        index_.emplace(name, static_cast<ClassId>(names_.size()));
    if (!inserted) throw ValidationError("duplicate class name '" + name + "'");
    names_.push_back(name);
    return it->second;
  }

  ClassId find_or_add(const std::string& name) {
    if (auto id = find(name)) return *id;
    return add(name);
  }

  std::optional<ClassId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  ClassId id(const std::string& name) const {
    auto found = find(name);
    if (!found) throw ValidationError("unknown class '" + name + "'");
    return *found;
  }

  const std::string& name(ClassId id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }

  bool operator==(const ClassSet& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, ClassId> index_;
};

struct Document {
  std::string id;
  std::string raw_text;
  std::vector<std::string> tokens;
  std::optional<ClassId> gold;

  static Document make(std::string id, std::string raw_text,
                       std::optional<ClassId> gold = std::nullopt) {
    Document d{std::move(id), std::move(raw_text), {}, gold};
    d.tokens = tokenize(d.raw_text);
    return d;
  }
};

// Immutable after construction.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Document> documents, ClassSet classes)
      : documents_(std::move(documents)), classes_(std::move(classes)) {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      const auto& d = documents_[i];
      if (!by_id_.emplace(d.id, i).second) {
        throw ValidationError("duplicate document id '" + d.id + "'");
      }
      if (d.gold && (*d.gold < 0 || *d.gold >= ClassId(classes_.size()))) {
        throw ValidationError("document '" + d.id + "' has out-of-range label");
      }
      std::set<std::string_view> seen(d.tokens.begin(), d.tokens.end());
      for (auto t : seen) ++vocabulary_[std::string(t)];
    }
  }

  const std::vector<Document>& documents() const { return documents_; }
  const Document& operator[](std::size_t i) const { return documents_[i]; }
  std::size_t size() const { return documents_.size(); }
  const ClassSet& classes() const { return classes_; }

  // token -> number of documents containing it
  const std::unordered_map<std::string, std::size_t>& vocabulary() const {
    return vocabulary_;
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const std::string& id) const {
    auto i = find(id);
    if (!i) throw ValidationError("unknown document id '" + id + "'");
    return *i;
  }

  bool fully_labeled() const {
    for (const auto& d : documents_)
      if (!d.gold) return false;
    return true;
  }

 private:
  std::vector<Document> documents_;
  ClassSet classes_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> vocabulary_;
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat format_from_path(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".csv")) return CorpusFormat::csv;
  return CorpusFormat::jsonl;
}

inline CorpusFormat parse_format(const std::string& s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "csv") return CorpusFormat::csv;
  throw ValidationError("unknown corpus format '" + s + "' (expected jsonl|csv)");
}

struct LoadOptions {
  // When set, gold labels are resolved against these classes.
  std::optional<ClassSet> classes;
  // Whether labels outside `classes` extend the set or are rejected.
  bool allow_new_classes = true;
};

namespace detail {

inline std::optional<ClassId> resolve_label(const std::string& label,
                                            ClassSet& classes,
                                            bool allow_new,
                                            std::size_t line) {
  if (label.empty()) return std::nullopt;
  if (auto id = classes.find(label)) return id;
  if (!allow_new) {
    throw ValidationError("line " + std::to_string(line) + ": unknown class '" +
                          label + "'");
  }
  return classes.add(label);
}

inline std::string json_scalar_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  throw std::invalid_argument("expected a string");
}

}  // namespace detail

inline Corpus load_corpus_jsonl(std::istream& in, LoadOptions opts = {}) {
  ClassSet classes = opts.classes.value_or(ClassSet{});
  const bool allow_new = !opts.classes || opts.allow_new_classes;
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("line " + std::to_string(lineno) +
                            ": invalid JSON: " + e.what());
    }
    if (!rec.is_object()) {
      throw ValidationError("line " + std::to_string(lineno) +
                            ": record is not a JSON object");
    }
    auto field = [&](const char* key, bool required) -> std::optional<std::string> {
      auto it = rec.find(key);
      if (it == rec.end() || it->is_null()) {
        if (required) {
          throw ValidationError("line " + std::to_string(lineno) +
                                ": record missing \"" + key + "\" field");
        }
        return std::nullopt;
      }
      try {
        return detail::json_scalar_string(*it);
      } catch (const std::invalid_argument&) {
        throw ValidationError("line " + std::to_string(lineno) + ": field \"" +
                              key + "\" must be a string");
      }
    };
    std::string id = *field("id", true);
    std::string text = *field("text", true);
    std::string label = field("label", false).value_or("");
    if (auto [it, ok] = seen.emplace(id, lineno); !ok) {
      throw ValidationError("duplicate document id '" + id + "' (lines " +
                            std::to_string(it->second) + " and " +
                            std::to_string(lineno) + ")");
    }
    auto gold = detail::resolve_label(label, classes, allow_new, lineno);
    docs.push_back(Document::make(std::move(id), std::move(text), gold));
  }
  return Corpus(std::move(docs), std::move(classes));
}

inline Corpus load_corpus_csv(std::istream& in, LoadOptions opts = {}) {
  ClassSet classes = opts.classes.value_or(ClassSet{});
  const bool allow_new = !opts.classes || opts.allow_new_classes;
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) throw ValidationError("csv: empty file, expected header id,text,label");
  int id_col = -1, text_col = -1, label_col = -1;
  for (std::size_t c = 0; c < header->size(); ++c) {
    std::string name = (*header)[c];
    if (c == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name = name.substr(3);
    if (name == "id") id_col = int(c);
    else if (name == "text") text_col = int(c);
    else if (name == "label") label_col = int(c);
  }
  if (id_col < 0 || text_col < 0) {
    throw ValidationError("csv: header must contain id and text columns");
  }
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> seen;
  while (auto row = reader.next()) {
    const std::size_t lineno = reader.line();
    if (row->size() == 1 && (*row)[0].empty()) continue;
    auto cell = [&](int col, const char* what) -> std::string {
      if (col < 0) return {};
      if (std::size_t(col) >= row->size()) {
        throw ValidationError("line " + std::to_string(lineno) +
                              ": record missing \"" + what + "\" field");
      }
      return (*row)[col];
    };
    std::string id = cell(id_col, "id");
    std::string text = cell(text_col, "text");
    std::string label = cell(label_col, "label");
    if (auto [it, ok] = seen.emplace(id, lineno); !ok) {
      throw ValidationError("duplicate document id '" + id + "' (lines " +
                            std::to_string(it->second) + " and " +
                            std::to_string(lineno) + ")");
    }
    auto gold = detail::resolve_label(label, classes, allow_new, lineno);
    docs.push_back(Document::make(std::move(id), std::move(text), gold));
  }
  return Corpus(std::move(docs), std::move(classes));
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format,
                          LoadOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus file '" + path + "'");
  try {
    return format == CorpusFormat::csv ? load_corpus_csv(in, std::move(opts))
                                       : load_corpus_jsonl(in, std::move(opts));
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void save_corpus(const Corpus& corpus, std::ostream& out,
                        CorpusFormat format) {
  if (format == CorpusFormat::csv) {
    csv::write_row(out, {"id", "text", "label"});
    for (const auto& d : corpus.documents()) {
      csv::write_row(out, {d.id, d.raw_text,
                           d.gold ? corpus.classes().name(*d.gold) : ""});
    }
    return;
  }
  for (const auto& d : corpus.documents()) {
    nlohmann::ordered_json rec;
    rec["id"] = d.id;
    rec["text"] = d.raw_text;
    if (d.gold) rec["label"] = corpus.classes().name(*d.gold);
    out << rec.dump() << '\n';
  }
}

inline void save_corpus(const Corpus& corpus, const std::string& path,
                        CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  save_corpus(corpus, out, format);
}

// Per-class seed sets. Seeds are stored normalized (one token each) and a seed
// belongs to exactly one class.
class SeedLexicon {
 public:
  SeedLexicon() = default;

  static SeedLexicon from_lists(
      const std::vector<std::pair<std::string, std::vector<std::string>>>& lists) {
    SeedLexicon lex;
    for (const auto& [cls, seeds] : lists) {
      ClassId id = lex.classes_.add(cls);
      lex.seeds_.emplace_back();
      for (const auto& raw : seeds) {
        auto toks = tokenize(raw);
        if (toks.size() != 1) {
          throw ValidationError("seed '" + raw + "' of class '" + cls +
                                "' normalizes to " + std::to_string(toks.size()) +
                                " tokens; seeds must be single words");
        }
        auto [it, fresh] = lex.owner_.emplace(toks[0], id);
        if (!fresh && it->second != id) {
          throw ValidationError("seed '" + toks[0] + "' listed for both '" +
                                lex.classes_.name(it->second) + "' and '" + cls +
                                "'");
        }
        lex.seeds_.back().insert(toks[0]);
      }
    }
    return lex;
  }

  const ClassSet& classes() const { return classes_; }
  const std::set<std::string>& seeds(ClassId lexicon_class) const {
    return seeds_.at(lexicon_class);
  }
  std::size_t size() const { return owner_.size(); }

  // Lexicon class owning `token`, if it is a seed.
  std::optional<ClassId> owner(const std::string& token) const {
    auto it = owner_.find(token);
    if (it == owner_.end()) return std::nullopt;
    return it->second;
  }

  // Seed set of the corpus class named `name`; empty when the lexicon has no
  // seeds for it.
  const std::set<std::string>& seeds_for(const std::string& name) const {
    static const std::set<std::string> kEmpty;
    auto id = classes_.find(name);
    return id ? seeds_[*id] : kEmpty;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < classes_.size(); ++c) {
      j[classes_.name(ClassId(c))] =
          std::vector<std::string>(seeds_[c].begin(), seeds_[c].end());
    }
    return j;
  }

 private:
  ClassSet classes_;
  std::vector<std::set<std::string>> seeds_;
  std::unordered_map<std::string, ClassId> owner_;
};

inline SeedLexicon parse_seed_lexicon(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("seed lexicon: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw ValidationError("seed lexicon must be a JSON object {class: [seeds]}");
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> lists;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_array()) {
      throw ValidationError("seed lexicon: value for '" + it.key() +
                            "' must be an array of strings");
    }
    std::vector<std::string> seeds;
    for (const auto& s : it.value()) {
      if (!s.is_string()) {
        throw ValidationError("seed lexicon: non-string seed in '" + it.key() + "'");
      }
      seeds.push_back(s.get<std::string>());
    }
    lists.emplace_back(it.key(), std::move(seeds));
  }
  return SeedLexicon::from_lists(lists);
}

inline SeedLexicon load_seed_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open seed lexicon '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_seed_lexicon(text);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace debias
