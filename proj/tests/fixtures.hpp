#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "debias/debias.hpp"

namespace fixtures {

using Row = std::tuple<std::string, std::string, std::string>;  // id, text, label

inline std::shared_ptr<const debias::Corpus> corpus(const std::vector<Row>& rows,
                                                    std::vector<std::string> classes = {}) {
  debias::ClassSet cs(classes);
  std::vector<debias::Document> docs;
  for (const auto& [id, text, label] : rows) {
    std::optional<debias::ClassId> gold;
    if (!label.empty()) gold = cs.find_or_add(label);
    docs.push_back(debias::Document::make(id, text, gold));
  }
  return std::make_shared<const debias::Corpus>(std::move(docs), std::move(cs));
}

inline debias::SeedLexicon computer_sports() {
  return debias::SeedLexicon::from_lists({{"Computer", {"mac", "windows"}}, {"Sports", {"hockey"}}});
}

// Temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("debias-" + tag + "-" + std::to_string(::getpid()) + "-" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace fixtures
