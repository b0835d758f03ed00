#pragma once

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qlouvain/error.hpp"

namespace qlouvain {

/// Reads a whole file into memory. Files ending in ".gz" are decompressed.
inline std::string read_text_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error("cannot open " + path.string() + ": no such file");
  }
  if (path.extension() == ".gz") {
    gzFile file = gzopen(path.string().c_str(), "rb");
    if (file == nullptr) throw Error("cannot open " + path.string());
    std::string out;
    std::vector<char> buffer(1 << 16);
    int got = 0;
    while ((got = gzread(file, buffer.data(), static_cast<unsigned>(buffer.size()))) > 0) {
      out.append(buffer.data(), static_cast<std::size_t>(got));
    }
    int errnum = 0;
    const char* msg = gzerror(file, &errnum);
    const bool failed = got < 0 || (errnum != Z_OK && errnum != Z_STREAM_END);
    std::string detail = failed ? std::string(msg) : std::string();
    gzclose(file);
    if (failed) throw Error("gzip error in " + path.string() + ": " + detail);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A set of output files that become visible together.
///
/// Contents are staged in memory; commit() writes every file to a temporary
/// sibling and then renames them into place, so a failure before commit()
/// leaves nothing behind.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) {
    files_.emplace_back(name, std::move(content));
  }

  void commit() {
    std::filesystem::create_directories(dir_);
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
    try {
      for (const auto& [name, content] : files_) {
        auto final_path = dir_ / name;
        auto tmp_path = dir_ / ("." + name + ".tmp");
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) throw Error("cannot write " + tmp_path.string());
        staged.emplace_back(tmp_path, final_path);
      }
    } catch (...) {
      for (const auto& [tmp, final_path] : staged) std::filesystem::remove(tmp);
      throw;
    }
    for (const auto& [tmp, final_path] : staged) std::filesystem::rename(tmp, final_path);
    files_.clear();
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace qlouvain
