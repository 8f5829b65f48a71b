#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "explirec/data_ingest.hpp"

namespace explirec::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("explirec_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name, const std::string& content) const {
    auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << content;
    return p.string();
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ReviewRecord record(std::string user, std::string poi, int stars,
                           Date date = Date::from_ymd(2017, 6, 1), std::string review = "") {
  ReviewRecord r;
  r.user_id = std::move(user);
  r.poi_id = std::move(poi);
  r.stars = stars;
  r.date = date;
  if (!review.empty()) r.text_ref = std::move(review);
  return r;
}

// Dataset over dense ids "u<k>" / "i<k>" with every id interned up front, so
// indices equal k even for users or items without observations.
inline InteractionDataset dense_dataset(std::size_t users, std::size_t items,
                                        const std::vector<std::tuple<std::size_t, std::size_t, double>>& obs) {
  IdIndex u, p;
  for (std::size_t k = 0; k < users; ++k) u.intern("u" + std::to_string(k));
  for (std::size_t k = 0; k < items; ++k) p.intern("i" + std::to_string(k));
  std::vector<Observation> o;
  for (auto [a, b, s] : obs) o.push_back({a, b, s, Date::from_ymd(2017, 1, 1), ""});
  return InteractionDataset(u, p, std::move(o));
}

}  // namespace explirec::testing
