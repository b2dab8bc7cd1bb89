#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "comkd/config.hpp"
#include "comkd/dataset.hpp"

namespace fixtures {

// Small model and data sizes that train in milliseconds.
inline comkd::TrainConfig tiny_config(std::uint64_t seed = 1) {
  comkd::TrainConfig cfg;
  cfg.input_dim = 8;
  cfg.teacher_hidden = 16;
  cfg.teacher_dim = 8;
  cfg.student_hidden = 8;
  cfg.student_dim = 4;
  cfg.attn_dim = 8;
  cfg.prompt_len = 2;
  cfg.prompt_width = 1;
  cfg.epochs_teacher = 5;
  cfg.epochs_student = 4;
  cfg.batch_size = 16;
  cfg.seed = seed;
  return cfg;
}

inline comkd::SyntheticSpec tiny_spec(std::uint64_t seed = 1, std::uint64_t stream = 0) {
  comkd::SyntheticSpec s;
  s.seed = seed;
  s.classes = 4;
  s.dim = 8;
  s.per_class = 12;
  s.stream = stream;
  return s;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("comkd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
