#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "comkd/config.hpp"
#include "comkd/models.hpp"
#include "comkd/tensor.hpp"

namespace comkd {

// Binary layout, all integers little-endian:
//
//   "CKD1"              4 bytes magic
//   version             u32 (currently 1)
//   entry count         u32
//   per entry:
//     name length       u16
//     name              UTF-8 bytes
//     rank              u8
//     dims              u32 x rank
//     payload           f32 x product(dims), IEEE-754 little-endian
//   trailer length      u32
//   trailer             UTF-8 text (config snapshot / provenance)
inline constexpr char kCheckpointMagic[4] = {'C', 'K', 'D', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  Tensor tensor;
  // Byte offset of the entry header; filled in by decode.
  std::size_t offset = 0;
};

struct Checkpoint {
  std::vector<TensorEntry> entries;
  std::string trailer;

  const TensorEntry* find(std::string_view name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws FormatError (with byte offset) on malformed input; never returns a
// partially decoded checkpoint.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Model-level views. The trailer holds to_config_text(cfg).
Checkpoint to_checkpoint(const TeacherModel& model, const TrainConfig& cfg);
Checkpoint to_checkpoint(const StudentModel& model, const TrainConfig& cfg);

struct LoadedTeacher {
  TeacherModel model;
  TrainConfig config;
};
struct LoadedStudent {
  StudentModel model;
  TrainConfig config;
};
using LoadedModel = std::variant<LoadedTeacher, LoadedStudent>;

// Teachers come back frozen. Unknown or missing tensor names are format
// errors.
LoadedModel model_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const TeacherModel& model,
                     const TrainConfig& cfg);
void save_checkpoint(const std::filesystem::path& path, const StudentModel& model,
                     const TrainConfig& cfg);
LoadedModel load_checkpoint(const std::filesystem::path& path);
LoadedTeacher load_teacher(const std::filesystem::path& path);
LoadedStudent load_student(const std::filesystem::path& path);

}  // namespace comkd
