#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "comkd/ifalign.hpp"
#include "comkd/losses.hpp"

namespace comkd {

// Training configuration. Text form is one `key = value` per line; `#`
// starts a comment. Defaults:
//
//   key             default  meaning
//   input_dim       32       k, raw sample width
//   teacher_hidden  128      teacher MLP hidden width
//   teacher_dim     32       d_t, teacher feature width
//   student_hidden  32       student MLP hidden width
//   student_dim     16       d_s, student feature width (before projection)
//   attn_dim        32       d_a, attention width; must equal teacher_dim
//   attn_scale      0        C in softmax(QK^T / sqrt(C)); 0 means attn_dim
//   prompt_len      4        prompt tokens
//   prompt_width    0        width of one prompt token; 0 means round(k / 4)
//   tau             1        softmax temperature for logits and distillation
//   lr_teacher      0.1      SGD step size for teacher pretraining
//   lr_student      0.05     SGD step size for distillation
//   epochs_teacher  60
//   epochs_student  60
//   batch_size      32
//   lambda_align    1        weight of the alignment loss in the final loss
//   seed            1
//   ifalign         true     feature-statistics alignment term on/off
//   eduattn         true     text-image cross-attention fusion on/off
//   kd_loss         kl       kl | l1 | mse
//   align           both     mean | var | both
struct TrainConfig {
  std::size_t input_dim = 32;
  std::size_t teacher_hidden = 128;
  std::size_t teacher_dim = 32;
  std::size_t student_hidden = 32;
  std::size_t student_dim = 16;
  std::size_t attn_dim = 32;
  float attn_scale = 0.0f;
  std::size_t prompt_len = 4;
  std::size_t prompt_width = 0;
  float tau = 1.0f;
  float lr_teacher = 0.1f;
  float lr_student = 0.05f;
  std::size_t epochs_teacher = 60;
  std::size_t epochs_student = 60;
  std::size_t batch_size = 32;
  float lambda_align = 1.0f;
  std::uint64_t seed = 1;
  bool ifalign = true;
  bool eduattn = true;
  KdLoss kd_loss = KdLoss::kl;
  AlignKind align = AlignKind::both;

  std::size_t resolved_prompt_width() const;
  std::size_t prompt_size() const { return prompt_len * resolved_prompt_width(); }
  float resolved_attn_scale() const;

  bool operator==(const TrainConfig&) const = default;
};

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

// Every accepted key in documentation order.
const std::vector<ConfigKey>& config_keys();

// Throws ConfigError naming the offending key.
void validate(const TrainConfig& cfg);

// Parses `key = value` text on top of the defaults and validates the result.
TrainConfig parse_config_text(std::string_view text);
TrainConfig parse_config(const std::filesystem::path& path);

// Sets one key from its textual value. `line` is only used for error messages.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value,
                      std::size_t line = 0);

// Canonical text; parse_config_text(to_config_text(c)) == c.
std::string to_config_text(const TrainConfig& cfg);

// full | no-ifalign | no-eduattn | kl-only
void apply_ablation_preset(TrainConfig& cfg, std::string_view preset);

}  // namespace comkd
