#include "comkd/models.hpp"

#include <bit>
#include <cstring>

#include "comkd/errors.hpp"
#include "comkd/ops.hpp"

namespace comkd {

TeacherModel TeacherModel::init(const TrainConfig& cfg, std::size_t classes) {
  validate(cfg);
  if (classes == 0) throw ParameterError("teacher needs at least one class");
  Rng rng(derive_seed(cfg.seed, "teacher-init"));
  TeacherModel m;
  m.encoder = EncoderParams::init(cfg.input_dim + cfg.prompt_size(), cfg.teacher_hidden,
                                  cfg.teacher_dim, rng);
  m.prompt = init_prompt(cfg.prompt_len, cfg.resolved_prompt_width());
  m.text_table = init_text_table(classes, cfg.teacher_dim, rng);
  m.temperature = cfg.tau;
  return m;
}

Tensor TeacherModel::image_features(const Tensor& inputs) const {
  return encode_image(encoder, prompt, inputs);
}

Tensor TeacherModel::text_features() const { return teacher_text_features(text_table); }

LogitMatrix TeacherModel::logits(const Tensor& inputs) const {
  return clip_logits(image_features(inputs), text_features(), temperature);
}

ParameterSet TeacherModel::parameters() const {
  ParameterSet out = encoder.parameters();
  out.push_back(prompt);
  out.push_back(text_table);
  return out;
}

void TeacherModel::freeze() {
  for (auto p : parameters()) p.set_requires_grad(false);
}

bool TeacherModel::frozen() const {
  for (const auto& p : parameters())
    if (p.requires_grad()) return false;
  return true;
}

LogitMatrix TeacherModel::predict(const Tensor& inputs) const {
  const LogitMatrix out = logits(inputs);
  return {out.values.detach(), out.temperature};
}

StudentModel StudentModel::init(const TrainConfig& cfg, const Tensor& teacher_text_features) {
  validate(cfg);
  if (teacher_text_features.rank() != 2 || teacher_text_features.dim(1) != cfg.teacher_dim) {
    throw ConfigError("teacher text features " + shape_string(teacher_text_features.shape()) +
                          " do not match teacher_dim " + std::to_string(cfg.teacher_dim),
                      "teacher_dim");
  }
  Rng rng(derive_seed(cfg.seed, "student-init"));
  StudentModel m;
  m.encoder = EncoderParams::init(cfg.input_dim + cfg.prompt_size(), cfg.student_hidden,
                                  cfg.student_dim, rng);
  m.prompt = init_prompt(cfg.prompt_len, cfg.resolved_prompt_width());
  m.projector = Linear::kaiming(cfg.student_dim, cfg.teacher_dim, rng);
  m.attention = AttentionParams::init(cfg.teacher_dim, cfg.attn_dim, cfg.resolved_attn_scale(), rng);
  m.text_features = teacher_text_features.detach();
  m.use_attention = cfg.eduattn;
  m.temperature = cfg.tau;
  return m;
}

StudentModel::Forward StudentModel::forward(const Tensor& inputs) const {
  Forward f;
  f.features = encode_image(encoder, prompt, inputs);
  f.projected = project(projector, f.features);
  if (use_attention) {
    const AttentionOutput att = cross_attention(attention, f.projected, text_features);
    f.fused = fuse(attention, f.projected, att.features).fused;
  } else {
    f.fused = f.projected;
  }
  f.normalized = l2_normalize_rows(f.fused);
  f.logits = clip_logits(f.normalized, text_features, temperature);
  return f;
}

ParameterSet StudentModel::parameters() const {
  ParameterSet out = encoder.parameters();
  out.push_back(prompt);
  for (const auto& p : projector.parameters()) out.push_back(p);
  for (const auto& p : attention.parameters()) out.push_back(p);
  return out;
}

LogitMatrix StudentModel::predict(const Tensor& inputs) const {
  const LogitMatrix out = forward(inputs).logits;
  return {out.values.detach(), out.temperature};
}

std::uint64_t parameter_hash(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint32_t word) {
    for (int i = 0; i < 4; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& p : params) {
    mix(static_cast<std::uint32_t>(p.rank()));
    for (auto d : p.shape()) mix(static_cast<std::uint32_t>(d));
    for (float v : p.data()) mix(std::bit_cast<std::uint32_t>(v));
  }
  return h;
}

}  // namespace comkd
