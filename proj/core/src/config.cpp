#include "comkd/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "comkd/errors.hpp"

namespace comkd {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view key, std::string_view value, std::size_t line) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(value) + "'",
                      std::string(key), line);
  }
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value, std::size_t line) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("expected an unsigned integer, got '" + std::string(value) + "'",
                      std::string(key), line);
  }
  return out;
}

float parse_real(std::string_view key, std::string_view value, std::size_t line) {
  // from_chars for float is not available on every toolchain we target.
  const std::string text(value);
  char* end = nullptr;
  const float out = std::strtof(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(out)) {
    throw ConfigError("expected a real number, got '" + text + "'", std::string(key), line);
  }
  return out;
}

float parse_positive_real(std::string_view key, std::string_view value, std::size_t line) {
  const float out = parse_real(key, value, line);
  if (!(out > 0.0f)) {
    throw ConfigError("must be positive, got '" + std::string(value) + "'", std::string(key), line);
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value, std::size_t line) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  throw ConfigError("expected true/false, got '" + std::string(value) + "'", std::string(key),
                    line);
}

std::string format_real(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

std::size_t TrainConfig::resolved_prompt_width() const {
  if (prompt_width != 0) return prompt_width;
  return static_cast<std::size_t>(std::lround(static_cast<double>(input_dim) / 4.0));
}

float TrainConfig::resolved_attn_scale() const {
  return attn_scale > 0.0f ? attn_scale : static_cast<float>(attn_dim);
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"input_dim", "32", "raw sample width k"},
      {"teacher_hidden", "128", "teacher MLP hidden width"},
      {"teacher_dim", "32", "teacher feature width d_t"},
      {"student_hidden", "32", "student MLP hidden width"},
      {"student_dim", "16", "student feature width d_s before projection"},
      {"attn_dim", "32", "attention width d_a (must equal teacher_dim)"},
      {"attn_scale", "0", "attention scale C; 0 means attn_dim"},
      {"prompt_len", "4", "number of prompt tokens"},
      {"prompt_width", "0", "width of one prompt token; 0 means round(k/4)"},
      {"tau", "1", "softmax temperature"},
      {"lr_teacher", "0.1", "SGD step size, teacher pretraining"},
      {"lr_student", "0.05", "SGD step size, distillation"},
      {"epochs_teacher", "60", "teacher pretraining epochs"},
      {"epochs_student", "60", "distillation epochs"},
      {"batch_size", "32", "minibatch size"},
      {"lambda_align", "1", "alignment loss weight"},
      {"seed", "1", "run seed"},
      {"ifalign", "true", "feature-statistics alignment on/off"},
      {"eduattn", "true", "cross-attention fusion on/off"},
      {"kd_loss", "kl", "refinement loss: kl | l1 | mse"},
      {"align", "both", "alignment statistic: mean | var | both"},
  };
  return keys;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value,
                      std::size_t line) {
  if (key == "input_dim") cfg.input_dim = parse_size(key, value, line);
  else if (key == "teacher_hidden") cfg.teacher_hidden = parse_size(key, value, line);
  else if (key == "teacher_dim") cfg.teacher_dim = parse_size(key, value, line);
  else if (key == "student_hidden") cfg.student_hidden = parse_size(key, value, line);
  else if (key == "student_dim") cfg.student_dim = parse_size(key, value, line);
  else if (key == "attn_dim") cfg.attn_dim = parse_size(key, value, line);
  else if (key == "attn_scale") cfg.attn_scale = parse_real(key, value, line);
  else if (key == "prompt_len") cfg.prompt_len = parse_size(key, value, line);
  else if (key == "prompt_width") cfg.prompt_width = parse_size(key, value, line);
  else if (key == "tau") cfg.tau = parse_positive_real(key, value, line);
  else if (key == "lr_teacher") cfg.lr_teacher = parse_positive_real(key, value, line);
  else if (key == "lr_student") cfg.lr_student = parse_positive_real(key, value, line);
  else if (key == "epochs_teacher") cfg.epochs_teacher = parse_size(key, value, line);
  else if (key == "epochs_student") cfg.epochs_student = parse_size(key, value, line);
  else if (key == "batch_size") cfg.batch_size = parse_size(key, value, line);
  else if (key == "lambda_align") cfg.lambda_align = parse_real(key, value, line);
  else if (key == "seed") cfg.seed = parse_u64(key, value, line);
  else if (key == "ifalign") cfg.ifalign = parse_bool(key, value, line);
  else if (key == "eduattn") cfg.eduattn = parse_bool(key, value, line);
  else if (key == "kd_loss") {
    const auto kind = parse_kd_loss(value);
    if (!kind) throw ConfigError("expected kl, l1 or mse, got '" + std::string(value) + "'",
                                 std::string(key), line);
    cfg.kd_loss = *kind;
  } else if (key == "align") {
    const auto kind = parse_align_kind(value);
    if (!kind) throw ConfigError("expected mean, var or both, got '" + std::string(value) + "'",
                                 std::string(key), line);
    cfg.align = *kind;
  } else {
    throw ConfigError("unknown key", std::string(key), line);
  }
}

void validate(const TrainConfig& cfg) {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError("must be positive", key);
  };
  positive(cfg.input_dim, "input_dim");
  positive(cfg.teacher_hidden, "teacher_hidden");
  positive(cfg.teacher_dim, "teacher_dim");
  positive(cfg.student_hidden, "student_hidden");
  positive(cfg.student_dim, "student_dim");
  positive(cfg.attn_dim, "attn_dim");
  positive(cfg.batch_size, "batch_size");
  if (!(cfg.tau > 0.0f)) throw ConfigError("must be positive", "tau");
  if (!(cfg.lr_teacher > 0.0f)) throw ConfigError("must be positive", "lr_teacher");
  if (!(cfg.lr_student > 0.0f)) throw ConfigError("must be positive", "lr_student");
  if (cfg.attn_scale < 0.0f) throw ConfigError("must be non-negative", "attn_scale");
  if (cfg.lambda_align < 0.0f) throw ConfigError("must be non-negative", "lambda_align");
  if (cfg.attn_dim != cfg.teacher_dim) {
    throw ConfigError("must equal teacher_dim so fused features keep the teacher width", "attn_dim");
  }
}

TrainConfig parse_config_text(std::string_view text) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected 'key = value'", std::string(line), line_no);
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    set_config_value(cfg, key, value, line_no);
  }
  validate(cfg);
  return cfg;
}

TrainConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string to_config_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "input_dim = " << cfg.input_dim << "\n"
      << "teacher_hidden = " << cfg.teacher_hidden << "\n"
      << "teacher_dim = " << cfg.teacher_dim << "\n"
      << "student_hidden = " << cfg.student_hidden << "\n"
      << "student_dim = " << cfg.student_dim << "\n"
      << "attn_dim = " << cfg.attn_dim << "\n"
      << "attn_scale = " << format_real(cfg.attn_scale) << "\n"
      << "prompt_len = " << cfg.prompt_len << "\n"
      << "prompt_width = " << cfg.prompt_width << "\n"
      << "tau = " << format_real(cfg.tau) << "\n"
      << "lr_teacher = " << format_real(cfg.lr_teacher) << "\n"
      << "lr_student = " << format_real(cfg.lr_student) << "\n"
      << "epochs_teacher = " << cfg.epochs_teacher << "\n"
      << "epochs_student = " << cfg.epochs_student << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "lambda_align = " << format_real(cfg.lambda_align) << "\n"
      << "seed = " << cfg.seed << "\n"
      << "ifalign = " << (cfg.ifalign ? "true" : "false") << "\n"
      << "eduattn = " << (cfg.eduattn ? "true" : "false") << "\n"
      << "kd_loss = " << to_string(cfg.kd_loss) << "\n"
      << "align = " << to_string(cfg.align) << "\n";
  return out.str();
}

void apply_ablation_preset(TrainConfig& cfg, std::string_view preset) {
  if (preset == "full") {
    cfg.ifalign = true;
    cfg.eduattn = true;
  } else if (preset == "no-ifalign") {
    cfg.ifalign = false;
    cfg.eduattn = true;
  } else if (preset == "no-eduattn") {
    cfg.ifalign = true;
    cfg.eduattn = false;
  } else if (preset == "kl-only") {
    cfg.ifalign = false;
    cfg.eduattn = false;
  } else {
    throw ConfigError("unknown ablation preset '" + std::string(preset) +
                      "' (expected full, no-ifalign, no-eduattn or kl-only)",
                      "ablation");
  }
}

}  // namespace comkd
