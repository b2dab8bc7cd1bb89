#include "comkd/config.hpp"
#include "comkd/errors.hpp"
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"

using namespace comkd;

namespace {

ConfigError config_error(std::string_view text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("unreachable");
}

}  // namespace

TEST_CASE("empty text gives the defaults") {
  const TrainConfig cfg = parse_config_text("");
  CHECK(cfg == TrainConfig{});
  CHECK(cfg.tau == 1.0f);
  CHECK(cfg.kd_loss == KdLoss::kl);
  CHECK(cfg.align == AlignKind::both);
  CHECK(cfg.resolved_prompt_width() == 8);
  CHECK(cfg.prompt_size() == 32);
  CHECK(cfg.resolved_attn_scale() == 32.0f);
}

TEST_CASE("documented defaults agree with the struct") {
  TrainConfig cfg;
  CHECK(config_keys().size() == 21);
  for (const auto& k : config_keys()) set_config_value(cfg, k.name, k.default_value);
  CHECK(cfg == TrainConfig{});
}

TEST_CASE("parsing values, comments and whitespace") {
  const TrainConfig cfg = parse_config_text(
      "# comment\n"
      "  tau = 0.5   # trailing\n"
      "kd_loss=mse\n"
      "\n"
      "align = var\n"
      "eduattn = false\n"
      "seed = 42\n");
  CHECK(cfg.tau == 0.5f);
  CHECK(cfg.kd_loss == KdLoss::mse);
  CHECK(cfg.align == AlignKind::var);
  CHECK_FALSE(cfg.eduattn);
  CHECK(cfg.seed == 42);
}

TEST_CASE("errors name the key and line") {
  ConfigError e = config_error("seed = 3\ntau = -1\n");
  CHECK(e.key() == "tau");
  CHECK(e.line() == 2);
  e = config_error("kd_loss = cosine");
  CHECK(e.key() == "kd_loss");
  CHECK(e.line() == 1);
  e = config_error("\n\nlearning_rate = 0.1");
  CHECK(e.key() == "learning_rate");
  CHECK(e.line() == 3);
  e = config_error("just words");
  CHECK(e.line() == 1);
  e = config_error("epochs_student = -3");
  CHECK(e.key() == "epochs_student");
  e = config_error("ifalign = maybe");
  CHECK(e.key() == "ifalign");
  e = config_error("attn_dim = 16");
  CHECK(e.key() == "attn_dim");
  e = config_error("batch_size = 0");
  CHECK(e.key() == "batch_size");
}

TEST_CASE("text round trip") {
  TrainConfig cfg = fixtures::tiny_config(77);
  cfg.tau = 0.3f;
  cfg.lr_student = 0.0123f;
  cfg.lambda_align = 0.0f;
  cfg.kd_loss = KdLoss::l1;
  cfg.align = AlignKind::mean;
  cfg.ifalign = false;
  CHECK(parse_config_text(to_config_text(cfg)) == cfg);
  CHECK(parse_config_text(to_config_text(TrainConfig{})) == TrainConfig{});
}

TEST_CASE("config files") {
  fixtures::TempDir dir;
  {
    std::ofstream out(dir / "c.cfg");
    out << "epochs_teacher = 7\n";
  }
  CHECK(parse_config(dir / "c.cfg").epochs_teacher == 7);
  CHECK_THROWS_AS(parse_config(dir / "absent.cfg"), ConfigError);
}

TEST_CASE("ablation presets") {
  TrainConfig cfg;
  apply_ablation_preset(cfg, "kl-only");
  CHECK_FALSE(cfg.ifalign);
  CHECK_FALSE(cfg.eduattn);
  apply_ablation_preset(cfg, "no-eduattn");
  CHECK(cfg.ifalign);
  CHECK_FALSE(cfg.eduattn);
  apply_ablation_preset(cfg, "full");
  CHECK(cfg == TrainConfig{});
  CHECK_THROWS_AS(apply_ablation_preset(cfg, "none"), ConfigError);
}
