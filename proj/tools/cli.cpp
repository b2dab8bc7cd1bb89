#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <variant>

#include "CLI11.hpp"
#include "comkd/checkpoint.hpp"
#include "comkd/config.hpp"
#include "comkd/dataset.hpp"
#include "comkd/errors.hpp"
#include "comkd/evaluator.hpp"
#include "comkd/gradcheck.hpp"
#include "comkd/trainer.hpp"

namespace comkd::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string flag_name(std::string_view key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

// One string slot per TrainConfig key, applied in documentation order on
// top of the base config.
struct ConfigFlags {
  std::string config_path;
  std::string ablation;
  std::map<std::string, std::string, std::less<>> values;
  std::map<std::string, CLI::Option*, std::less<>> options;

  void attach(CLI::App& app, bool with_ablation) {
    app.add_option("--config", config_path, "key = value config file applied before flags");
    for (const auto& key : config_keys()) {
      const std::string name(key.name);
      options[name] = app.add_option(flag_name(key.name), values[name], std::string(key.help))
                          ->default_str(std::string(key.default_value));
    }
    if (with_ablation) {
      app.add_option("--ablation", ablation, "preset: full | no-ifalign | no-eduattn | kl-only");
    }
  }

  TrainConfig resolve(TrainConfig base) const {
    TrainConfig cfg = config_path.empty() ? base : parse_config(config_path);
    const auto seed_opt = options.find("seed");
    if (seed_opt->second->count() == 0) {
      if (const char* env = std::getenv("COMKD_SEED")) set_flag(cfg, "seed", env, "COMKD_SEED");
    }
    for (const auto& key : config_keys()) {
      const auto it = options.find(key.name);
      if (it->second->count() > 0) {
        set_flag(cfg, key.name, values.find(key.name)->second, flag_name(key.name));
      }
    }
    if (!ablation.empty()) {
      try {
        apply_ablation_preset(cfg, ablation);
      } catch (const ConfigError& e) {
        throw UsageError(std::string("--ablation: ") + e.what());
      }
    }
    try {
      validate(cfg);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }

  static void set_flag(TrainConfig& cfg, std::string_view key, const std::string& value,
                       const std::string& source) {
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw UsageError(source + ": " + e.what());
    }
  }
};

std::optional<std::uint64_t> env_seed() {
  const char* env = std::getenv("COMKD_SEED");
  if (!env) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') throw UsageError("COMKD_SEED must be an unsigned integer");
  return v;
}

void print_epoch(std::ostream& out, const EpochRecord& r, bool distill) {
  out << "epoch " << r.epoch;
  if (distill) {
    out << "  l_stu " << fmt("%.6f", r.l_stu) << "  l_align " << fmt("%.6f", r.l_align)
        << "  l_final " << fmt("%.6f", r.l_final);
  } else {
    out << "  loss " << fmt("%.6f", r.l_stu);
  }
  out << "  train_acc " << fmt("%.2f", r.train_accuracy) << "\n";
}

void write_log_csv(const std::string& path, const RunLog& log) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << "epoch,l_stu,l_align,l_final,train_accuracy\n";
  for (const auto& r : log.epochs) {
    f << r.epoch << "," << fmt("%.9g", r.l_stu) << "," << fmt("%.9g", r.l_align) << ","
      << fmt("%.9g", r.l_final) << "," << fmt("%.4f", r.train_accuracy) << "\n";
  }
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path + " for writing");
  return f;
}

std::vector<std::string> long_flags(const CLI::App& app) {
  std::vector<std::string> out;
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& n : opt->get_lnames()) out.push_back("--" + n);
  }
  return out;
}

std::string usage_hint(const CLI::App& root, const CLI::App* active,
                       const std::vector<std::string>& args) {
  std::string hint;
  if (!active) {
    std::vector<std::string> names;
    for (const CLI::App* sub : root.get_subcommands([](const CLI::App*) { return true; }))
      names.push_back(sub->get_name());
    if (!args.empty() && args[0].rfind("-", 0) != 0) {
      const std::string s = suggest(args[0], names);
      if (!s.empty()) hint = "unknown command '" + args[0] + "'; did you mean '" + s + "'?";
    }
    return hint;
  }
  const auto known = long_flags(*active);
  for (const auto& a : args) {
    if (a.rfind("--", 0) != 0) continue;
    const std::string name = a.substr(0, a.find('='));
    if (std::find(known.begin(), known.end(), name) != known.end()) continue;
    const std::string s = suggest(name, known);
    if (!s.empty()) return "unknown flag '" + name + "'; did you mean '" + s + "'?";
    return "unknown flag '" + name + "'";
  }
  return hint;
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggest(std::string_view given, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::max<std::size_t>(3, given.size() / 3) + 1;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(given, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale compact knowledge distillation for CLIP-style classifiers", "comkd"};
  app.require_subcommand(1);
  app.get_formatter()->column_width(36);

  // gen-data
  SyntheticSpec spec;
  std::string data_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic Gaussian-cluster dataset");
  gen->add_option("--classes", spec.classes, "number of classes N")->capture_default_str();
  gen->add_option("--dim", spec.dim, "sample width k")->capture_default_str();
  gen->add_option("--per-class", spec.per_class, "samples per class")->capture_default_str();
  gen->add_option("--sigma", spec.sigma, "within-class noise")->capture_default_str();
  gen->add_option("--radius", spec.radius, "distance of class means from the origin")
      ->capture_default_str();
  gen->add_option("--shift", spec.shift, "domain shift along a fixed direction")
      ->capture_default_str();
  gen->add_option("--stream", spec.stream, "noise stream; 0 train, 1 test")->capture_default_str();
  auto* gen_seed = gen->add_option("--seed", spec.seed, "layout and noise seed")
                       ->default_str("1, or COMKD_SEED");
  gen->add_flag("--unlabeled", "drop labels from the written file");
  gen->add_option("--out", data_out, "output dataset path")->required();

  // pretrain-teacher
  ConfigFlags teacher_flags;
  std::string teacher_data, teacher_out, teacher_csv;
  auto* pre = app.add_subcommand("pretrain-teacher", "Train the teacher on labeled data");
  pre->add_option("--data", teacher_data, "labeled dataset")->required();
  pre->add_option("--out", teacher_out, "teacher checkpoint path")->required();
  pre->add_option("--csv", teacher_csv, "per-epoch log as CSV");
  teacher_flags.attach(*pre, false);

  // distill
  ConfigFlags distill_flags;
  std::string distill_teacher, distill_data, distill_out, distill_csv;
  auto* dist = app.add_subcommand("distill", "Distill a student from a frozen teacher");
  dist->add_option("--teacher", distill_teacher, "teacher checkpoint")->required();
  dist->add_option("--data", distill_data, "training samples; labels are ignored")->required();
  dist->add_option("--out", distill_out, "student checkpoint path")->required();
  dist->add_option("--csv", distill_csv, "per-epoch log as CSV");
  distill_flags.attach(*dist, true);

  // eval
  std::string eval_model, eval_data, eval_csv, eval_split = "base-novel";
  auto* ev = app.add_subcommand("eval", "Evaluate a teacher or student checkpoint");
  ev->add_option("--model", eval_model, "teacher or student checkpoint")->required();
  ev->add_option("--data", eval_data, "labeled test dataset")->required();
  ev->add_option("--split", eval_split, "base-novel | all")
      ->capture_default_str()
      ->check(CLI::IsMember({"base-novel", "all"}));
  ev->add_option("--csv", eval_csv, "machine-readable metrics");

  // ablate
  ConfigFlags ablate_flags;
  std::string ab_teacher, ab_data, ab_test, ab_csv, ab_grid = "table4";
  unsigned ab_jobs = 1;
  auto* ab = app.add_subcommand("ablate", "Distill and evaluate one student per ablation cell");
  ab->add_option("--teacher", ab_teacher, "teacher checkpoint")->required();
  ab->add_option("--data", ab_data, "training samples; labels are ignored")->required();
  ab->add_option("--test", ab_test, "labeled test dataset")->required();
  ab->add_option("--grid", ab_grid, "table4 | table5 | table6 | comma-separated cells")
      ->capture_default_str();
  ab->add_option("--jobs", ab_jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  ab->add_option("--csv", ab_csv, "machine-readable metrics");
  ablate_flags.attach(*ab, false);

  // gradcheck
  std::uint64_t gc_seed = 1;
  std::size_t gc_instances = 10;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  auto* gc_seed_opt =
      gc->add_option("--seed", gc_seed, "instance seed")->default_str("1, or COMKD_SEED");
  gc->add_option("--instances", gc_instances, "random instances per op")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const auto parsed = app.get_subcommands();
    const CLI::App* active = parsed.empty() ? nullptr : parsed.front();
    const std::string hint = usage_hint(app, active, args);
    err << "error: " << (hint.empty() ? std::string(e.what()) : hint) << "\n";
    err << "run 'comkd " << (active ? active->get_name() + " " : std::string()) << "--help' for usage\n";
    return kUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_seed->count() == 0) {
        if (auto s = env_seed()) spec.seed = *s;
      }
      Dataset d = gen_synthetic(spec);
      if (gen->get_option("--unlabeled")->count() > 0) d = d.without_labels();
      save_dataset(data_out, d);
      out << "wrote " << d.size() << " samples (" << spec.classes << " classes x " << spec.per_class
          << ") of width " << spec.dim << " to " << data_out << "\n";
    } else if (pre->parsed()) {
      const TrainConfig cfg = teacher_flags.resolve(TrainConfig{});
      const Dataset data = load_dataset(teacher_data);
      TeacherRun run = pretrain_teacher(cfg, data, [&](const EpochRecord& r) { print_epoch(out, r, false); });
      save_checkpoint(teacher_out, run.model, cfg);
      if (!teacher_csv.empty()) write_log_csv(teacher_csv, run.log);
      out << "teacher saved to " << teacher_out << " (" << fmt("%.2f", run.log.wall_seconds) << " s)\n";
    } else if (dist->parsed()) {
      LoadedTeacher teacher = load_teacher(distill_teacher);
      const TrainConfig cfg = distill_flags.resolve(teacher.config);
      const Dataset data = load_dataset(distill_data).without_labels();
      StudentRun run = distill_student(cfg, teacher.model, data,
                                       [&](const EpochRecord& r) { print_epoch(out, r, true); });
      save_checkpoint(distill_out, run.model, cfg);
      if (!distill_csv.empty()) write_log_csv(distill_csv, run.log);
      out << "student saved to " << distill_out << " (" << fmt("%.2f", run.log.wall_seconds) << " s)\n";
    } else if (ev->parsed()) {
      const LoadedModel loaded = load_checkpoint(eval_model);
      const ImageClassifier& model =
          std::visit([](const auto& m) -> const ImageClassifier& { return m.model; }, loaded);
      const Dataset data = load_dataset(eval_data);
      if (eval_split == "all") {
        const double acc = evaluate_transfer(model, data);
        out << "accuracy " << fmt("%.2f", acc) << "\n";
        if (!eval_csv.empty()) open_csv(eval_csv) << "split,accuracy\nall," << fmt("%.2f", acc) << "\n";
      } else {
        const Metrics m = evaluate_base_novel(model, data, SplitSpec::halves(model.class_count()));
        const std::vector<std::string> names{"base-novel"};
        print_metrics_table(out, names, std::span<const Metrics>(&m, 1));
        if (!eval_csv.empty()) {
          auto f = open_csv(eval_csv);
          write_metrics_csv(f, names, std::span<const Metrics>(&m, 1));
        }
      }
    } else if (ab->parsed()) {
      LoadedTeacher teacher = load_teacher(ab_teacher);
      const TrainConfig cfg = ablate_flags.resolve(teacher.config);
      std::vector<AblationCell> grid;
      try {
        grid = ablation_grid(ab_grid);
      } catch (const ConfigError& e) {
        throw UsageError(std::string("--grid: ") + e.what());
      }
      const Dataset train = load_dataset(ab_data).without_labels();
      const Dataset test = load_dataset(ab_test);
      const auto rows = run_ablation(cfg, teacher.model, train, test,
                                     SplitSpec::halves(teacher.model.class_count()), grid, ab_jobs);
      std::vector<std::string> names;
      std::vector<Metrics> metrics;
      for (const auto& r : rows) {
        names.push_back(r.cell.name);
        metrics.push_back(r.metrics);
      }
      print_metrics_table(out, names, metrics);
      if (!ab_csv.empty()) {
        auto f = open_csv(ab_csv);
        write_metrics_csv(f, names, metrics);
      }
    } else if (gc->parsed()) {
      if (gc_seed_opt->count() == 0) {
        if (auto s = env_seed()) gc_seed = *s;
      }
      bool ok = true;
      for (const auto& r : run_gradient_suite(gc_seed, gc_instances)) {
        std::string name = r.name;
        name.resize(std::max<std::size_t>(22, name.size()), ' ');
        out << name << " " << fmt("%.3e", r.max_error) << "  " << (r.passed() ? "ok" : "FAIL") << "\n";
        ok = ok && r.passed();
      }
      if (!ok) {
        err << "gradient check failed (tolerance " << fmt("%g", kGradCheckTolerance) << ")\n";
        return kRuntime;
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "format error at byte " << e.offset() << ": " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

}  // namespace comkd::cli
