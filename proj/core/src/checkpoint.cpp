#include "comkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "comkd/errors.hpp"

namespace comkd {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kMaxRank = 8;

}  // namespace

const TensorEntry* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ParameterError("tensor name too long: " + e.name.substr(0, 32) + "...");
    }
    if (e.tensor.rank() > kMaxRank) {
      throw ParameterError("tensor '" + e.name + "' has rank above " + std::to_string(kMaxRank));
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) {
        throw ParameterError("tensor '" + e.name + "' dimension exceeds u32");
      }
      w.u32(static_cast<std::uint32_t>(d));
    }
    for (float v : e.tensor.data()) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.trailer.size()));
  w.bytes(ckpt.trailer.data(), ckpt.trailer.size());
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad magic bytes", 0);
  r.text(4, "magic");
  const std::size_t version_at = r.offset();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported format version " + std::to_string(version), version_at);
  }
  const auto count = r.u32("entry count");
  Checkpoint out;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    e.offset = r.offset();
    const auto name_len = r.u16("name length");
    e.name = r.text(name_len, "tensor name");
    const std::size_t rank_at = r.offset();
    const auto rank = r.u8("rank");
    if (rank > kMaxRank) {
      throw FormatError("tensor '" + e.name + "' has rank " + std::to_string(rank), rank_at);
    }
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      const std::size_t dim_at = r.offset();
      d = r.u32("dimension");
      if (d != 0 && numel > (r.remaining() / 4) / d) {
        throw FormatError("tensor '" + e.name + "' dimensions exceed the remaining file size",
                          dim_at);
      }
      numel *= d;
    }
    r.need(numel * 4, "tensor payload");
    std::vector<float> values(numel);
    for (auto& v : values) v = r.f32("tensor payload");
    e.tensor = Tensor::from(std::move(shape), std::move(values));
    out.entries.push_back(std::move(e));
  }
  const auto trailer_len = r.u32("trailer length");
  out.trailer = r.text(trailer_len, "trailer");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

void put_linear(Checkpoint& c, const std::string& prefix, const Linear& layer) {
  c.entries.push_back({prefix + ".weight", layer.weight});
  if (layer.has_bias) c.entries.push_back({prefix + ".bias", layer.bias});
}

Tensor leaf_copy(const Tensor& t, bool trainable) {
  Tensor out = t.detach();
  out.set_requires_grad(trainable);
  return out;
}

std::size_t trailer_offset(const Checkpoint& c) {
  return encode_checkpoint(c).size() - c.trailer.size();
}

// Claims entries by name and reports anything left over.
class EntryTable {
 public:
  explicit EntryTable(const Checkpoint& c) : ckpt_(c), end_offset_(trailer_offset(c) - 4) {
    for (const auto& e : c.entries) {
      if (!by_name_.emplace(e.name, &e).second) {
        throw FormatError("duplicate tensor name '" + e.name + "'", e.offset);
      }
    }
  }

  Tensor take(const std::string& name, bool trainable) {
    const TensorEntry* e = find(name);
    if (!e) throw FormatError("missing tensor '" + name + "'", end_offset_);
    return leaf_copy(e->tensor, trainable);
  }

  const TensorEntry* find(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return nullptr;
    const TensorEntry* e = it->second;
    by_name_.erase(it);
    return e;
  }

  Linear take_linear(const std::string& prefix, bool trainable) {
    Linear layer;
    const TensorEntry* w = find(prefix + ".weight");
    if (!w) throw FormatError("missing tensor '" + prefix + ".weight'", end_offset_);
    if (w->tensor.rank() != 2) {
      throw FormatError("'" + w->name + "' must be a matrix", w->offset);
    }
    layer.weight = leaf_copy(w->tensor, trainable);
    if (const TensorEntry* b = find(prefix + ".bias")) {
      if (b->tensor.rank() != 1 || b->tensor.dim(0) != w->tensor.dim(0)) {
        throw FormatError("'" + b->name + "' does not match its weight", b->offset);
      }
      layer.bias = leaf_copy(b->tensor, trainable);
      layer.has_bias = true;
    } else {
      layer.has_bias = false;
    }
    return layer;
  }

  // Rejects names outside `known` before anything is claimed.
  void restrict_to(std::initializer_list<std::string_view> known) const {
    for (const auto& e : ckpt_.entries) {
      bool ok = false;
      for (auto k : known) ok = ok || e.name == k;
      if (!ok) throw FormatError("unknown tensor name '" + e.name + "'", e.offset);
    }
  }

 private:
  const Checkpoint& ckpt_;
  std::size_t end_offset_;
  std::map<std::string, const TensorEntry*> by_name_;
};

TrainConfig config_from_trailer(const Checkpoint& c) {
  try {
    return parse_config_text(c.trailer);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad config snapshot: ") + e.what(), trailer_offset(c));
  }
}

void check_chain(bool ok, const std::string& what) {
  if (!ok) throw FormatError("inconsistent parameter shapes: " + what, 0);
}

}  // namespace

Checkpoint to_checkpoint(const TeacherModel& m, const TrainConfig& cfg) {
  Checkpoint c;
  put_linear(c, "teacher.encoder.hidden", m.encoder.hidden);
  put_linear(c, "teacher.encoder.output", m.encoder.output);
  c.entries.push_back({"teacher.prompt", m.prompt});
  c.entries.push_back({"teacher.text_table", m.text_table});
  c.trailer = to_config_text(cfg);
  return c;
}

Checkpoint to_checkpoint(const StudentModel& m, const TrainConfig& cfg) {
  Checkpoint c;
  put_linear(c, "student.encoder.hidden", m.encoder.hidden);
  put_linear(c, "student.encoder.output", m.encoder.output);
  c.entries.push_back({"student.prompt", m.prompt});
  put_linear(c, "student.projector", m.projector);
  put_linear(c, "student.attention.query", m.attention.query);
  put_linear(c, "student.attention.key", m.attention.key);
  put_linear(c, "student.attention.value", m.attention.value);
  c.entries.push_back({"student.attention.alpha", m.attention.alpha});
  c.entries.push_back({"student.text_features", m.text_features});
  c.trailer = to_config_text(cfg);
  return c;
}

LoadedModel model_from_checkpoint(const Checkpoint& c) {
  if (c.entries.empty()) throw FormatError("checkpoint holds no tensors", 12);
  const TrainConfig cfg = config_from_trailer(c);
  EntryTable table(c);
  const std::string& first = c.entries.front().name;

  if (first.rfind("teacher.", 0) == 0) {
    table.restrict_to({"teacher.encoder.hidden.weight", "teacher.encoder.hidden.bias",
                       "teacher.encoder.output.weight", "teacher.encoder.output.bias",
                       "teacher.prompt", "teacher.text_table"});
    LoadedTeacher out{{}, cfg};
    auto& m = out.model;
    m.encoder.hidden = table.take_linear("teacher.encoder.hidden", false);
    m.encoder.output = table.take_linear("teacher.encoder.output", false);
    m.prompt = table.take("teacher.prompt", false);
    m.text_table = table.take("teacher.text_table", false);
    m.temperature = cfg.tau;
    check_chain(m.encoder.output.in_features() == m.encoder.hidden.out_features(), "teacher encoder");
    check_chain(m.prompt.rank() == 1 && m.prompt.numel() < m.encoder.input_width(), "teacher prompt");
    check_chain(m.text_table.rank() == 2 && m.text_table.dim(1) == m.encoder.feature_dim(),
                "teacher text table");
    return out;
  }
  if (first.rfind("student.", 0) == 0) {
    table.restrict_to({"student.encoder.hidden.weight", "student.encoder.hidden.bias",
                       "student.encoder.output.weight", "student.encoder.output.bias",
                       "student.prompt", "student.projector.weight", "student.projector.bias",
                       "student.attention.query.weight", "student.attention.query.bias",
                       "student.attention.key.weight", "student.attention.key.bias",
                       "student.attention.value.weight", "student.attention.value.bias",
                       "student.attention.alpha", "student.text_features"});
    LoadedStudent out{{}, cfg};
    auto& m = out.model;
    m.encoder.hidden = table.take_linear("student.encoder.hidden", true);
    m.encoder.output = table.take_linear("student.encoder.output", true);
    m.prompt = table.take("student.prompt", true);
    m.projector = table.take_linear("student.projector", true);
    m.attention.query = table.take_linear("student.attention.query", true);
    m.attention.key = table.take_linear("student.attention.key", true);
    m.attention.value = table.take_linear("student.attention.value", true);
    m.attention.alpha = table.take("student.attention.alpha", true);
    m.attention.scale = cfg.resolved_attn_scale();
    m.text_features = table.take("student.text_features", false);
    m.use_attention = cfg.eduattn;
    m.temperature = cfg.tau;
    check_chain(m.encoder.output.in_features() == m.encoder.hidden.out_features(), "student encoder");
    check_chain(m.prompt.rank() == 1 && m.prompt.numel() < m.encoder.input_width(), "student prompt");
    check_chain(m.projector.in_features() == m.encoder.feature_dim(), "student projector");
    check_chain(m.attention.alpha.numel() == 1, "attention gate");
    check_chain(m.text_features.rank() == 2 &&
                    m.text_features.dim(1) == m.projector.out_features(),
                "student text features");
    return out;
  }
  throw FormatError("unknown tensor name '" + first + "'", c.entries.front().offset);
}

void save_checkpoint(const std::filesystem::path& path, const TeacherModel& model,
                     const TrainConfig& cfg) {
  write_file(path, encode_checkpoint(to_checkpoint(model, cfg)));
}

void save_checkpoint(const std::filesystem::path& path, const StudentModel& model,
                     const TrainConfig& cfg) {
  write_file(path, encode_checkpoint(to_checkpoint(model, cfg)));
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  return model_from_checkpoint(decode_checkpoint(read_file(path)));
}

LoadedTeacher load_teacher(const std::filesystem::path& path) {
  auto loaded = load_checkpoint(path);
  if (auto* t = std::get_if<LoadedTeacher>(&loaded)) return std::move(*t);
  throw FormatError(path.string() + " holds a student, expected a teacher", 0);
}

LoadedStudent load_student(const std::filesystem::path& path) {
  auto loaded = load_checkpoint(path);
  if (auto* s = std::get_if<LoadedStudent>(&loaded)) return std::move(*s);
  throw FormatError(path.string() + " holds a teacher, expected a student", 0);
}

}  // namespace comkd
