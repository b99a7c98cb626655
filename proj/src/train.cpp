#include "psnet/train.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>

namespace psnet {
namespace {

// 0.2f widens to 0.20000000298...; go through the shortest decimal so 0.2 comes back as 0.2.
double widen_decimal(float v) {
  char buf[32];
  const char* end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  double out = 0.0;
  std::from_chars(buf, end, out);
  return out;
}

class ByteWriter {
public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  void le(std::uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return le(4); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (at_ + n > b_.size()) throw FormatError("PSNC: unexpected end of file");
    auto s = b_.subspan(at_, n);
    at_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - at_; }

private:
  std::uint32_t le(int bytes) {
    const auto s = take(static_cast<std::size_t>(bytes));
    std::uint32_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint32_t{s[static_cast<std::size_t>(i)]} << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

} // namespace

MetricsCsv::MetricsCsv(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot write " + path.string());
  out_ << kHeader << '\n' << std::flush;
}

std::string MetricsCsv::format_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + fmt("%.9g", m.train_loss) + "," + fmt("%.9g", m.train_acc) + "," +
         (m.test_acc ? fmt("%.9g", *m.test_acc) : std::string()) + "," + fmt("%.9g", m.lr) + "," +
         fmt("%.3f", m.seconds);
}

void MetricsCsv::append(const EpochMetrics& m) { out_ << format_row(m) << '\n' << std::flush; }

void check_fit_inputs(const HeadConfig& head, const Dataset& train, const Dataset& test) {
  for (const Dataset* ds : {&train, &test}) {
    ds->validate();
    if (ds->dim() != head.input_dim) {
      throw ConfigError("dataset '" + ds->name + "' has D=" + std::to_string(ds->dim()) + " but head input_dim=" +
                        std::to_string(head.input_dim));
    }
    const Label max_label = *std::max_element(ds->labels.begin(), ds->labels.end());
    if (max_label >= head.classes) {
      throw ConfigError("dataset '" + ds->name + "' has label " + std::to_string(max_label) +
                        " but head classes=" + std::to_string(head.classes));
    }
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Head<float>& head) {
  const HeadConfig& c = head.config();
  ByteWriter w;
  w.raw("PSNC", 4);
  w.u16(kPsncVersion);
  w.u8(static_cast<std::uint8_t>(c.variant));
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  w.u32(static_cast<std::uint32_t>(c.hidden));
  w.u16(static_cast<std::uint16_t>(c.depth));
  w.u32(static_cast<std::uint32_t>(c.classes));
  w.f32(static_cast<float>(c.dropout));
  auto layer = [&w](const LinearLayer<float>& l) {
    for (Index i = 0; i < l.weight().size(); ++i) w.f32(l.weight().data()[i]);
    for (Index i = 0; i < l.bias().size(); ++i) w.f32(l.bias()(i));
  };
  for (const auto& l : head.hidden_layers()) layer(l);
  layer(head.classifier());
  return w.take();
}

Head<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), "PSNC", 4) != 0) throw FormatError("PSNC: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kPsncVersion) throw FormatError("PSNC: unsupported version " + std::to_string(version));
  const std::uint8_t variant = r.u8();
  if (variant > static_cast<std::uint8_t>(Variant::Progressive)) {
    throw FormatError("PSNC: unknown variant code " + std::to_string(variant));
  }
  HeadConfig c;
  c.variant = static_cast<Variant>(variant);
  c.input_dim = r.u32();
  c.hidden = r.u32();
  c.depth = r.u16();
  c.classes = r.u32();
  c.dropout = widen_decimal(r.f32());
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("PSNC: ") + e.what());
  }
  const auto expected = static_cast<std::size_t>(param_count(c)) * 4;
  if (r.remaining() != expected) {
    throw FormatError("PSNC: header implies " + std::to_string(expected) + " parameter bytes, file has " +
                      std::to_string(r.remaining()));
  }
  Head<float> head(c);
  auto layer = [&r](LinearLayer<float>& l) {
    for (Index i = 0; i < l.weight().size(); ++i) l.weight().data()[i] = r.f32();
    for (Index i = 0; i < l.bias().size(); ++i) l.bias()(i) = r.f32();
  };
  for (auto& l : head.hidden_layers()) layer(l);
  layer(head.classifier());
  head.set_mode(Mode::Eval);
  return head;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

} // namespace psnet
