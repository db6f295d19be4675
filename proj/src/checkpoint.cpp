#include "openadapt/checkpoint.hpp"

#include <bit>
#include <sstream>

#include "openadapt/text_io.hpp"

namespace openadapt {

namespace {

void write_tensor(std::ostringstream& os, const std::string& name, std::size_t rows,
                  std::size_t cols, std::span<const double> values) {
  os << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) os << ' ';
      os << format_double(values[r * cols + c]);
    }
    os << '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : lines_(split(text, '\n')) {
    while (!lines_.empty() && trim(lines_.back()).empty()) lines_.pop_back();
  }

  std::vector<std::string_view> next_fields(std::string_view expect_keyword) {
    if (pos_ >= lines_.size()) {
      throw FormatError("checkpoint truncated: expected '" + std::string(expect_keyword) + "'");
    }
    auto fields = tokens(lines_[pos_++]);
    if (!expect_keyword.empty() && (fields.empty() || fields[0] != expect_keyword)) {
      throw FormatError("checkpoint line " + std::to_string(pos_) + ": expected '" +
                        std::string(expect_keyword) + "'");
    }
    return fields;
  }

  static std::vector<std::string_view> tokens(std::string_view line) {
    std::vector<std::string_view> out;
    for (auto f : split(trim(line), ' ')) {
      if (!f.empty()) out.push_back(f);
    }
    return out;
  }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
};

std::size_t to_size(std::string_view s) {
  const long long v = parse_int(s);
  if (v < 0) throw FormatError("negative size in checkpoint");
  return static_cast<std::size_t>(v);
}

void read_tensor(LineReader& in, const std::string& name, std::size_t rows, std::size_t cols,
                 std::span<double> dest) {
  auto head = in.next_fields("tensor");
  if (head.size() != 4 || head[1] != name || to_size(head[2]) != rows || to_size(head[3]) != cols) {
    throw FormatError("checkpoint: expected tensor " + name + " " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    auto fields = in.next_fields("");
    if (fields.size() != cols) throw FormatError("checkpoint: tensor " + name + " row width");
    for (std::size_t c = 0; c < cols; ++c) dest[r * cols + c] = parse_double(fields[c]);
  }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const TwoHeadModel& m = ckpt.model;
  const Architecture& a = m.architecture();
  std::ostringstream os;
  os << kCheckpointMagic << '\n';
  os << "stage " << ckpt.stage << '\n';
  os << "architecture " << a.input_dim << ' ' << a.bottleneck << ' ' << a.classes << " hidden "
     << a.hidden.size();
  for (std::size_t w : a.hidden) os << ' ' << w;
  os << '\n';
  os << "class_ids";
  for (int id : ckpt.class_ids) os << ' ' << id;
  os << '\n';
  os << "loss " << format_double(ckpt.loss.lambda) << ' ' << format_double(ckpt.loss.alpha) << ' '
     << format_double(ckpt.loss.T) << '\n';
  os << "bn " << format_double(m.bn().momentum) << ' ' << format_double(m.bn().eps) << '\n';
  if (ckpt.w0) {
    os << "band " << format_double(*ckpt.w0) << ' ' << format_double(ckpt.rho.value_or(0.0)) << '\n';
  } else {
    os << "band none\n";
  }
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    const Linear& l = m.layers()[i];
    write_tensor(os, "layer." + std::to_string(i) + ".weight", l.weight.rows(), l.weight.cols(),
                 l.weight.data());
    write_tensor(os, "layer." + std::to_string(i) + ".bias", 1, l.bias.cols(), l.bias.data());
  }
  const std::size_t d = a.bottleneck;
  write_tensor(os, "bn.gamma", 1, d, m.bn().gamma.data());
  write_tensor(os, "bn.beta", 1, d, m.bn().beta.data());
  write_tensor(os, "bn.running_mean", 1, d, m.bn().running_mean);
  write_tensor(os, "bn.running_var", 1, d, m.bn().running_var);
  write_tensor(os, "head.1", d, a.classes, m.head1().data());
  write_tensor(os, "head.2", d, a.classes, m.head2().data());
  os << "end\n";
  return os.str();
}

Checkpoint parse_checkpoint(std::string_view text) {
  LineReader in(text);
  auto magic = in.next_fields("openadapt-checkpoint");
  if (magic.size() != 2 || magic[1] != "v1") throw FormatError("unsupported checkpoint version");

  auto stage = in.next_fields("stage");
  if (stage.size() != 2) throw FormatError("checkpoint: malformed stage line");

  auto arch_f = in.next_fields("architecture");
  if (arch_f.size() < 6 || arch_f[4] != "hidden") {
    throw FormatError("checkpoint: malformed architecture line");
  }
  Architecture arch;
  arch.input_dim = to_size(arch_f[1]);
  arch.bottleneck = to_size(arch_f[2]);
  arch.classes = to_size(arch_f[3]);
  const std::size_t n_hidden = to_size(arch_f[5]);
  if (arch_f.size() != 6 + n_hidden) throw FormatError("checkpoint: hidden width count");
  arch.hidden.clear();
  for (std::size_t i = 0; i < n_hidden; ++i) arch.hidden.push_back(to_size(arch_f[6 + i]));

  auto ids = in.next_fields("class_ids");
  if (ids.size() != arch.classes + 1) throw FormatError("checkpoint: class_ids count");
  std::vector<int> class_ids;
  for (std::size_t i = 1; i < ids.size(); ++i) class_ids.push_back(static_cast<int>(parse_int(ids[i])));

  auto loss_f = in.next_fields("loss");
  if (loss_f.size() != 4) throw FormatError("checkpoint: malformed loss line");
  LossConfig loss{parse_double(loss_f[1]), parse_double(loss_f[2]), parse_double(loss_f[3])};

  auto bn_f = in.next_fields("bn");
  if (bn_f.size() != 3) throw FormatError("checkpoint: malformed bn line");

  auto band_f = in.next_fields("band");
  std::optional<double> w0, rho;
  if (band_f.size() == 3) {
    w0 = parse_double(band_f[1]);
    rho = parse_double(band_f[2]);
  } else if (band_f.size() != 2 || band_f[1] != "none") {
    throw FormatError("checkpoint: malformed band line");
  }

  Checkpoint ckpt{TwoHeadModel(arch, InitSeeds{}), loss, std::move(class_ids), w0, rho,
                  std::string(stage[1])};
  TwoHeadModel& m = ckpt.model;
  m.bn().momentum = parse_double(bn_f[1]);
  m.bn().eps = parse_double(bn_f[2]);
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    Linear& l = m.layers()[i];
    read_tensor(in, "layer." + std::to_string(i) + ".weight", l.weight.rows(), l.weight.cols(),
                l.weight.mutable_data());
    read_tensor(in, "layer." + std::to_string(i) + ".bias", 1, l.bias.cols(), l.bias.mutable_data());
  }
  const std::size_t d = arch.bottleneck;
  read_tensor(in, "bn.gamma", 1, d, m.bn().gamma.mutable_data());
  read_tensor(in, "bn.beta", 1, d, m.bn().beta.mutable_data());
  read_tensor(in, "bn.running_mean", 1, d, m.bn().running_mean);
  read_tensor(in, "bn.running_var", 1, d, m.bn().running_var);
  read_tensor(in, "head.1", d, arch.classes, m.head1().mutable_data());
  read_tensor(in, "head.2", d, arch.classes, m.head2().mutable_data());
  in.next_fields("end");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

std::uint64_t model_checksum(const TwoHeadModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::span<const double> values) {
    for (double v : values) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const Tensor& p : model.parameters()) feed(p.data());
  feed(model.bn().running_mean);
  feed(model.bn().running_var);
  return h;
}

}  // namespace openadapt
