#include "openadapt/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "openadapt/text_io.hpp"

namespace openadapt {

std::string_view domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain parse_domain(std::string_view name) {
  if (name == "source") return Domain::source;
  if (name == "target") return Domain::target;
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::osda: return "osda";
    case Scenario::opda: return "opda";
    case Scenario::pda: return "pda";
    case Scenario::closed: return "closed";
  }
  throw std::invalid_argument("unknown scenario");
}

Scenario parse_scenario(std::string_view name) {
  if (name == "osda") return Scenario::osda;
  if (name == "opda") return Scenario::opda;
  if (name == "pda") return Scenario::pda;
  if (name == "closed") return Scenario::closed;
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- specs

void SplitSpec::validate() const {
  if (shared == 0) throw std::invalid_argument("split: at least one shared class is required");
}

Scenario SplitSpec::scenario() const {
  if (src_private == 0 && tgt_private > 0) return Scenario::osda;
  if (src_private > 0 && tgt_private > 0) return Scenario::opda;
  if (src_private > 0) return Scenario::pda;
  return Scenario::closed;
}

std::vector<int> SplitSpec::source_labels() const {
  std::vector<int> out(shared + src_private);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<int> SplitSpec::target_labels() const {
  std::vector<int> out(shared);
  std::iota(out.begin(), out.end(), 0);
  for (std::size_t i = 0; i < tgt_private; ++i) {
    out.push_back(static_cast<int>(shared + src_private + i));
  }
  return out;
}

SplitSpec default_split(Scenario s) {
  switch (s) {
    case Scenario::osda: return {4, 0, 3};
    case Scenario::opda: return {4, 2, 3};
    case Scenario::pda: return {4, 3, 0};
    case Scenario::closed: return {4, 0, 0};
  }
  throw std::invalid_argument("unknown scenario");
}

void ShiftSpec::validate() const {
  if (dims < 2) throw std::invalid_argument("shift: dims must be >= 2");
  if (per_class_n == 0) throw std::invalid_argument("shift: per_class_n must be >= 1");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("shift: noise_sigma must be >= 0");
  if (!(class_sep > 0.0)) throw std::invalid_argument("shift: class_sep must be > 0");
  if (translation.size() > dims) throw std::invalid_argument("shift: translation longer than dims");
  if (!scale.empty() && scale.size() != dims) {
    throw std::invalid_argument("shift: scale must be empty or have dims entries");
  }
}

void ShiftSpec::apply(std::span<double> point) const {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const double x0 = point[0];
  const double x1 = point[1];
  point[0] = c * x0 - s * x1;
  point[1] = s * x0 + c * x1;
  for (std::size_t k = 0; k < point.size(); ++k) {
    if (!scale.empty()) point[k] *= scale[k];
    if (k < translation.size()) point[k] += translation[k];
  }
}

// ---------------------------------------------------------------- bundles

void DatasetBundle::validate() const {
  if (x.rank() != 2 || x.rows() != y.size()) {
    throw std::invalid_argument("dataset: feature rows and labels disagree");
  }
  const std::set<int> allowed(label_set.begin(), label_set.end());
  for (int label : y) {
    if (!allowed.count(label)) {
      throw FormatError("dataset: label " + std::to_string(label) + " outside declared label set");
    }
  }
}

bool bitwise_equal(const DatasetBundle& a, const DatasetBundle& b) {
  if (a.domain != b.domain || a.y != b.y || a.label_set != b.label_set) return false;
  if (a.x.shape() != b.x.shape()) return false;
  const auto xa = a.x.data();
  const auto xb = b.x.data();
  for (std::size_t i = 0; i < xa.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(xa[i]) != std::bit_cast<std::uint64_t>(xb[i])) return false;
  }
  return true;
}

std::vector<std::vector<double>> class_prototypes(const SplitSpec& split, const ShiftSpec& shift,
                                                  std::uint64_t seed) {
  const std::size_t total = split.total();
  const std::size_t n_source = split.shared + split.src_private;
  if (shift.dims < 2 + split.tgt_private) {
    throw std::invalid_argument("prototypes: dims must be at least 2 + tgt_private");
  }
  Rng rng = make_rng(seed, "prototypes");
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double phase = phase_dist(rng);

  std::vector<std::vector<double>> protos(total, std::vector<double>(shift.dims, 0.0));
  for (std::size_t c = 0; c < n_source; ++c) {
    const double angle =
        phase + 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_source);
    protos[c][0] = shift.class_sep * std::cos(angle);
    protos[c][1] = shift.class_sep * std::sin(angle);
  }
  for (std::size_t c = n_source; c < total; ++c) protos[c][2 + (c - n_source)] = shift.class_sep;
  return protos;
}

namespace {

DatasetBundle sample_domain(const std::vector<std::vector<double>>& protos,
                            const std::vector<int>& labels, const ShiftSpec& shift, Domain domain,
                            Rng& rng) {
  const std::size_t dims = shift.dims;
  const std::size_t n = labels.size() * shift.per_class_n;
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> x(n * dims);
  std::vector<int> y(n);
  std::vector<double> point(dims);
  std::size_t k = 0;
  for (int label : labels) {
    for (std::size_t i = 0; i < shift.per_class_n; ++i, ++k) {
      const auto& proto = protos[static_cast<std::size_t>(label)];
      for (std::size_t d = 0; d < dims; ++d) point[d] = proto[d] + shift.noise_sigma * noise(rng);
      if (domain == Domain::target) shift.apply(point);
      const std::size_t row = order[k];
      std::copy(point.begin(), point.end(), x.begin() + static_cast<std::ptrdiff_t>(row * dims));
      y[row] = label;
    }
  }
  return DatasetBundle{Tensor::from({n, dims}, std::move(x)), std::move(y), labels, domain};
}

}  // namespace

std::pair<DatasetBundle, DatasetBundle> generate(const SplitSpec& split, const ShiftSpec& shift,
                                                 std::uint64_t seed) {
  split.validate();
  shift.validate();
  const auto protos = class_prototypes(split, shift, seed);
  Rng src_rng = make_rng(seed, "source-samples");
  Rng tgt_rng = make_rng(seed, "target-samples");
  DatasetBundle source = sample_domain(protos, split.source_labels(), shift, Domain::source, src_rng);
  DatasetBundle target = sample_domain(protos, split.target_labels(), shift, Domain::target, tgt_rng);
  return {std::move(source), std::move(target)};
}

// ---------------------------------------------------------------- file I/O

std::string format_dataset(const DatasetBundle& bundle) {
  bundle.validate();
  std::ostringstream os;
  os << "openadapt-dataset v1 dims=" << bundle.dims() << " n=" << bundle.size()
     << " domain=" << domain_name(bundle.domain) << " labels=";
  for (std::size_t i = 0; i < bundle.label_set.size(); ++i) {
    if (i) os << ',';
    os << bundle.label_set[i];
  }
  os << '\n';
  const std::size_t dims = bundle.dims();
  const auto x = bundle.x.data();
  for (std::size_t r = 0; r < bundle.size(); ++r) {
    for (std::size_t c = 0; c < dims; ++c) os << format_double(x[r * dims + c]) << ',';
    os << bundle.y[r] << '\n';
  }
  return os.str();
}

DatasetBundle parse_dataset(std::string_view text) {
  auto lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("dataset: empty file");

  std::vector<std::string_view> header;
  for (auto f : split(trim(lines[0]), ' ')) {
    if (!f.empty()) header.push_back(f);
  }
  if (header.size() != 6 || header[0] != "openadapt-dataset" || header[1] != "v1") {
    throw FormatError("dataset: malformed header");
  }
  auto value_of = [&](std::size_t i, std::string_view key) {
    const auto f = header[i];
    if (f.substr(0, key.size()) != key || f.size() <= key.size() || f[key.size()] != '=') {
      throw FormatError("dataset: header field '" + std::string(key) + "' missing");
    }
    return f.substr(key.size() + 1);
  };
  const auto dims_ll = parse_int(value_of(2, "dims"));
  const auto n_ll = parse_int(value_of(3, "n"));
  if (dims_ll <= 0 || n_ll < 0) throw FormatError("dataset: bad dims or n");
  const auto dims = static_cast<std::size_t>(dims_ll);
  const auto n = static_cast<std::size_t>(n_ll);
  Domain domain;
  try {
    domain = parse_domain(value_of(4, "domain"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  std::vector<int> label_set;
  for (auto f : split(value_of(5, "labels"), ',')) label_set.push_back(static_cast<int>(parse_int(f)));

  if (lines.size() != n + 1) {
    throw FormatError("dataset: header declares " + std::to_string(n) + " rows, found " +
                      std::to_string(lines.size() - 1));
  }
  std::vector<double> x(n * dims);
  std::vector<int> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto f = split(trim(lines[r + 1]), ',');
    if (f.size() != dims + 1) throw FormatError("dataset: row " + std::to_string(r) + " width");
    for (std::size_t c = 0; c < dims; ++c) x[r * dims + c] = parse_double(f[c]);
    y[r] = static_cast<int>(parse_int(f[dims]));
  }
  DatasetBundle bundle{Tensor::from({n, dims}, std::move(x)), std::move(y), std::move(label_set), domain};
  bundle.validate();
  return bundle;
}

void save_dataset(const DatasetBundle& bundle, const std::string& path) {
  write_file(path, format_dataset(bundle));
}

DatasetBundle load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

// ---------------------------------------------------------------- sampling

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t dims = x.cols();
  std::vector<double> out(rows.size() * dims);
  const auto src = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[r] * dims), dims,
                out.begin() + static_cast<std::ptrdiff_t>(r * dims));
  }
  return Tensor::from({rows.size(), dims}, std::move(out));
}

ClassBalancedSampler::ClassBalancedSampler(const DatasetBundle& bundle, std::size_t batch_size,
                                           std::uint64_t seed)
    : bundle_(&bundle), batch_size_(batch_size), rng_(seed) {
  if (batch_size == 0) throw std::invalid_argument("sampler: batch size must be >= 1");
  for (int label : bundle.label_set) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < bundle.size(); ++i) {
      if (bundle.y[i] == label) members.push_back(i);
    }
    if (members.empty()) {
      throw std::invalid_argument("sampler: class " + std::to_string(label) + " has no samples");
    }
    std::shuffle(members.begin(), members.end(), rng_);
    per_class_.push_back(std::move(members));
  }
  cursor_.assign(per_class_.size(), 0);
}

Batch ClassBalancedSampler::next() {
  const std::size_t classes = per_class_.size();
  const std::size_t base = batch_size_ / classes;
  const std::size_t extra = batch_size_ % classes;
  Batch batch;
  batch.indices.reserve(batch_size_);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t offset = (c + classes - rotation_ % classes) % classes;
    const std::size_t count = base + (offset < extra ? 1 : 0);
    auto& members = per_class_[c];
    for (std::size_t i = 0; i < count; ++i) {
      if (cursor_[c] == members.size()) {
        std::shuffle(members.begin(), members.end(), rng_);
        cursor_[c] = 0;
      }
      batch.indices.push_back(members[cursor_[c]++]);
    }
  }
  rotation_ += extra;
  batch.x = gather_rows(bundle_->x, batch.indices);
  return batch;
}

UniformSampler::UniformSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(std::min(batch_size, n)), rng_(seed), order_(n) {
  if (n == 0 || batch_size == 0) throw std::invalid_argument("sampler: empty data or batch");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::vector<std::size_t> UniformSampler::next() {
  if (cursor_ + batch_size_ > n_) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return out;
}

std::size_t UniformSampler::epoch_length() const { return n_ / batch_size_; }

}  // namespace openadapt
