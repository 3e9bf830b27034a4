#include "hexreg/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "hexreg/rng.hpp"

namespace hexreg {

void GenParams::validate() const {
  require(n_super >= 1 && classes_per_super >= 1 && samples_per_class >= 1 && input_dim >= 1, ErrorCode::BadParams,
          "counts and input_dim must be >= 1");
  require(sigma_sample > 0, ErrorCode::BadParams, "violated 0 < sigma_sample");
  require(sigma_sample <= sigma_class, ErrorCode::BadParams, "violated sigma_sample <= sigma_class");
  require(sigma_class <= sigma_super, ErrorCode::BadParams, "violated sigma_class <= sigma_super");
}

namespace data {

namespace {

enum Level : std::uint64_t { kSuper = 1, kClass = 2, kSample = 3 };

Vector gaussian(CounterRng rng, Index dim, double sigma) {
  Vector v(dim);
  for (Index k = 0; k < dim; ++k) v(k) = sigma * rng.normal();
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view cell, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  require(ec == std::errc() && ptr == cell.data() + cell.size(), ErrorCode::SchemaError,
          "line " + std::to_string(line_no) + ": non-numeric cell '" + std::string(cell) + "'");
  return value;
}

}  // namespace

HierarchicalDataset generate(const GenParams& p) {
  p.validate();
  const Index dim = p.input_dim;
  HierarchicalDataset d;
  d.meta = p;
  d.x.resize(p.n_samples(), dim);
  d.class_labels.reserve(static_cast<std::size_t>(p.n_samples()));
  d.superclass_labels.reserve(static_cast<std::size_t>(p.n_samples()));
  Index row = 0;
  for (int s = 0; s < p.n_super; ++s) {
    const auto us = static_cast<std::uint64_t>(s);
    const Vector mu_s = gaussian(CounterRng::stream(p.seed, {kSuper, us}), dim, p.sigma_super);
    for (int c = 0; c < p.classes_per_super; ++c) {
      const auto uc = static_cast<std::uint64_t>(c);
      const Vector mu_c = mu_s + gaussian(CounterRng::stream(p.seed, {kClass, us, uc}), dim, p.sigma_class);
      for (int k = 0; k < p.samples_per_class; ++k) {
        const auto uk = static_cast<std::uint64_t>(k);
        d.x.row(row++) = (mu_c + gaussian(CounterRng::stream(p.seed, {kSample, us, uc, uk}), dim, p.sigma_sample))
                             .transpose();
        d.class_labels.push_back(s * p.classes_per_super + c);
        d.superclass_labels.push_back(s);
      }
    }
  }
  return d;
}

Vector augment(const Eigen::Ref<const Vector>& x_row, double noise_sigma, double mask_prob, std::uint64_t seed) {
  require(noise_sigma >= 0, ErrorCode::BadParams, "noise_sigma must be >= 0");
  require(mask_prob >= 0 && mask_prob < 1, ErrorCode::BadParams, "mask_prob must lie in [0, 1)");
  CounterRng noise(CounterRng::derive(seed, {1}));
  CounterRng drop(CounterRng::derive(seed, {2}));
  Vector out = x_row;
  if (noise_sigma > 0)
    for (Index k = 0; k < out.size(); ++k) out(k) += noise_sigma * noise.normal();
  if (mask_prob > 0)
    for (Index k = 0; k < out.size(); ++k)
      if (drop.uniform() < mask_prob) out(k) = 0.0;
  return out;
}

void save_csv(const HierarchicalDataset& d, const std::filesystem::path& path) {
  require(static_cast<Index>(d.class_labels.size()) == d.size() &&
              static_cast<Index>(d.superclass_labels.size()) == d.size(),
          ErrorCode::SchemaError, "label count does not match rows");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  for (Index k = 0; k < d.dim(); ++k) out << 'f' << k << ',';
  out << "class,superclass\n";
  char buf[32];
  for (Index i = 0; i < d.size(); ++i) {
    for (Index k = 0; k < d.dim(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", d.x(i, k));
      out << buf << ',';
    }
    out << d.class_labels[static_cast<std::size_t>(i)] << ',' << d.superclass_labels[static_cast<std::size_t>(i)]
        << '\n';
  }
  require(out.good(), ErrorCode::IoError, "write to " + path.string() + " failed");
}

HierarchicalDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaError, "empty file " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split(line);
  std::vector<int> feature_col;  // feature index -> column
  int class_col = -1;
  int super_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string_view h = header[c];
    if (h == "class") class_col = static_cast<int>(c);
    else if (h == "superclass") super_col = static_cast<int>(c);
    else if (h.size() >= 2 && h[0] == 'f') {
      const auto idx = parse_number<int>(h.substr(1), 1);
      require(idx >= 0, ErrorCode::SchemaError, "bad feature column '" + std::string(h) + "'");
      if (feature_col.size() <= static_cast<std::size_t>(idx)) feature_col.resize(static_cast<std::size_t>(idx) + 1, -1);
      require(feature_col[static_cast<std::size_t>(idx)] == -1, ErrorCode::SchemaError,
              "duplicate column '" + std::string(h) + "'");
      feature_col[static_cast<std::size_t>(idx)] = static_cast<int>(c);
    } else {
      fail(ErrorCode::SchemaError, "unexpected column '" + std::string(h) + "'");
    }
  }
  require(class_col >= 0, ErrorCode::SchemaError, "missing 'class' column");
  require(super_col >= 0, ErrorCode::SchemaError, "missing 'superclass' column");
  require(!feature_col.empty(), ErrorCode::SchemaError, "no feature columns");
  for (std::size_t k = 0; k < feature_col.size(); ++k)
    require(feature_col[k] >= 0, ErrorCode::SchemaError, "missing column 'f" + std::to_string(k) + "'");

  std::vector<double> values;
  HierarchicalDataset d;
  std::size_t line_no = 1;
  Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    require(cells.size() == header.size(), ErrorCode::SchemaError,
            "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    for (int c : feature_col) {
      const double v = parse_number<double>(cells[static_cast<std::size_t>(c)], line_no);
      require(std::isfinite(v), ErrorCode::SchemaError, "line " + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
    }
    d.class_labels.push_back(parse_number<int>(cells[static_cast<std::size_t>(class_col)], line_no));
    d.superclass_labels.push_back(parse_number<int>(cells[static_cast<std::size_t>(super_col)], line_no));
    ++rows;
  }
  const auto dim = static_cast<Index>(feature_col.size());
  d.x = Eigen::Map<const Matrix>(values.data(), rows, dim);
  return d;
}

}  // namespace data
}  // namespace hexreg
