#pragma once

// User-base ingestion: IDX (MNIST) parsing with transparent gzip support,
// delimited-text matrix persistence and stratified subsampling.

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "audex/error.hpp"
#include "audex/matrix.hpp"
#include "audex/random.hpp"

namespace audex {

using UserId = std::int64_t;

struct UserBase {
  std::vector<UserId> ids;
  Matrix features;
  std::optional<std::vector<int>> labels;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  // Throws ValidationError when any invariant is broken.
  void validate() const {
    if (ids.empty()) throw ValidationError("user base is empty");
    if (features.cols() == 0) throw ValidationError("user base has zero feature columns");
    if (features.rows() != ids.size())
      throw ValidationError("user base has " + std::to_string(ids.size()) + " ids but " +
                            std::to_string(features.rows()) + " feature rows");
    if (labels && labels->size() != ids.size())
      throw ValidationError("user base has " + std::to_string(ids.size()) + " ids but " +
                            std::to_string(labels->size()) + " labels");
    std::unordered_set<UserId> seen;
    seen.reserve(ids.size());
    for (UserId id : ids) {
      if (id < 0) throw ValidationError("negative user id " + std::to_string(id));
      if (!seen.insert(id).second) throw ValidationError("duplicate user id " + std::to_string(id));
    }
    for (double v : features.data())
      if (!std::isfinite(v)) throw ValidationError("user base contains a non-finite feature value");
  }
};

struct LabelVector {
  std::vector<std::uint8_t> values;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// ---------------------------------------------------------------------------
// gzip

inline bool is_gzip(std::span<const std::uint8_t> bytes) noexcept {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  // 16 + MAX_WBITS selects the gzip wrapper.
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gzip: inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(reinterpret_cast<const Bytef*>(bytes.data()));
  zs.avail_in = static_cast<uInt>(bytes.size());

  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int ret = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip: corrupt or truncated stream");
    }
    out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
  } while (ret != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
  inflateEnd(&zs);
  if (ret != Z_STREAM_END) throw FormatError("gzip: truncated stream");
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// IDX

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

// Returns the payload (after the header) and the header dims.
inline std::vector<std::uint32_t> idx_header(std::span<const std::uint8_t> bytes,
                                             std::uint32_t magic, std::size_t ndims) {
  const std::size_t header = 4 * (1 + ndims);
  if (bytes.size() < 4)
    throw LengthError("IDX header truncated: need 4 bytes for magic, have " +
                      std::to_string(bytes.size()));
  const std::uint32_t got = read_be32(bytes, 0);
  if (got != magic)
    throw FormatError("IDX magic mismatch: expected " + hex32(magic) + ", got " + hex32(got));
  if (bytes.size() < header)
    throw LengthError("IDX header truncated: need " + std::to_string(header) + " bytes, have " +
                      std::to_string(bytes.size()));
  std::vector<std::uint32_t> dims(ndims);
  for (std::size_t i = 0; i < ndims; ++i) dims[i] = read_be32(bytes, 4 + 4 * i);
  return dims;
}

}  // namespace detail

// Parses an IDX3 unsigned-byte image file. Pixels are scaled to [0, 1] and
// each image becomes one row; ids are 0..count-1 in file order.
inline UserBase parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (is_gzip(bytes)) {
    const auto raw = gunzip(bytes);
    return parse_idx_images(raw);
  }
  const auto dims = detail::idx_header(bytes, kIdxImageMagic, 3);
  const std::size_t count = dims[0];
  const std::size_t d = std::size_t(dims[1]) * dims[2];
  const std::size_t need = 16 + count * d;
  if (bytes.size() < need)
    throw LengthError("IDX image payload truncated: expected " + std::to_string(need) +
                      " bytes, have " + std::to_string(bytes.size()));
  if (d == 0) throw FormatError("IDX image file has zero-sized images");

  UserBase base;
  base.ids.resize(count);
  for (std::size_t i = 0; i < count; ++i) base.ids[i] = static_cast<UserId>(i);
  std::vector<double> px(count * d);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = bytes[16 + i] / 255.0;
  base.features = Matrix(count, d, std::move(px));
  return base;
}

inline LabelVector parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (is_gzip(bytes)) {
    const auto raw = gunzip(bytes);
    return parse_idx_labels(raw);
  }
  const auto dims = detail::idx_header(bytes, kIdxLabelMagic, 1);
  const std::size_t count = dims[0];
  if (bytes.size() < 8 + count)
    throw LengthError("IDX label payload truncated: expected " + std::to_string(8 + count) +
                      " bytes, have " + std::to_string(bytes.size()));
  LabelVector out;
  out.values.assign(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  return out;
}

// Loads an image file and its label file into one labelled user base.
inline UserBase load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  UserBase base = parse_idx_images(read_file_bytes(images_path));
  const LabelVector labels = parse_idx_labels(read_file_bytes(labels_path));
  if (labels.values.size() != base.size())
    throw LengthError(labels_path + " has " + std::to_string(labels.values.size()) +
                      " labels for " + std::to_string(base.size()) + " images");
  base.labels = std::vector<int>(labels.values.begin(), labels.values.end());
  return base;
}

// Concatenates train and test sets; test ids are offset by the train size.
// An empty test set (no rows) returns train unchanged.
inline UserBase merge_train_test(const UserBase& train, const UserBase& test) {
  if (test.size() == 0) return train;
  if (train.dim() != test.dim())
    throw DimensionError("cannot merge user bases of dimension " + std::to_string(train.dim()) +
                         " and " + std::to_string(test.dim()));
  if (train.labels.has_value() != test.labels.has_value())
    throw ValidationError("cannot merge a labelled with an unlabelled user base");

  UserBase out = train;
  const UserId offset = static_cast<UserId>(train.size());
  for (UserId id : test.ids) out.ids.push_back(id + offset);
  auto& data = out.features.data();
  data.insert(data.end(), test.features.data().begin(), test.features.data().end());
  out.features = Matrix(train.size() + test.size(), train.dim(), std::move(data));
  if (out.labels) out.labels->insert(out.labels->end(), test.labels->begin(), test.labels->end());
  return out;
}

// Draws exactly `per_class` members of every class without replacement.
// Output rows keep their original ids and are ordered by source position.
inline UserBase stratified_subsample(const UserBase& base, std::size_t per_class,
                                     std::uint64_t rng_seed) {
  if (!base.labels) throw ValidationError("stratified_subsample requires labels");
  if (per_class == 0) throw ValidationError("per_class must be positive");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < base.size(); ++i) by_class[(*base.labels)[i]].push_back(i);

  std::vector<std::size_t> keep;
  for (const auto& [cls, rows] : by_class) {
    if (rows.size() < per_class)
      throw CapacityError("class " + std::to_string(cls) + " has " + std::to_string(rows.size()) +
                          " members, fewer than per_class=" + std::to_string(per_class));
    Rng rng = make_rng(derive_seed(rng_seed, {static_cast<std::uint64_t>(cls)}));
    for (std::size_t pick : sample_without_replacement(rows.size(), per_class, rng))
      keep.push_back(rows[pick]);
  }
  std::sort(keep.begin(), keep.end());

  UserBase out;
  out.labels.emplace();
  std::vector<double> data;
  data.reserve(keep.size() * base.dim());
  for (std::size_t r : keep) {
    out.ids.push_back(base.ids[r]);
    out.labels->push_back((*base.labels)[r]);
    auto row = base.features.row(r);
    data.insert(data.end(), row.begin(), row.end());
  }
  out.features = Matrix(keep.size(), base.dim(), std::move(data));
  return out;
}

// ---------------------------------------------------------------------------
// CSV matrices: header `id,c0,...,c{d-1}[,label]`, values with 17 significant
// digits so that doubles round-trip exactly.

struct MatrixTable {
  std::vector<UserId> ids;
  Matrix matrix;
  std::optional<std::vector<int>> labels;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string write_matrix_csv(std::span<const UserId> ids, const Matrix& m,
                                    const std::vector<int>* labels = nullptr) {
  if (ids.size() != m.rows())
    throw DimensionError("write_matrix_csv: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(m.rows()) + " rows");
  if (labels && labels->size() != m.rows())
    throw DimensionError("write_matrix_csv: label count does not match row count");
  std::string out = "id";
  for (std::size_t c = 0; c < m.cols(); ++c) out += ",c" + std::to_string(c);
  if (labels) out += ",label";
  out += '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += std::to_string(ids[r]);
    for (double v : m.row(r)) {
      out += ',';
      out += format_double(v);
    }
    if (labels) {
      out += ',';
      out += std::to_string((*labels)[r]);
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty())
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) +
                      "' as a number");
  return value;
}

}  // namespace detail

inline MatrixTable read_matrix_csv(std::string_view text) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = nl + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw FormatError("matrix CSV is empty");
  const auto header = detail::split_fields(line);
  if (header.empty() || header[0] != "id") throw FormatError("matrix CSV header must start with 'id'");
  const bool has_labels = header.size() >= 2 && header.back() == "label";
  const std::size_t d = header.size() - 1 - (has_labels ? 1 : 0);
  if (d == 0) throw FormatError("matrix CSV header has no coordinate columns");
  for (std::size_t c = 0; c < d; ++c)
    if (header[1 + c] != "c" + std::to_string(c))
      throw FormatError("matrix CSV header column " + std::to_string(c + 1) + " must be 'c" +
                        std::to_string(c) + "', got '" + std::string(header[1 + c]) + "'");

  MatrixTable out;
  if (has_labels) out.labels.emplace();
  std::vector<double> data;
  std::unordered_set<UserId> seen;
  while (next_line(line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size())
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    const auto id = detail::parse_number<UserId>(fields[0], line_no);
    if (!seen.insert(id).second)
      throw FormatError("line " + std::to_string(line_no) + ": duplicate id " + std::to_string(id));
    out.ids.push_back(id);
    for (std::size_t c = 0; c < d; ++c) {
      const double v = detail::parse_number<double>(fields[1 + c], line_no);
      if (!std::isfinite(v))
        throw FormatError("line " + std::to_string(line_no) + ": non-finite value '" +
                          std::string(fields[1 + c]) + "'");
      data.push_back(v);
    }
    if (has_labels) out.labels->push_back(detail::parse_number<int>(fields.back(), line_no));
  }
  out.matrix = Matrix(out.ids.size(), d, std::move(data));
  return out;
}

inline UserBase to_user_base(MatrixTable table) {
  UserBase base{std::move(table.ids), std::move(table.matrix), std::move(table.labels)};
  base.validate();
  return base;
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed for " + path);
}

inline std::string read_text_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace audex
