#include "latentdr/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "latentdr/errors.hpp"

namespace latentdr {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto res =
      std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory for '" + path.string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace {

/// Whitespace tokenizer over one line at a time.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next_line(std::vector<std::string_view>& tokens) {
    tokens.clear();
    if (pos_ >= text_.size()) return false;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    std::string_view line = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      if (j > i) tokens.push_back(line.substr(i, j - i));
      i = j;
    }
    return true;
  }

  [[nodiscard]] std::size_t line_no() const noexcept { return line_no_; }
  [[nodiscard]] std::size_t offset() const noexcept { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

template <typename T>
T parse_uint(std::string_view text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError("not an integer: '" + std::string(text) + "'");
  }
  return value;
}

void expect_tokens(const std::vector<std::string_view>& tokens, std::size_t n, std::size_t line,
                   const char* what) {
  if (tokens.size() != n) {
    throw ValidationError(std::string(what) + ": line " + std::to_string(line) + " has " +
                          std::to_string(tokens.size()) + " fields, expected " +
                          std::to_string(n));
  }
}

void append_row(std::string& out, std::span<const double> row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i != 0) out += ' ';
    out += format_double(row[i]);
  }
  out += '\n';
}

Tensor read_matrix(LineReader& reader, std::size_t rows, std::size_t cols, const char* what) {
  Tensor m({rows, cols});
  std::vector<std::string_view> tokens;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!reader.next_line(tokens)) throw ValidationError(std::string(what) + ": truncated");
    expect_tokens(tokens, cols, reader.line_no(), what);
    for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = parse_double(tokens[c]);
  }
  return m;
}

}  // namespace

std::string serialize_dataset(const SyntheticDataset& dataset) {
  std::string out;
  out += std::to_string(dataset.classes) + ' ' + std::to_string(dataset.domains) + ' ' +
         std::to_string(dataset.size()) + ' ' + std::to_string(dataset.input_dim) + ' ' +
         std::to_string(dataset.seed) + '\n';
  for (const Sample& s : dataset.samples) {
    out += std::to_string(s.label) + ' ' + std::to_string(s.domain);
    for (const double f : s.features) {
      out += ' ';
      out += format_double(f);
    }
    out += '\n';
  }
  return out;
}

SyntheticDataset parse_dataset(std::string_view text) {
  LineReader reader(text);
  std::vector<std::string_view> tokens;
  if (!reader.next_line(tokens)) throw ValidationError("dataset: empty file");
  expect_tokens(tokens, 5, reader.line_no(), "dataset header");
  SyntheticDataset ds;
  ds.classes = parse_uint<std::size_t>(tokens[0]);
  ds.domains = parse_uint<std::size_t>(tokens[1]);
  const auto n = parse_uint<std::size_t>(tokens[2]);
  ds.input_dim = parse_uint<std::size_t>(tokens[3]);
  ds.seed = parse_uint<std::uint64_t>(tokens[4]);
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!reader.next_line(tokens)) throw ValidationError("dataset: truncated sample list");
    expect_tokens(tokens, ds.input_dim + 2, reader.line_no(), "dataset");
    Sample s;
    s.label = parse_uint<int>(tokens[0]);
    s.domain = parse_uint<int>(tokens[1]);
    if (static_cast<std::size_t>(s.label) >= ds.classes ||
        static_cast<std::size_t>(s.domain) >= ds.domains) {
      throw ValidationError("dataset: line " + std::to_string(reader.line_no()) +
                            " has class/domain out of range");
    }
    s.features.reserve(ds.input_dim);
    for (std::size_t f = 0; f < ds.input_dim; ++f) s.features.push_back(parse_double(tokens[f + 2]));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const SyntheticDataset& dataset) {
  write_file(path, serialize_dataset(dataset));
}

SyntheticDataset read_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path));
}

namespace {

constexpr std::string_view kCheckpointMagic = "LATENTDR-CHECKPOINT 1";

void append_le_double(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    out += static_cast<char>(bits & 0xFFu);
    bits >>= 8;
  }
}

double read_le_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const ParameterRegistry& registry) {
  std::string out(kCheckpointMagic);
  out += "\nparams " + std::to_string(registry.size()) + '\n';
  for (const Parameter& p : registry) {
    out += p.name + " f64 " + std::to_string(p.tensor.rank());
    for (const std::size_t s : p.tensor.shape()) out += ' ' + std::to_string(s);
    out += '\n';
  }
  out += "data\n";
  for (const Parameter& p : registry) {
    for (const double v : p.tensor.values()) append_le_double(out, v);
  }
  return out;
}

std::vector<CheckpointEntry> parse_checkpoint(std::string_view bytes) {
  LineReader reader(bytes);
  std::vector<std::string_view> tokens;
  std::string_view first = bytes.substr(0, bytes.find('\n'));
  if (first != kCheckpointMagic) throw ValidationError("checkpoint: bad magic line");
  reader.next_line(tokens);
  if (!reader.next_line(tokens) || tokens.size() != 2 || tokens[0] != "params") {
    throw ValidationError("checkpoint: missing params line");
  }
  const auto count = parse_uint<std::size_t>(tokens[1]);
  std::vector<CheckpointEntry> entries;
  std::size_t total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (!reader.next_line(tokens) || tokens.size() < 3) {
      throw ValidationError("checkpoint: malformed manifest line " + std::to_string(reader.line_no()));
    }
    if (tokens[1] != "f64") throw ValidationError("checkpoint: unsupported dtype '" + std::string(tokens[1]) + "'");
    CheckpointEntry e;
    e.name = std::string(tokens[0]);
    const auto rank = parse_uint<std::size_t>(tokens[2]);
    expect_tokens(tokens, 3 + rank, reader.line_no(), "checkpoint manifest");
    for (std::size_t r = 0; r < rank; ++r) e.shape.push_back(parse_uint<std::size_t>(tokens[3 + r]));
    total += shape_numel(e.shape);
    entries.push_back(std::move(e));
  }
  if (!reader.next_line(tokens) || tokens.size() != 1 || tokens[0] != "data") {
    throw ValidationError("checkpoint: missing data marker");
  }
  const std::size_t offset = reader.offset();
  if (bytes.size() != offset + 8 * total) {
    throw ValidationError("checkpoint: expected " + std::to_string(8 * total) +
                          " data bytes, found " + std::to_string(bytes.size() - std::min(bytes.size(), offset)));
  }
  const char* p = bytes.data() + offset;
  for (auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, p += 8) e.values[i] = read_le_double(p);
  }
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, const ParameterRegistry& registry) {
  write_file(path, serialize_checkpoint(registry));
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

void load_checkpoint(const std::vector<CheckpointEntry>& entries, ParameterRegistry& registry) {
  std::size_t matched = 0;
  for (const auto& e : entries) {
    if (!registry.contains(e.name)) throw ValidationError("checkpoint: unknown parameter '" + e.name + "'");
    Parameter& p = registry.get(e.name);
    if (p.tensor.shape() != e.shape) {
      throw DimensionError("checkpoint: parameter '" + e.name + "' has shape " +
                           shape_string(e.shape) + ", model expects " +
                           shape_string(p.tensor.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), p.tensor.data().begin());
    ++matched;
  }
  if (matched != registry.size()) {
    throw ValidationError("checkpoint: covers " + std::to_string(matched) + " of " +
                          std::to_string(registry.size()) + " parameters");
  }
}

std::string serialize_latent_dump(const LatentDump& dump) {
  const std::size_t b = dump.batch();
  const std::size_t d = dump.dim();
  if (dump.z_degraded.shape() != dump.z.shape() || dump.z_restored.shape() != dump.z.shape() ||
      dump.labels.size() != b) {
    throw DimensionError("latent dump: tensor groups disagree in shape");
  }
  std::string out = std::to_string(b) + ' ' + std::to_string(d) + ' ' +
                    std::to_string(dump.classes) + ' ' + std::to_string(dump.seed) + ' ' +
                    std::to_string(dump.step) + '\n';
  for (const Tensor* t : {&dump.z, &dump.z_degraded, &dump.z_restored}) {
    for (std::size_t r = 0; r < b; ++r) append_row(out, t->row(r));
  }
  for (const int label : dump.labels) out += std::to_string(label) + '\n';
  return out;
}

LatentDump parse_latent_dump(std::string_view text) {
  LineReader reader(text);
  std::vector<std::string_view> tokens;
  if (!reader.next_line(tokens)) throw ValidationError("latent dump: empty file");
  expect_tokens(tokens, 5, reader.line_no(), "latent dump header");
  const auto b = parse_uint<std::size_t>(tokens[0]);
  const auto d = parse_uint<std::size_t>(tokens[1]);
  LatentDump dump;
  dump.classes = parse_uint<std::size_t>(tokens[2]);
  dump.seed = parse_uint<std::uint64_t>(tokens[3]);
  dump.step = parse_uint<std::uint64_t>(tokens[4]);
  dump.z = read_matrix(reader, b, d, "latent dump Z");
  dump.z_degraded = read_matrix(reader, b, d, "latent dump Z_d");
  dump.z_restored = read_matrix(reader, b, d, "latent dump Z_r");
  dump.labels.reserve(b);
  for (std::size_t r = 0; r < b; ++r) {
    if (!reader.next_line(tokens)) throw ValidationError("latent dump: truncated labels");
    expect_tokens(tokens, 1, reader.line_no(), "latent dump labels");
    dump.labels.push_back(parse_uint<int>(tokens[0]));
  }
  return dump;
}

void write_latent_dump(const std::filesystem::path& path, const LatentDump& dump) {
  write_file(path, serialize_latent_dump(dump));
}

LatentDump read_latent_dump(const std::filesystem::path& path) {
  return parse_latent_dump(read_file(path));
}

}  // namespace latentdr
