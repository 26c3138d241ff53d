// SPDX-License-Identifier: Apache-2.0
#include "csa/formats.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <system_error>

#include "binary_io.hpp"

namespace csa {

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error("read failed: " + path.string());
  return data;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file_text(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embeddings

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& embeddings) {
  detail::ByteWriter w;
  w.bytes("CSAE");
  w.put<std::uint32_t>(kEmbeddingVersion);
  w.put<std::uint64_t>(embeddings.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(embeddings.dim()));
  w.put<std::uint8_t>(0);
  for (const auto& id : embeddings.ids()) {
    if (id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("embedding id longer than 65535 bytes");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
  }
  w.floats(embeddings.rows().values());
  return std::move(w.buffer());
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect("CSAE", "embedding header");
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kEmbeddingVersion) {
    throw FormatError("unsupported embedding version " + std::to_string(version), version_at);
  }
  const auto n = r.get<std::uint64_t>("row count");
  const auto d = r.get<std::uint32_t>("dimension");
  const auto dtype_at = r.offset();
  const auto dtype = r.get<std::uint8_t>("dtype");
  if (dtype != 0) throw FormatError("unsupported dtype " + std::to_string(dtype), dtype_at);
  r.need(n * 2, "id table");

  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get<std::uint16_t>("id length");
    ids.push_back(r.string(len, "id"));
  }
  const std::uint64_t count = n * d;
  if (d != 0 && count / d != n) throw FormatError("row count overflow", r.offset());
  r.need(count * sizeof(float), "values");
  MatrixF rows(n, d);
  r.floats(std::span<float>(rows.data(), rows.size()), "values");
  if (r.remaining() != 0) throw FormatError("trailing bytes after values", r.offset());
  try {
    return EmbeddingMatrix(std::move(ids), std::move(rows));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), 0);
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& embeddings) {
  detail::write_file_bytes(path, encode_embeddings(embeddings));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(detail::read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Text formats

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

namespace {

struct Token {
  std::string_view text;
  std::uint64_t offset;
};

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Splits the next non-empty line into whitespace-separated tokens.
  bool next(std::vector<Token>& tokens) {
    while (pos_ < text_.size()) {
      const std::size_t end = std::min(text_.find('\n', pos_), text_.size());
      tokens.clear();
      std::size_t i = pos_;
      while (i < end) {
        while (i < end && is_space(text_[i])) ++i;
        const std::size_t start = i;
        while (i < end && !is_space(text_[i])) ++i;
        if (i > start) tokens.push_back({text_.substr(start, i - start), start});
      }
      line_start_ = pos_;
      pos_ = end + 1;
      if (!tokens.empty() && tokens.front().text.front() != '#') return true;
    }
    line_start_ = text_.size();
    return false;
  }

  std::uint64_t line_start() const noexcept { return line_start_; }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
};

template <typename U>
U parse_number(const Token& t, const char* what) {
  U value{};
  auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
  if (ec != std::errc() || ptr != t.text.data() + t.text.size()) {
    throw FormatError(std::string("expected ") + what + ", got '" + std::string(t.text) + "'",
                      t.offset);
  }
  return value;
}

void check_header(LineReader& lines, std::vector<Token>& tokens, std::string_view magic,
                  std::size_t max_tokens) {
  if (!lines.next(tokens) || tokens[0].text != magic) {
    throw FormatError("bad magic, expected '" + std::string(magic) + "'", 0);
  }
  if (tokens.size() < 2 || tokens.size() > max_tokens) {
    throw FormatError("malformed header", 0);
  }
  if (parse_number<int>(tokens[1], "version") != kTextFormatVersion) {
    throw FormatError("unsupported version " + std::string(tokens[1].text), tokens[1].offset);
  }
}

// Reads `count` ids starting at tokens[at]; advances at.
std::vector<std::string> take_ids(const std::vector<Token>& tokens, std::size_t& at,
                                  std::size_t count, std::uint64_t line_start) {
  if (tokens.size() - at < count) {
    throw FormatError("truncated record: expected " + std::to_string(count) + " ids", line_start);
  }
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ids.emplace_back(tokens[at++].text);
  return ids;
}

const std::string& token(const std::string& id) {
  if (id.empty() || id.find_first_of(" \t\r\n") != std::string::npos || id.front() == '#') {
    throw std::invalid_argument("id '" + id + "' cannot be written to a text file");
  }
  return id;
}

}  // namespace

std::string encode_rankings(const RankingSet& rankings) {
  std::string out = "csa-rankings 1";
  if (!rankings.method.empty()) out += " method=" + rankings.method;
  out += '\n';
  for (const auto& list : rankings.lists) {
    out += token(list.query_id);
    out += ' ';
    out += std::to_string(list.entries.size());
    for (const auto& e : list.entries) {
      out += ' ';
      out += token(e.id);
      out += ' ';
      out += format_double(e.score);
    }
    out += '\n';
  }
  return out;
}

RankingSet decode_rankings(std::string_view text) {
  LineReader lines(text);
  std::vector<Token> tokens;
  check_header(lines, tokens, "csa-rankings", 3);
  RankingSet set;
  if (tokens.size() == 3) {
    if (!tokens[2].text.starts_with("method=")) {
      throw FormatError("unexpected header field", tokens[2].offset);
    }
    set.method = std::string(tokens[2].text.substr(7));
  }
  while (lines.next(tokens)) {
    RankingList list;
    list.query_id = std::string(tokens[0].text);
    if (tokens.size() < 2) throw FormatError("truncated record: missing count", lines.line_start());
    const auto n = parse_number<std::size_t>(tokens[1], "entry count");
    if (tokens.size() != 2 + 2 * n) {
      throw FormatError("record for " + list.query_id + " declares " + std::to_string(n) +
                            " entries but has " + std::to_string((tokens.size() - 2) / 2),
                        lines.line_start());
    }
    list.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Token& id = tokens[2 + 2 * i];
      list.entries.push_back({std::string(id.text), parse_number<double>(tokens[3 + 2 * i], "score")});
    }
    set.lists.push_back(std::move(list));
  }
  return set;
}

void write_rankings(const std::filesystem::path& path, const RankingSet& rankings) {
  detail::write_file_text(path, encode_rankings(rankings));
}

RankingSet read_rankings(const std::filesystem::path& path) {
  return decode_rankings(detail::read_file_text(path));
}

std::string encode_ground_truth(const GroundTruth& truth) {
  std::string out = "csa-truth 1\n";
  for (const auto& q : truth) {
    out += token(q.query_id);
    out += ' ';
    out += std::to_string(q.positives.size());
    for (const auto& id : q.positives) out += ' ' + token(id);
    out += ' ';
    out += std::to_string(q.ignore.size());
    for (const auto& id : q.ignore) out += ' ' + token(id);
    out += '\n';
  }
  return out;
}

GroundTruth decode_ground_truth(std::string_view text) {
  LineReader lines(text);
  std::vector<Token> tokens;
  check_header(lines, tokens, "csa-truth", 2);
  GroundTruth truth;
  while (lines.next(tokens)) {
    QueryTruth q;
    q.query_id = std::string(tokens[0].text);
    std::size_t at = 1;
    if (at >= tokens.size()) throw FormatError("truncated record: missing count", lines.line_start());
    const auto npos = parse_number<std::size_t>(tokens[at++], "positive count");
    q.positives = take_ids(tokens, at, npos, lines.line_start());
    if (at >= tokens.size()) throw FormatError("truncated record: missing count", lines.line_start());
    const auto nign = parse_number<std::size_t>(tokens[at++], "ignore count");
    q.ignore = take_ids(tokens, at, nign, lines.line_start());
    if (at != tokens.size()) throw FormatError("trailing tokens in record", tokens[at].offset);
    truth.push_back(std::move(q));
  }
  try {
    validate_ground_truth(truth);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), 0);
  }
  return truth;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  detail::write_file_text(path, encode_ground_truth(truth));
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  return decode_ground_truth(detail::read_file_text(path));
}

std::string encode_labels(const LabelMap& labels) {
  std::vector<std::pair<std::string, std::int64_t>> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end());
  std::string out = "csa-labels 1\n";
  for (const auto& [id, label] : sorted) out += token(id) + ' ' + std::to_string(label) + '\n';
  return out;
}

LabelMap decode_labels(std::string_view text) {
  LineReader lines(text);
  std::vector<Token> tokens;
  check_header(lines, tokens, "csa-labels", 2);
  LabelMap labels;
  while (lines.next(tokens)) {
    if (tokens.size() != 2) throw FormatError("expected '<id> <label>'", lines.line_start());
    if (!labels.emplace(std::string(tokens[0].text), parse_number<std::int64_t>(tokens[1], "label"))
             .second) {
      throw FormatError("duplicate id " + std::string(tokens[0].text), tokens[0].offset);
    }
  }
  return labels;
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  detail::write_file_text(path, encode_labels(labels));
}

LabelMap read_labels(const std::filesystem::path& path) {
  return decode_labels(detail::read_file_text(path));
}

std::vector<std::string> decode_id_list(std::string_view text) {
  LineReader lines(text);
  std::vector<Token> tokens;
  std::vector<std::string> ids;
  while (lines.next(tokens)) {
    if (tokens.size() != 1) throw FormatError("expected one id per line", lines.line_start());
    ids.emplace_back(tokens[0].text);
  }
  return ids;
}

std::string encode_id_list(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += token(id) + '\n';
  return out;
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  return decode_id_list(detail::read_file_text(path));
}

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  detail::write_file_text(path, encode_id_list(ids));
}

}  // namespace csa
