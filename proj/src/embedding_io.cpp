#include "stx/embedding_io.hpp"

#include "stx/binary_io.hpp"
#include "stx/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace stx {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_embeddings_csv(std::ostream& out, const std::vector<Embedding>& embeddings) {
  std::ostringstream line;
  line.precision(9);
  for (const auto& e : embeddings) {
    require(e.values.allFinite(), ErrorKind::Data, "embedding '" + e.id + "' has non-finite values");
    require(e.id.find(',') == std::string::npos, ErrorKind::Data, "embedding id contains a comma: " + e.id);
    line.str({});
    line << e.id << ',' << to_string(e.mode) << ',' << e.dim();
    for (Eigen::Index i = 0; i < e.dim(); ++i) line << ',' << e.values[i];
    out << line.str() << '\n';
  }
}

std::vector<Embedding> read_embeddings_csv(std::istream& in) {
  std::vector<Embedding> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv(line);
    const auto where = "embedding line " + std::to_string(line_no);
    require(fields.size() >= 3, ErrorKind::Parse, where + ": expected id,mode,dim,...");
    Embedding e;
    e.id = fields[0];
    e.mode = parse_sequence_mode(fields[1]);
    long dim = 0;
    auto [p, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), dim);
    require(ec == std::errc{} && dim >= 1, ErrorKind::Parse, where + ": bad dim");
    require(fields.size() == static_cast<std::size_t>(dim) + 3, ErrorKind::Parse, where + ": dim does not match values");
    e.values.resize(dim);
    for (long i = 0; i < dim; ++i) {
      try {
        e.values[i] = std::stod(fields[static_cast<std::size_t>(i) + 3]);
      } catch (const std::exception&) {
        fail(ErrorKind::Parse, where + ": bad value");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_embeddings_binary(std::ostream& out, const std::vector<Embedding>& embeddings) {
  const std::uint32_t dim = embeddings.empty() ? 0 : static_cast<std::uint32_t>(embeddings.front().dim());
  const auto mode = embeddings.empty() ? SequenceMode::PathsAsSequence : embeddings.front().mode;
  out.write("SCTF", 4);
  binio::put<std::uint16_t>(out, kEmbeddingBinaryVersion);
  binio::put<std::uint32_t>(out, dim);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(embeddings.size()));
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(mode));
  binio::put<std::uint8_t>(out, 0);
  for (const auto& e : embeddings) {
    require(static_cast<std::uint32_t>(e.dim()) == dim, ErrorKind::Shape, "embeddings of mixed dimension");
    for (Eigen::Index i = 0; i < e.dim(); ++i) binio::put<float>(out, static_cast<float>(e.values[i]));
  }
}

BinaryEmbeddings read_embeddings_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::string(magic, 4) == "SCTF", ErrorKind::Parse, "bad embedding file magic");
  const auto version = binio::get<std::uint16_t>(in);
  require(version == kEmbeddingBinaryVersion, ErrorKind::Parse, "unsupported embedding file version");
  BinaryEmbeddings out;
  out.dim = binio::get<std::uint32_t>(in);
  const auto count = binio::get<std::uint32_t>(in);
  out.mode = static_cast<SequenceMode>(binio::get<std::uint8_t>(in));
  binio::get<std::uint8_t>(in);
  out.records.assign(count, std::vector<float>(out.dim));
  for (auto& r : out.records)
    for (auto& v : r) v = binio::get<float>(in);
  return out;
}

void save_embeddings(const std::filesystem::path& csv_path, const std::vector<Embedding>& embeddings) {
  std::ofstream csv(csv_path);
  require(static_cast<bool>(csv), ErrorKind::Path, "cannot write " + csv_path.string());
  write_embeddings_csv(csv, embeddings);
  auto bin_path = csv_path;
  bin_path.replace_extension(".bin");
  std::ofstream bin(bin_path, std::ios::binary);
  require(static_cast<bool>(bin), ErrorKind::Path, "cannot write " + bin_path.string());
  write_embeddings_binary(bin, embeddings);
}

std::vector<Embedding> load_embeddings(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  require(static_cast<bool>(in), ErrorKind::Path, "cannot read " + csv_path.string());
  return read_embeddings_csv(in);
}

}  // namespace stx
