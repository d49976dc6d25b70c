#pragma once

// Embedding export: comma-separated text (`id,mode,dim,v_0..v_{dim-1}`) and a
// compact little-endian binary variant.
//
// Binary layout: 16-byte header
//   0  magic "SCTF"
//   4  u16 version (1)
//   6  u32 dim
//   10 u32 count
//   14 u8  mode
//   15 u8  pad
// followed by count * dim f32 values, record-major.

#include "stx/contextualizer.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace stx {

inline constexpr std::uint16_t kEmbeddingBinaryVersion = 1;

void write_embeddings_csv(std::ostream& out, const std::vector<Embedding>& embeddings);
std::vector<Embedding> read_embeddings_csv(std::istream& in);

void write_embeddings_binary(std::ostream& out, const std::vector<Embedding>& embeddings);

struct BinaryEmbeddings {
  SequenceMode mode = SequenceMode::PathsAsSequence;
  std::uint32_t dim = 0;
  std::vector<std::vector<float>> records;
};
BinaryEmbeddings read_embeddings_binary(std::istream& in);

void save_embeddings(const std::filesystem::path& csv_path, const std::vector<Embedding>& embeddings);
std::vector<Embedding> load_embeddings(const std::filesystem::path& csv_path);

}  // namespace stx
