#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "textsplat/diff/tensor.hpp"

namespace textsplat::text {

class EmbeddingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Word-level prompt embedding, one row per token slot.
struct TextEmbedding {
  std::size_t length = 0;  // L
  std::size_t width = 0;   // D
  std::vector<float> matrix;

  float at(std::size_t row, std::size_t col) const { return matrix[row * width + col]; }
  bool operator==(const TextEmbedding&) const = default;

  template <typename T>
  diff::Tensor<T> to_tensor() const {
    std::vector<T> v(matrix.begin(), matrix.end());
    return diff::Tensor<T>::from({length, width}, std::move(v));
  }
};

// Lowercased alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view prompt);

// Deterministic stand-in for a frozen text encoder: row 0 is a begin marker,
// then one unit-norm row per token (a pure function of token and seed), then
// a pad row up to L. Sequences longer than L are truncated.
TextEmbedding embed(std::string_view prompt, std::size_t length, std::size_t width, std::uint64_t seed);

// The row a token maps to, exposed for tests and tooling.
std::vector<float> token_row(std::string_view token, std::size_t width, std::uint64_t seed);

enum class ViewSector { front, side, back };

// Sectors are half-open toward increasing azimuth: front [315,45), side
// [45,135) and [225,315), back [135,225). Azimuth wraps modulo 360.
ViewSector view_sector(double azimuth_deg);
std::string_view view_suffix(ViewSector sector);
std::string augment_direction(std::string_view prompt, double azimuth_deg);
// Removes a trailing view suffix added by augment_direction, if any.
std::string strip_direction(std::string_view prompt);

// Row-wise (1-t) a + t b.
TextEmbedding interpolate(const TextEmbedding& a, const TextEmbedding& b, double t);

// Embedding container: "TEMB" | version u32 | count u32 | L u32 | D u32 |
// count x (id u32 | L*D f32 little-endian).
inline constexpr std::uint32_t kEmbeddingVersion = 1;
void export_embeddings(const std::filesystem::path& path, const std::map<std::uint32_t, TextEmbedding>& embeddings);
std::map<std::uint32_t, TextEmbedding> import_embeddings(const std::filesystem::path& path, std::size_t length,
                                                         std::size_t width);

struct PromptSet {
  std::vector<std::string> prompts;

  explicit PromptSet(std::vector<std::string> prompts);
  // 32 prompts of the form "a {species} sitting {place} and wearing {item}".
  static PromptSet builtin();
  // One prompt per non-empty line; '#' starts a comment line.
  static PromptSet from_file(const std::filesystem::path& path);

  std::size_t size() const { return prompts.size(); }
  const std::string& operator[](std::size_t id) const { return prompts.at(id); }
  // Index of an exact prompt, or size() if absent.
  std::size_t find(std::string_view prompt) const;
};

}  // namespace textsplat::text
