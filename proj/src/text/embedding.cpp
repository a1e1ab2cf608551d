#include "textsplat/text/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "textsplat/diff/rng.hpp"
#include "textsplat/util/binary_io.hpp"

namespace textsplat::text {

namespace {

constexpr std::string_view kBeginKey = "\x01<begin>";
constexpr std::string_view kPadKey = "\x01<pad>";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view prompt) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : prompt) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<float> token_row(std::string_view token, std::size_t width, std::uint64_t seed) {
  diff::Rng rng(diff::hash_string(token, seed));
  std::vector<double> v(width);
  double n2 = 0.0;
  while (n2 == 0.0) {
    for (auto& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
  }
  const double inv = 1.0 / std::sqrt(n2);
  std::vector<float> row(width);
  for (std::size_t i = 0; i < width; ++i) row[i] = static_cast<float>(v[i] * inv);
  return row;
}

TextEmbedding embed(std::string_view prompt, std::size_t length, std::size_t width, std::uint64_t seed) {
  if (length == 0 || width == 0) throw EmbeddingError("embed: L and D must be positive");
  auto tokens = tokenize(trim(prompt));
  if (tokens.empty()) throw EmbeddingError("embed: prompt is empty");
  TextEmbedding e;
  e.length = length;
  e.width = width;
  e.matrix.reserve(length * width);
  auto push = [&](const std::vector<float>& row) { e.matrix.insert(e.matrix.end(), row.begin(), row.end()); };
  push(token_row(kBeginKey, width, seed));
  for (std::size_t i = 0; i < tokens.size() && i + 1 < length; ++i) push(token_row(tokens[i], width, seed));
  const auto pad = token_row(kPadKey, width, seed);
  while (e.matrix.size() < length * width) push(pad);
  return e;
}

ViewSector view_sector(double azimuth_deg) {
  double az = std::fmod(azimuth_deg, 360.0);
  if (az < 0.0) az += 360.0;
  if (az < 45.0 || az >= 315.0) return ViewSector::front;
  if (az >= 135.0 && az < 225.0) return ViewSector::back;
  return ViewSector::side;
}

std::string_view view_suffix(ViewSector sector) {
  switch (sector) {
    case ViewSector::front: return ", front view";
    case ViewSector::side: return ", side view";
    case ViewSector::back: return ", back view";
  }
  return "";
}

std::string augment_direction(std::string_view prompt, double azimuth_deg) {
  std::string out(prompt);
  out += view_suffix(view_sector(azimuth_deg));
  return out;
}

std::string strip_direction(std::string_view prompt) {
  for (auto s : {ViewSector::front, ViewSector::side, ViewSector::back}) {
    const auto suffix = view_suffix(s);
    if (prompt.size() >= suffix.size() && prompt.substr(prompt.size() - suffix.size()) == suffix) {
      return std::string(prompt.substr(0, prompt.size() - suffix.size()));
    }
  }
  return std::string(prompt);
}

TextEmbedding interpolate(const TextEmbedding& a, const TextEmbedding& b, double t) {
  if (a.length != b.length || a.width != b.width) {
    throw EmbeddingError("interpolate: shape mismatch " + std::to_string(a.length) + "x" + std::to_string(a.width) +
                         " vs " + std::to_string(b.length) + "x" + std::to_string(b.width));
  }
  TextEmbedding out = a;
  const float wa = static_cast<float>(1.0 - t), wb = static_cast<float>(t);
  for (std::size_t i = 0; i < out.matrix.size(); ++i) out.matrix[i] = wa * a.matrix[i] + wb * b.matrix[i];
  return out;
}

void export_embeddings(const std::filesystem::path& path, const std::map<std::uint32_t, TextEmbedding>& embeddings) {
  if (embeddings.empty()) throw EmbeddingError("export_embeddings: nothing to export");
  const auto& first = embeddings.begin()->second;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw util::FormatError("cannot open embedding file for writing: " + path.string());
  util::write_magic(os, "TEMB");
  util::write_u32(os, kEmbeddingVersion);
  util::write_u32(os, static_cast<std::uint32_t>(embeddings.size()));
  util::write_u32(os, static_cast<std::uint32_t>(first.length));
  util::write_u32(os, static_cast<std::uint32_t>(first.width));
  for (const auto& [id, e] : embeddings) {
    if (e.length != first.length || e.width != first.width) {
      throw EmbeddingError("export_embeddings: embeddings in one container must share L and D");
    }
    util::write_u32(os, id);
    for (float v : e.matrix) util::write_f32(os, v);
  }
  if (!os) throw util::FormatError("failed writing embedding file: " + path.string());
}

std::map<std::uint32_t, TextEmbedding> import_embeddings(const std::filesystem::path& path, std::size_t length,
                                                         std::size_t width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw util::FormatError("cannot open embedding file: " + path.string());
  util::expect_magic(is, "TEMB", path.string());
  const auto version = util::read_u32(is, "embedding version");
  if (version != kEmbeddingVersion) {
    throw util::FormatError(path.string() + ": unsupported embedding version " + std::to_string(version));
  }
  const auto count = util::read_u32(is, "embedding count");
  const auto l = util::read_u32(is, "embedding length");
  const auto d = util::read_u32(is, "embedding width");
  if (l != length || d != width) {
    throw EmbeddingError(path.string() + ": dimension mismatch, file has " + std::to_string(l) + "x" +
                         std::to_string(d) + " but config expects " + std::to_string(length) + "x" +
                         std::to_string(width));
  }
  std::map<std::uint32_t, TextEmbedding> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    TextEmbedding e;
    e.length = l;
    e.width = d;
    const auto id = util::read_u32(is, "embedding id");
    e.matrix.resize(static_cast<std::size_t>(l) * d);
    for (auto& v : e.matrix) v = util::read_f32(is, "embedding payload");
    if (!out.emplace(id, std::move(e)).second) {
      throw util::FormatError(path.string() + ": duplicate prompt id " + std::to_string(id));
    }
  }
  return out;
}

PromptSet::PromptSet(std::vector<std::string> p) : prompts(std::move(p)) {
  if (prompts.empty()) throw EmbeddingError("prompt set is empty");
  std::set<std::string> seen;
  for (const auto& s : prompts) {
    if (trim(s).empty()) throw EmbeddingError("prompt set contains an empty prompt");
    if (!seen.insert(s).second) throw EmbeddingError("prompt set contains a duplicate: \"" + s + "\"");
  }
}

PromptSet PromptSet::builtin() {
  static const char* species[] = {"cat", "dog", "rabbit", "fox", "panda", "owl", "frog", "bear"};
  static const char* places[] = {"on a red chair", "on a blue sofa", "in a green basket", "on a yellow box"};
  static const char* items[] = {"a scarf", "a hat", "sunglasses", "a backpack"};
  std::vector<std::string> out;
  for (std::size_t s = 0; s < 8; ++s) {
    for (std::size_t p = 0; p < 4; ++p) {
      out.push_back(std::string("a ") + species[s] + " sitting " + places[p] + " and wearing " + items[(s + p) % 4]);
    }
  }
  return PromptSet(std::move(out));
}

PromptSet PromptSet::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open prompt file: " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(t);
  }
  return PromptSet(std::move(out));
}

std::size_t PromptSet::find(std::string_view prompt) const {
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i] == prompt) return i;
  }
  return prompts.size();
}

}  // namespace textsplat::text
