#include <array>
#include <cstring>
#include <fstream>

#include "lexiscope/error.hpp"
#include "lexiscope/hash.hpp"
#include "lexiscope/model.hpp"

namespace lexiscope {

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'X', 'S', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kHasExpansion = 1u;

// Little-endian host assumed (x86-64 / aarch64); values are written verbatim.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& p) : out_(p, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot open " + p.string() + " for writing");
  }
  template <typename T>
  void put(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void matrix(const Matrix& m) {
    put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    bytes(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
  }
  void finish(const std::filesystem::path& p) {
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "write failed for " + p.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& p) : in_(p, std::ios::binary), path_(p.string()) {
    if (!in_) throw Error(ErrorCode::IoError, "cannot open " + path_);
  }
  template <typename T>
  T get() {
    T v{};
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw Error(ErrorCode::FormatError, "truncated checkpoint " + path_);
  }
  Matrix matrix() {
    const auto r = get<std::uint32_t>();
    const auto c = get<std::uint32_t>();
    if (static_cast<std::uint64_t>(r) * c > (1ull << 32))
      throw Error(ErrorCode::FormatError, "implausible matrix size in " + path_);
    Matrix m(r, c);
    bytes(m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
    return m;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& c, const ModelWeights& w,
                     const ExpansionHeader* expansion) {
  c.validate();
  check_shapes(w, c);
  Writer out(path);
  out.bytes(kMagic.data(), kMagic.size());
  out.put<std::uint32_t>(kVersion);
  out.put<std::uint32_t>(expansion ? kHasExpansion : 0u);
  for (int v : {c.d_model, c.n_layers, c.n_heads, c.d_ff, c.vocab_size, c.max_seq})
    out.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  out.put<float>(c.rope_base);
  out.put<float>(c.norm_eps);
  out.put<std::uint64_t>(c.seed);
  if (expansion) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(expansion->original_vocab));
    out.matrix(expansion->refine_embed);
    out.matrix(expansion->refine_unembed);
    out.matrix(expansion->embed_init);
    out.matrix(expansion->unembed_init);
  }
  w.for_each_tensor([&](const std::string&, const float* p, std::size_t n) { out.bytes(p, n * sizeof(float)); });
  out.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader in(path);
  std::array<char, 8> magic{};
  in.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw Error(ErrorCode::FormatError, path.string() + " is not a checkpoint");
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion)
    throw Error(ErrorCode::FormatError, "unsupported checkpoint version " + std::to_string(version));
  const auto flags = in.get<std::uint32_t>();

  Checkpoint ck;
  ModelConfig& c = ck.config;
  for (int* f : {&c.d_model, &c.n_layers, &c.n_heads, &c.d_ff, &c.vocab_size, &c.max_seq})
    *f = static_cast<int>(in.get<std::uint32_t>());
  c.rope_base = in.get<float>();
  c.norm_eps = in.get<float>();
  c.seed = in.get<std::uint64_t>();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::FormatError, std::string("bad config block: ") + e.what());
  }
  if (flags & kHasExpansion) {
    ExpansionHeader h;
    h.original_vocab = static_cast<int>(in.get<std::uint32_t>());
    h.refine_embed = in.matrix();
    h.refine_unembed = in.matrix();
    h.embed_init = in.matrix();
    h.unembed_init = in.matrix();
    ck.expansion = std::move(h);
  }
  ck.weights = ModelWeights::zeros(c);
  ck.weights.for_each_tensor([&](const std::string&, float* p, std::size_t n) { in.bytes(p, n * sizeof(float)); });
  if (!in.at_end()) throw Error(ErrorCode::FormatError, "trailing bytes in " + path.string());
  return ck;
}

std::uint64_t hash_weights(const ModelWeights& w) {
  std::uint64_t h = kFnvOffset;
  w.for_each_tensor([&](const std::string&, const float* p, std::size_t n) { h = fnv1a(p, n * sizeof(float), h); });
  return h;
}

}  // namespace lexiscope
