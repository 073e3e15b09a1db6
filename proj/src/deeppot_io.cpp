#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "nnmd/deeppot.hpp"

// Model file layout (all little-endian):
//   magic "NMDP", u32 version (= 1)
//   f64 rc, rcs
//   i32 n_max, n_species, type_dim, n_feat, n_reduced, n_attn, attn_dim,
//       gate_norm_id
//   i32 embed layer count, then (i32 n_in, i32 n_out) per layer
//   i32 fit layer count, then (i32 n_in, i32 n_out) per layer
//   f64 data in declaration order: type_embed; embed layers (w, b);
//       attention layers (wq, wk, wv, wo); fit layers (w, b)

namespace nnmd {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; add byte swapping for this host");

namespace {

constexpr char kMagic[4] = {'N', 'M', 'D', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  require(static_cast<bool>(is), "load_model: truncated file reading " + what);
  return v;
}

void put_doubles(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::istream& is, std::vector<double>& v, std::size_t n,
                 const std::string& what) {
  v.resize(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  require(static_cast<bool>(is), "load_model: truncated file reading " + what);
}

}  // namespace

void save_model(const DPModel& model, const std::string& path) {
  model.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "save_model: cannot open " + path);

  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<double>(os, model.rc);
  put<double>(os, model.rcs);
  for (int v : {model.n_max, model.n_species, model.type_dim, model.n_feat,
                model.n_reduced, model.n_attn, model.attn_dim,
                model.gate_norm_id})
    put<std::int32_t>(os, v);
  put<std::int32_t>(os, static_cast<std::int32_t>(model.embed.size()));
  for (const auto& l : model.embed) {
    put<std::int32_t>(os, l.n_in);
    put<std::int32_t>(os, l.n_out);
  }
  put<std::int32_t>(os, static_cast<std::int32_t>(model.fit.size()));
  for (const auto& l : model.fit) {
    put<std::int32_t>(os, l.n_in);
    put<std::int32_t>(os, l.n_out);
  }
  put_doubles(os, model.type_embed);
  for (const auto& l : model.embed) {
    put_doubles(os, l.w);
    put_doubles(os, l.b);
  }
  for (const auto& a : model.attn) {
    put_doubles(os, a.wq);
    put_doubles(os, a.wk);
    put_doubles(os, a.wv);
    put_doubles(os, a.wo);
  }
  for (const auto& l : model.fit) {
    put_doubles(os, l.w);
    put_doubles(os, l.b);
  }
  require(os.good(), "save_model: write failed for " + path);
}

DPModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "load_model: cannot open " + path);

  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0,
          "load_model: bad magic (corrupted or not a model file): " + path);
  const auto version = get<std::uint32_t>(is, "version");
  require(version == kVersion,
          "load_model: unsupported format version " + std::to_string(version));

  DPModel m;
  m.rc = get<double>(is, "rc");
  m.rcs = get<double>(is, "rcs");
  m.n_max = get<std::int32_t>(is, "n_max");
  m.n_species = get<std::int32_t>(is, "n_species");
  m.type_dim = get<std::int32_t>(is, "type_dim");
  m.n_feat = get<std::int32_t>(is, "n_feat");
  m.n_reduced = get<std::int32_t>(is, "n_reduced");
  m.n_attn = get<std::int32_t>(is, "n_attn");
  m.attn_dim = get<std::int32_t>(is, "attn_dim");
  m.gate_norm_id = get<std::int32_t>(is, "gate_norm_id");
  require(m.n_species >= 1 && m.type_dim >= 1 && m.n_feat >= 1 &&
              m.n_attn >= 0 && m.n_attn <= 64,
          "load_model: implausible shape table");

  auto read_shapes = [&](const char* what) {
    const auto count = get<std::int32_t>(is, what);
    require(count >= 1 && count <= 64, "load_model: implausible layer count");
    std::vector<MlpLayer> layers(static_cast<std::size_t>(count));
    for (auto& l : layers) {
      l.n_in = get<std::int32_t>(is, what);
      l.n_out = get<std::int32_t>(is, what);
      require(l.n_in >= 1 && l.n_out >= 1, "load_model: bad layer shape");
    }
    return layers;
  };
  m.embed = read_shapes("embed shapes");
  m.fit = read_shapes("fit shapes");

  get_doubles(is, m.type_embed,
              static_cast<std::size_t>(m.n_species) * m.type_dim, "type_embed");
  for (auto& l : m.embed) {
    get_doubles(is, l.w, static_cast<std::size_t>(l.n_in) * l.n_out, "embed w");
    get_doubles(is, l.b, static_cast<std::size_t>(l.n_out), "embed b");
  }
  m.attn.resize(static_cast<std::size_t>(m.n_attn));
  const std::size_t proj = static_cast<std::size_t>(m.n_feat) * m.attn_dim;
  for (auto& a : m.attn) {
    get_doubles(is, a.wq, proj, "attention wq");
    get_doubles(is, a.wk, proj, "attention wk");
    get_doubles(is, a.wv, proj, "attention wv");
    get_doubles(is, a.wo, proj, "attention wo");
  }
  for (auto& l : m.fit) {
    get_doubles(is, l.w, static_cast<std::size_t>(l.n_in) * l.n_out, "fit w");
    get_doubles(is, l.b, static_cast<std::size_t>(l.n_out), "fit b");
  }
  is.peek();
  require(is.eof(), "load_model: trailing bytes after model data");
  m.validate();
  return m;
}

}  // namespace nnmd
