#include "nnmd/system.hpp"

#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace nnmd {

void SimBox::validate(double rc) const {
  for (int a = 0; a < 3; ++a) {
    require(lengths[a] > 0.0, "SimBox: non-positive edge length");
    if (periodic[a] && rc > 0.0) {
      require(lengths[a] >= 2.0 * rc,
              "SimBox: periodic edge shorter than 2*rc (minimum image "
              "invalid)");
    }
  }
}

void AtomSet::validate() const {
  const std::size_t n = positions.size();
  require(global_ids.size() == n && species.size() == n &&
              velocities.size() == n && masses.size() == n,
          "AtomSet: field length mismatch");
  std::unordered_set<std::int64_t> seen;
  for (auto id : global_ids) {
    require(id >= 0, "AtomSet: negative global id");
    require(seen.insert(id).second, "AtomSet: duplicate global id");
  }
  for (double m : masses) require(m > 0.0, "AtomSet: non-positive mass");
}

void AtomSet::push_back(std::int64_t id, int type, const Vec3& r,
                        const Vec3& v, double mass) {
  global_ids.push_back(id);
  species.push_back(type);
  positions.push_back(r);
  velocities.push_back(v);
  masses.push_back(mass);
}

Vec3 minimum_image(const Vec3& d, const SimBox& box) {
  Vec3 out = d;
  for (int a = 0; a < 3; ++a) {
    if (!box.periodic[a]) continue;
    const double L = box.lengths[a];
    assert(std::fabs(d[a]) <= 1.5 * L && "minimum_image precondition");
    int k = 0;
    if (d[a] > 0.5 * L) k = -1;
    else if (d[a] < -0.5 * L) k = 1;
    out[a] = image_delta(d[a], 0.0, k, L);
  }
  return out;
}

Vec3 wrap_position(const Vec3& r, const SimBox& box) {
  Vec3 out = r;
  for (int a = 0; a < 3; ++a) {
    if (!box.periodic[a]) continue;
    const double L = box.lengths[a];
    double w = r[a] - std::floor(r[a] / L) * L;
    if (w >= L) w = 0.0;  // guards the r == L (and rounding) boundary
    out[a] = w;
  }
  return out;
}

void wrap_positions(AtomSet& atoms, const SimBox& box) {
  for (auto& r : atoms.positions) r = wrap_position(r, box);
}

std::pair<SimBox, AtomSet> lattice_init(int n_per_axis, double density,
                                        std::span<const int> species_pattern) {
  require(n_per_axis >= 1, "lattice_init: n_per_axis must be >= 1");
  require(density > 0.0, "lattice_init: density must be > 0");
  require(!species_pattern.empty(), "lattice_init: empty species pattern");

  const double spacing = std::cbrt(1.0 / density);
  SimBox box;
  box.lengths = {n_per_axis * spacing, n_per_axis * spacing,
                 n_per_axis * spacing};

  AtomSet atoms;
  std::int64_t id = 0;
  for (int ix = 0; ix < n_per_axis; ++ix)
    for (int iy = 0; iy < n_per_axis; ++iy)
      for (int iz = 0; iz < n_per_axis; ++iz) {
        const int type =
            species_pattern[static_cast<std::size_t>(id) % species_pattern.size()];
        atoms.push_back(id, type,
                        {ix * spacing, iy * spacing, iz * spacing});
        ++id;
      }
  return {box, atoms};
}

void write_xyz_frame(std::ostream& os, const AtomSet& atoms, const SimBox& box,
                     long frame_index) {
  char buf[256];
  os << atoms.size() << "\n";
  std::snprintf(buf, sizeof buf,
                "Lattice=\"%.9g 0 0 0 %.9g 0 0 0 %.9g\" "
                "Properties=species:I:1:pos:R:3:vel:R:3:mass:R:1:id:I:1 "
                "frame=%ld",
                box.lengths.x, box.lengths.y, box.lengths.z, frame_index);
  os << buf << "\n";
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const Vec3& r = atoms.positions[i];
    const Vec3& v = atoms.velocities[i];
    std::snprintf(buf, sizeof buf,
                  "%d %.9g %.9g %.9g %.9g %.9g %.9g %.9g %lld\n",
                  atoms.species[i], r.x, r.y, r.z, v.x, v.y, v.z,
                  atoms.masses[i],
                  static_cast<long long>(atoms.global_ids[i]));
    os << buf;
  }
}

void write_xyz(const std::string& path, const AtomSet& atoms,
               const SimBox& box, long frame_index, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  require(os.good(), "write_xyz: cannot open " + path);
  write_xyz_frame(os, atoms, box, frame_index);
  require(os.good(), "write_xyz: write failed for " + path);
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, long line,
                             const std::string& what) {
  throw Error("read_xyz: " + path + ":" + std::to_string(line) + ": " + what);
}

// Pulls a key="..." or key=value token out of the comment line.
std::string comment_value(const std::string& comment, const std::string& key) {
  const auto pos = comment.find(key + "=");
  if (pos == std::string::npos) return {};
  std::size_t start = pos + key.size() + 1;
  if (start < comment.size() && comment[start] == '"') {
    ++start;
    const auto end = comment.find('"', start);
    if (end == std::string::npos) return {};
    return comment.substr(start, end - start);
  }
  const auto end = comment.find_first_of(" \t", start);
  return comment.substr(start, end == std::string::npos ? std::string::npos
                                                        : end - start);
}

}  // namespace

std::vector<Frame> read_xyz(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "read_xyz: cannot open " + path);

  std::vector<Frame> frames;
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() && is.peek() == EOF) break;
    long n = 0;
    try {
      n = std::stol(line);
    } catch (const std::exception&) {
      parse_fail(path, lineno, "expected atom count, got '" + line + "'");
    }
    if (n < 0) parse_fail(path, lineno, "negative atom count");

    if (!std::getline(is, line)) parse_fail(path, lineno + 1, "missing comment line");
    ++lineno;

    Frame f;
    const std::string lattice = comment_value(line, "Lattice");
    if (!lattice.empty()) {
      std::istringstream ls(lattice);
      double m[9];
      for (double& v : m)
        if (!(ls >> v)) parse_fail(path, lineno, "bad Lattice entry");
      f.box.lengths = {m[0], m[4], m[8]};
    }
    const std::string fidx = comment_value(line, "frame");
    if (!fidx.empty()) f.frame_index = std::stol(fidx);

    for (long i = 0; i < n; ++i) {
      if (!std::getline(is, line))
        parse_fail(path, lineno + 1, "truncated frame");
      ++lineno;
      std::istringstream as(line);
      int type;
      Vec3 r, v;
      double mass;
      long long id;
      if (!(as >> type >> r.x >> r.y >> r.z >> v.x >> v.y >> v.z >> mass >> id))
        parse_fail(path, lineno, "bad atom line '" + line + "'");
      f.atoms.push_back(id, type, r, v, mass);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace nnmd
