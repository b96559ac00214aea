#include "segsr/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace segsr {

void LabelVolume::validate() const {
  if (d < 1 || h < 1 || w < 1)
    throw ValidationError("LabelVolume: dims components must be >= 1");
  for (double s : spacing)
    if (!(s > 0.0)) throw ValidationError("LabelVolume: spacing components must be > 0");
  if (num_classes() < 2)
    throw ValidationError("LabelVolume: at least 2 classes required");
  if (labels.size() != voxels())
    throw SizeMismatchError("LabelVolume: payload size does not match dims");
  const int c = num_classes();
  for (uint8_t l : labels)
    if (l >= c) throw ValidationError("LabelVolume: voxel label out of range");
}

ProbVolume one_hot(const LabelVolume& v) {
  v.validate();
  const int c = v.num_classes();
  ProbVolume p(c, v.d, v.h, v.w, 0.0f);
  const size_t n = v.voxels();
  for (size_t i = 0; i < n; ++i) p.v[size_t(v.labels[i]) * n + i] = 1.0f;
  return p;
}

LabelVolume argmax_labels(const ProbVolume& p,
                          const std::vector<std::string>& label_names,
                          std::array<double, 3> spacing) {
  if (p.c != static_cast<int>(label_names.size()))
    throw SizeMismatchError("argmax_labels: channel count does not match label names");
  LabelVolume out(p.d, p.h, p.w, spacing);
  out.label_names = label_names;
  const size_t n = p.voxels();
  for (size_t i = 0; i < n; ++i) {
    int best = 0;
    float bestv = p.v[i];
    for (int c = 1; c < p.c; ++c) {
      float x = p.v[size_t(c) * n + i];
      if (x > bestv) {  // ties keep the lowest channel
        bestv = x;
        best = c;
      }
    }
    out.labels[i] = static_cast<uint8_t>(best);
  }
  return out;
}

LabelVolume argmax_labels(const ProbVolume& p, const LabelVolume& like) {
  return argmax_labels(p, like.label_names, like.spacing);
}

double dice(const LabelVolume& a, const LabelVolume& b, int label) {
  if (!a.same_shape(b)) throw SizeMismatchError("dice: dimension mismatch");
  size_t na = 0, nb = 0, ni = 0;
  const size_t n = a.voxels();
  for (size_t i = 0; i < n; ++i) {
    bool ina = a.labels[i] == label;
    bool inb = b.labels[i] == label;
    na += ina;
    nb += inb;
    ni += ina && inb;
  }
  if (na + nb == 0) return 1.0;  // both agree the structure is absent
  return 2.0 * double(ni) / double(na + nb);
}

DiceReport dice_report(const LabelVolume& a, const LabelVolume& b) {
  DiceReport r;
  double sum = 0.0;
  for (int l = 1; l < a.num_classes(); ++l) {
    double s = dice(a, b, l);
    r.per_label[a.label_names[l]] = s;
    sum += s;
  }
  r.mean = sum / double(a.num_classes() - 1);
  return r;
}

double mean_foreground_dice(const LabelVolume& a, const LabelVolume& b) {
  return dice_report(a, b).mean;
}

void check_simplex(const ProbVolume& p, double tol) {
  const size_t n = p.voxels();
  for (size_t i = 0; i < p.size(); ++i) {
    float x = p.v[i];
    if (!(x >= -float(tol) && x <= 1.0f + float(tol)))
      throw ValidationError("ProbVolume: value outside [0,1]");
  }
  for (size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < p.c; ++c) s += p.v[size_t(c) * n + i];
    if (std::abs(s - 1.0) > tol)
      throw ValidationError("ProbVolume: per-voxel channel sum deviates from 1");
  }
}

namespace {

std::string strip_volume_suffix(const std::string& path) {
  for (const char* suf : {".segvol", ".json"}) {
    size_t len = std::strlen(suf);
    if (path.size() > len && path.compare(path.size() - len, len, suf) == 0)
      return path.substr(0, path.size() - len);
  }
  return path;
}

}  // namespace

void save_volume(const LabelVolume& v, const std::string& path) {
  v.validate();
  const std::string base = strip_volume_suffix(path);
  nlohmann::json header = {
      {"version", 1},
      {"dims", {v.d, v.h, v.w}},
      {"spacing_mm", {v.spacing[0], v.spacing[1], v.spacing[2]}},
      {"labels", v.label_names},
  };
  std::string htext = header.dump();
  write_file_bytes(base + ".json", htext.data(), htext.size());
  write_file_bytes(base + ".segvol", v.labels.data(), v.labels.size());
}

LabelVolume load_volume(const std::string& path) {
  const std::string base = strip_volume_suffix(path);
  auto hbytes = read_file_bytes(base + ".json");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hbytes.begin(), hbytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed volume header " + base + ".json: " + e.what());
  }
  if (!header.is_object() || !header.contains("version") ||
      !header.contains("dims") || !header.contains("spacing_mm") ||
      !header.contains("labels"))
    throw FormatError("volume header missing required keys: " + base + ".json");
  if (header["version"] != 1)
    throw VersionError("unsupported volume format version in " + base + ".json");

  LabelVolume v;
  auto dims = header["dims"];
  auto spac = header["spacing_mm"];
  if (!dims.is_array() || dims.size() != 3 || !spac.is_array() || spac.size() != 3)
    throw FormatError("volume header dims/spacing malformed: " + base + ".json");
  v.d = dims[0].get<int>();
  v.h = dims[1].get<int>();
  v.w = dims[2].get<int>();
  v.spacing = {spac[0].get<double>(), spac[1].get<double>(), spac[2].get<double>()};
  v.label_names = header["labels"].get<std::vector<std::string>>();

  auto payload = read_file_bytes(base + ".segvol");
  if (v.d < 1 || v.h < 1 || v.w < 1)
    throw ValidationError("volume header dims must be >= 1: " + base + ".json");
  if (payload.size() != size_t(v.d) * v.h * v.w)
    throw SizeMismatchError("volume payload length does not match dims: " + base + ".segvol");
  v.labels.assign(payload.begin(), payload.end());
  v.validate();
  return v;
}

}  // namespace segsr
