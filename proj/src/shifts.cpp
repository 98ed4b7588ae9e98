#include "shiftlens/shifts.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "shiftlens/rng.hpp"

namespace shiftlens::shifts {

using datagen::LatentFactorDataset;
using nlohmann::json;

double gaussian_sigma(ShiftIntensity i) {
  switch (i) {
    case ShiftIntensity::Small: return 1.0;
    case ShiftIntensity::Medium: return 10.0;
    default: return 100.0;
  }
}

double translate_pixels(ShiftIntensity i) {
  switch (i) {
    case ShiftIntensity::Small: return 5.0;
    case ShiftIntensity::Medium: return 10.0;
    default: return 15.0;
  }
}

double rotate_degrees(ShiftIntensity i) {
  switch (i) {
    case ShiftIntensity::Small: return 10.0;
    case ShiftIntensity::Medium: return 40.0;
    default: return 90.0;
  }
}

double zoom_fraction(ShiftIntensity i) {
  switch (i) {
    case ShiftIntensity::Small: return 0.10;
    case ShiftIntensity::Medium: return 0.20;
    default: return 0.40;
  }
}

double shear_degrees(ShiftIntensity i) {
  switch (i) {
    case ShiftIntensity::Small: return 10.0;
    case ShiftIntensity::Medium: return 20.0;
    default: return 40.0;
  }
}

std::string ShiftSpec::kind_name() const {
  switch (kind) {
    case ShiftKind::None: return "none";
    case ShiftKind::Gaussian: return "gaussian";
    case ShiftKind::Knockout: return "knockout";
    case ShiftKind::Concept: return "concept";
    case ShiftKind::Image: return "image";
    default: return "combination";
  }
}

std::string ShiftSpec::intensity_name() const {
  switch (intensity) {
    case ShiftIntensity::Small: return "small";
    case ShiftIntensity::Medium: return "medium";
    default: return "large";
  }
}

namespace {

std::string op_name(ImageOp op) {
  switch (op) {
    case ImageOp::Translate: return "translate";
    case ImageOp::Rotate: return "rotate";
    case ImageOp::Zoom: return "zoom";
    case ImageOp::Shear: return "shear";
    default: return "flip";
  }
}

}  // namespace

std::string ShiftSpec::describe() const {
  std::string s = kind_name();
  if (kind == ShiftKind::Knockout) {
    s += knockout_class ? "(" + std::to_string(*knockout_class) + ")" : "(majority)";
  } else if (kind == ShiftKind::Concept) {
    s += "(";
    for (std::size_t i = 0; i < concept_targets.size(); ++i) {
      if (i) s += "+";
      const auto& t = concept_targets[i];
      s += t.concept_name + ":" + std::to_string(t.value_index) +
           (t.mode == ConceptMode::KeepOnly ? ":keep_only" : ":remove");
    }
    s += ")";
  } else if (kind == ShiftKind::Image) {
    s += "(";
    for (std::size_t i = 0; i < image_ops.size(); ++i) {
      if (i) s += "+";
      s += op_name(image_ops[i]);
    }
    s += ")";
  } else if (kind == ShiftKind::Combination) {
    s += "(";
    for (std::size_t i = 0; i < combination.size(); ++i) {
      if (i) s += "+";
      s += combination[i].kind_name();
    }
    s += ")";
  }
  return s;
}

void ShiftSpec::validate() const {
  const bool delta_ok = std::abs(delta - 0.1) < 1e-12 ||
                        std::abs(delta - 0.5) < 1e-12 ||
                        std::abs(delta - 1.0) < 1e-12;
  if (!delta_ok)
    throw std::invalid_argument("shift delta must be one of {0.1, 0.5, 1.0}");
  switch (kind) {
    case ShiftKind::Concept:
      if (concept_targets.empty())
        throw std::invalid_argument("concept shift needs at least one target");
      break;
    case ShiftKind::Image:
      if (image_ops.empty())
        throw std::invalid_argument("image shift needs at least one op");
      break;
    case ShiftKind::Combination:
      if (combination.empty())
        throw std::invalid_argument("combination shift needs sub-shifts");
      for (const auto& sub : combination) {
        if (sub.kind == ShiftKind::Combination)
          throw std::invalid_argument("combination shifts cannot nest");
        sub.validate();
      }
      break;
    default:
      break;
  }
}

namespace {

// First round(delta * |eligible|) rows ordered by a per-row uniform draw.
// The u-ordering is fixed per seed, so the set grows monotonically in delta.
std::vector<int> pick_affected(std::span<const int> eligible, double delta,
                               const Rng& root) {
  const auto count = static_cast<std::size_t>(
      std::llround(delta * static_cast<double>(eligible.size())));
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(eligible.size());
  for (int row : eligible) {
    Rng r = root.fork(static_cast<std::uint64_t>(row));
    keyed.emplace_back(r.uniform(), row);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count && i < keyed.size(); ++i)
    out.push_back(keyed[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> all_rows(int n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

LatentFactorDataset remove_rows(const LatentFactorDataset& ds,
                                std::span<const int> rows_to_remove) {
  std::vector<char> drop(static_cast<std::size_t>(ds.n), 0);
  for (int r : rows_to_remove) drop[static_cast<std::size_t>(r)] = 1;
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(ds.n) - rows_to_remove.size());
  for (int i = 0; i < ds.n; ++i)
    if (!drop[static_cast<std::size_t>(i)]) keep.push_back(i);
  return datagen::gather(ds, keep);
}

LatentFactorDataset apply_gaussian(const LatentFactorDataset& ds,
                                   const ShiftSpec& spec) {
  LatentFactorDataset out = ds;
  const Rng root(spec.seed);
  const double sigma = gaussian_sigma(spec.intensity);
  auto rows = all_rows(ds.n);
  for (int row : pick_affected(rows, spec.delta, root)) {
    Rng rng = root.fork(static_cast<std::uint64_t>(row));
    rng.uniform();  // selection draw
    auto img = out.mutable_image(row);
    for (auto& px : img) {
      const double noisy = static_cast<double>(px) + sigma * rng.gaussian();
      px = static_cast<std::uint8_t>(std::clamp<long>(std::lround(noisy), 0, 255));
    }
  }
  return out;
}

LatentFactorDataset apply_knockout(const LatentFactorDataset& ds,
                                   const ShiftSpec& spec) {
  int target = 0;
  if (spec.knockout_class) {
    target = *spec.knockout_class;
  } else {
    // Majority class; ties break toward the lowest label.
    std::vector<int> counts(static_cast<std::size_t>(ds.schema.num_task_classes), 0);
    for (auto label : ds.task_labels) ++counts[static_cast<std::size_t>(label)];
    target = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                              counts.begin());
  }
  std::vector<int> eligible;
  for (int i = 0; i < ds.n; ++i)
    if (ds.task_labels[static_cast<std::size_t>(i)] == target) eligible.push_back(i);
  if (eligible.empty())
    throw std::invalid_argument("knockout: class " + std::to_string(target) +
                                " absent from subset");
  const Rng root(spec.seed);
  return remove_rows(ds, pick_affected(eligible, spec.delta, root));
}

LatentFactorDataset apply_concept(const LatentFactorDataset& ds,
                                  const ShiftSpec& spec) {
  LatentFactorDataset current = ds;
  const Rng root(spec.seed);
  for (std::size_t t = 0; t < spec.concept_targets.size(); ++t) {
    const auto& target = spec.concept_targets[t];
    const int c = current.schema.concept_index(target.concept_name);
    if (c < 0)
      throw std::invalid_argument("concept shift: unknown concept '" +
                                  target.concept_name + "'");
    if (target.value_index < 0 ||
        target.value_index >= current.schema.concepts[static_cast<std::size_t>(c)].cardinality)
      throw std::invalid_argument("concept shift: value index out of range for '" +
                                  target.concept_name + "'");
    std::vector<int> matching, others;
    for (int i = 0; i < current.n; ++i) {
      if (current.labels(i)[static_cast<std::size_t>(c)] == target.value_index)
        matching.push_back(i);
      else
        others.push_back(i);
    }
    if (matching.empty())
      throw std::invalid_argument("concept shift: value " +
                                  std::to_string(target.value_index) + " of '" +
                                  target.concept_name + "' absent from subset");
    // Remove drops a delta-fraction of matching samples; keep_only drops a
    // delta-fraction of everything else.
    const auto& eligible = target.mode == ConceptMode::Remove ? matching : others;
    const Rng target_root = root.fork(t);
    current = remove_rows(current, pick_affected(eligible, spec.delta, target_root));
  }
  return current;
}

struct Affine {
  Eigen::Matrix2d a = Eigen::Matrix2d::Identity();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();

  void compose(const Eigen::Matrix2d& a2, const Eigen::Vector2d& b2) {
    // Applies the new transform after the existing one.
    a = a2 * a;
    b = a2 * b + b2;
  }
};

void transform_image(const ShiftSpec& spec, Rng& rng, int height, int width,
                     int channels, std::span<const std::uint8_t> src,
                     std::span<std::uint8_t> dst) {
  Affine fwd;
  const double deg = std::numbers::pi / 180.0;
  for (ImageOp op : spec.image_ops) {
    switch (op) {
      case ImageOp::Translate: {
        const double t = translate_pixels(spec.intensity);
        fwd.compose(Eigen::Matrix2d::Identity(), Eigen::Vector2d(t, t));
        break;
      }
      case ImageOp::Rotate: {
        const double th = rotate_degrees(spec.intensity) * deg;
        Eigen::Matrix2d r;
        r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        fwd.compose(r, Eigen::Vector2d::Zero());
        break;
      }
      case ImageOp::Zoom: {
        // Direction per sample: in or out with equal probability.
        const double z = zoom_fraction(spec.intensity);
        const double f = rng.uniform() < 0.5 ? 1.0 + z : 1.0 - z;
        fwd.compose(Eigen::Matrix2d::Identity() * f, Eigen::Vector2d::Zero());
        break;
      }
      case ImageOp::Shear: {
        Eigen::Matrix2d s = Eigen::Matrix2d::Identity();
        s(0, 1) = std::tan(shear_degrees(spec.intensity) * deg);
        fwd.compose(s, Eigen::Vector2d::Zero());
        break;
      }
      case ImageOp::Flip: {
        Eigen::Matrix2d f = Eigen::Matrix2d::Identity();
        f(0, 0) = -1.0;
        fwd.compose(f, Eigen::Vector2d::Zero());
        break;
      }
    }
  }

  // Inverse-map destination pixel centers; nearest neighbor, zero padding.
  const Eigen::Matrix2d inv = fwd.a.inverse();
  const double cx = width / 2.0, cy = height / 2.0;
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      Eigen::Vector2d rel(px + 0.5 - cx, py + 0.5 - cy);
      Eigen::Vector2d s = inv * (rel - fwd.b);
      const int sx = static_cast<int>(std::floor(s.x() + cx));
      const int sy = static_cast<int>(std::floor(s.y() + cy));
      for (int ch = 0; ch < channels; ++ch) {
        const std::size_t out_idx =
            static_cast<std::size_t>((py * width + px) * channels + ch);
        if (sx < 0 || sx >= width || sy < 0 || sy >= height) {
          dst[out_idx] = 0;
        } else {
          dst[out_idx] =
              src[static_cast<std::size_t>((sy * width + sx) * channels + ch)];
        }
      }
    }
  }
}

LatentFactorDataset apply_image(const LatentFactorDataset& ds, const ShiftSpec& spec) {
  LatentFactorDataset out = ds;
  const Rng root(spec.seed);
  auto rows = all_rows(ds.n);
  std::vector<std::uint8_t> scratch(
      static_cast<std::size_t>(ds.schema.pixels_per_image()));
  for (int row : pick_affected(rows, spec.delta, root)) {
    Rng rng = root.fork(static_cast<std::uint64_t>(row));
    rng.uniform();  // selection draw
    transform_image(spec, rng, ds.schema.height, ds.schema.width,
                    ds.schema.channels, ds.image(row), scratch);
    auto img = out.mutable_image(row);
    std::copy(scratch.begin(), scratch.end(), img.begin());
  }
  return out;
}

}  // namespace

LatentFactorDataset apply_shift(const LatentFactorDataset& ds, const ShiftSpec& spec) {
  if (ds.n < 1) throw std::invalid_argument("apply_shift: empty subset");
  spec.validate();
  switch (spec.kind) {
    case ShiftKind::None:
      return ds;
    case ShiftKind::Gaussian:
      return apply_gaussian(ds, spec);
    case ShiftKind::Knockout:
      return apply_knockout(ds, spec);
    case ShiftKind::Concept:
      return apply_concept(ds, spec);
    case ShiftKind::Image:
      return apply_image(ds, spec);
    case ShiftKind::Combination: {
      LatentFactorDataset current = ds;
      for (const auto& sub : spec.combination) current = apply_shift(current, sub);
      return current;
    }
  }
  throw std::logic_error("unreachable shift kind");
}

// ---------------------------------------------------------------------------
// JSON form (embedded in experiment configs)

namespace {

const char* intensity_token(ShiftIntensity i) {
  switch (i) {
    case ShiftIntensity::Small: return "small";
    case ShiftIntensity::Medium: return "medium";
    default: return "large";
  }
}

ShiftIntensity intensity_from(const std::string& s) {
  if (s == "small") return ShiftIntensity::Small;
  if (s == "medium") return ShiftIntensity::Medium;
  if (s == "large") return ShiftIntensity::Large;
  throw std::invalid_argument("unknown shift intensity '" + s + "'");
}

ImageOp image_op_from(const std::string& s) {
  if (s == "translate") return ImageOp::Translate;
  if (s == "rotate") return ImageOp::Rotate;
  if (s == "zoom") return ImageOp::Zoom;
  if (s == "shear") return ImageOp::Shear;
  if (s == "flip") return ImageOp::Flip;
  throw std::invalid_argument("unknown image op '" + s + "'");
}

ShiftKind kind_from(const std::string& s) {
  if (s == "none") return ShiftKind::None;
  if (s == "gaussian") return ShiftKind::Gaussian;
  if (s == "knockout") return ShiftKind::Knockout;
  if (s == "concept") return ShiftKind::Concept;
  if (s == "image") return ShiftKind::Image;
  if (s == "combination") return ShiftKind::Combination;
  throw std::invalid_argument("unknown shift kind '" + s + "'");
}

json spec_to_json(const ShiftSpec& spec) {
  json j;
  j["kind"] = spec.kind_name();
  j["intensity"] = intensity_token(spec.intensity);
  j["delta"] = spec.delta;
  j["seed"] = spec.seed;
  if (spec.kind == ShiftKind::Knockout && spec.knockout_class)
    j["class"] = *spec.knockout_class;
  if (spec.kind == ShiftKind::Concept) {
    json targets = json::array();
    for (const auto& t : spec.concept_targets)
      targets.push_back(
          {{"concept", t.concept_name},
           {"value", t.value_index},
           {"mode", t.mode == ConceptMode::KeepOnly ? "keep_only" : "remove"}});
    j["targets"] = targets;
  }
  if (spec.kind == ShiftKind::Image) {
    json ops = json::array();
    for (ImageOp op : spec.image_ops) ops.push_back(op_name(op));
    j["ops"] = ops;
  }
  if (spec.kind == ShiftKind::Combination) {
    json subs = json::array();
    for (const auto& sub : spec.combination) subs.push_back(spec_to_json(sub));
    j["shifts"] = subs;
  }
  return j;
}

ShiftSpec spec_from_json(const json& j) {
  ShiftSpec spec;
  spec.kind = kind_from(j.at("kind").get<std::string>());
  if (j.contains("intensity"))
    spec.intensity = intensity_from(j.at("intensity").get<std::string>());
  if (j.contains("delta")) spec.delta = j.at("delta").get<double>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("class")) spec.knockout_class = j.at("class").get<int>();
  if (spec.kind == ShiftKind::Concept) {
    for (const auto& t : j.at("targets")) {
      ConceptTarget target;
      target.concept_name = t.at("concept").get<std::string>();
      target.value_index = t.at("value").get<int>();
      const auto mode = t.at("mode").get<std::string>();
      if (mode == "remove")
        target.mode = ConceptMode::Remove;
      else if (mode == "keep_only")
        target.mode = ConceptMode::KeepOnly;
      else
        throw std::invalid_argument("unknown concept mode '" + mode + "'");
      spec.concept_targets.push_back(std::move(target));
    }
  }
  if (spec.kind == ShiftKind::Image)
    for (const auto& op : j.at("ops"))
      spec.image_ops.push_back(image_op_from(op.get<std::string>()));
  if (spec.kind == ShiftKind::Combination)
    for (const auto& sub : j.at("shifts"))
      spec.combination.push_back(spec_from_json(sub));
  spec.validate();
  return spec;
}

}  // namespace

std::string to_json_string(const ShiftSpec& spec) { return spec_to_json(spec).dump(); }

ShiftSpec shift_spec_from_json_string(const std::string& text) {
  return spec_from_json(json::parse(text));
}

}  // namespace shiftlens::shifts
