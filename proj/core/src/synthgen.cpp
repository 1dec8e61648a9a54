#include "ame/synthgen.hpp"

#include <cmath>
#include <string>

#include "ame/error.hpp"
#include "ame/rng.hpp"
#include "json.hpp"

namespace ame {

namespace {

constexpr std::size_t kRejectionBudget = 10000;

void normalize_row(std::span<double> row) {
  double n = norm(row);
  for (double& v : row) v /= n;
}

std::vector<double> random_unit_vector(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = norm(v);
  } while (n < 1e-9);
  for (double& x : v) x /= n;
  return v;
}

// Rejection-sampled prototypes with pairwise cosine <= cos(separation).
Matrix draw_prototypes(const ClassGeometry& g, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x50524f54ULL));  // "PROT"
  const double cos_cap = std::cos(g.prototype_separation);
  Matrix protos(g.num_classes, g.embed_dim);
  std::size_t accepted = 0;
  std::size_t rejections = 0;
  while (accepted < g.num_classes) {
    std::vector<double> cand = random_unit_vector(rng, g.embed_dim);
    bool ok = true;
    for (std::size_t i = 0; i < accepted; ++i) {
      if (dot(protos.row(i), cand) > cos_cap) {
        ok = false;
        break;
      }
    }
    if (ok) {
      auto dst = protos.row(accepted);
      for (std::size_t u = 0; u < g.embed_dim; ++u) dst[u] = cand[u];
      ++accepted;
    } else if (++rejections >= kRejectionBudget) {
      throw GeometryInfeasible(
          "generate: prototype separation infeasible for (C=" +
          std::to_string(g.num_classes) + ", d=" + std::to_string(g.embed_dim) +
          ", angle=" + std::to_string(g.prototype_separation) + ")");
    }
  }
  return protos;
}

// Angularly nearest other prototype; ties broken by lowest index.
std::size_t nearest_other_prototype(const Matrix& protos, std::size_t c) {
  std::size_t best = c == 0 ? 1 : 0;
  double best_cos = dot(protos.row(c), protos.row(best));
  for (std::size_t o = 0; o < protos.rows; ++o) {
    if (o == c) continue;
    double cs = dot(protos.row(c), protos.row(o));
    if (cs > best_cos) {
      best_cos = cs;
      best = o;
    }
  }
  return best;
}

}  // namespace

void ClassGeometry::validate() const {
  if (num_classes < 2) throw InvalidArgument("ClassGeometry: need at least 2 classes");
  if (embed_dim < 2) throw InvalidArgument("ClassGeometry: need embed_dim >= 2");
  if (!(prototype_separation > 0.0) || prototype_separation > 3.14159265358979323846) {
    throw InvalidArgument("ClassGeometry: separation must lie in (0, pi]");
  }
  if (noise_scale < 0.0) throw InvalidArgument("ClassGeometry: negative noise_scale");
  if (boundary_fraction < 0.0 || boundary_fraction > 1.0) {
    throw InvalidArgument("ClassGeometry: boundary_fraction outside [0,1]");
  }
}

SyntheticDataset generate(const ClassGeometry& geometry,
                          std::size_t shots_per_class, std::uint64_t seed,
                          std::uint64_t sample_stream) {
  geometry.validate();
  if (shots_per_class < 1) throw InvalidArgument("generate: shots_per_class must be >= 1");

  const std::size_t c = geometry.num_classes;
  const std::size_t d = geometry.embed_dim;

  SyntheticDataset ds;
  ds.geometry = geometry;
  ds.shots_per_class = shots_per_class;
  ds.seed = seed;
  ds.sample_stream = sample_stream;
  ds.texts = draw_prototypes(geometry, seed);

  Rng rng(mix_seed(seed, 0x53414d50ULL + sample_stream));  // "SAMP" + stream
  const std::size_t boundary_per_class = static_cast<std::size_t>(
      std::floor(geometry.boundary_fraction * static_cast<double>(shots_per_class) + 1e-9));

  ds.images = Matrix(c * shots_per_class, d);
  ds.labels.resize(c * shots_per_class);
  std::vector<double> start(d);
  for (std::size_t cls = 0; cls < c; ++cls) {
    const std::size_t buddy = nearest_other_prototype(ds.texts, cls);
    for (std::size_t s = 0; s < shots_per_class; ++s) {
      const std::size_t row_idx = cls * shots_per_class + s;
      ds.labels[row_idx] = cls;
      auto proto = ds.texts.row(cls);
      if (s < boundary_per_class) {
        auto other = ds.texts.row(buddy);
        for (std::size_t u = 0; u < d; ++u) start[u] = proto[u] + other[u];
        normalize_row(start);
      } else {
        for (std::size_t u = 0; u < d; ++u) start[u] = proto[u];
      }
      auto dst = ds.images.row(row_idx);
      double n = 0.0;
      do {
        for (std::size_t u = 0; u < d; ++u) {
          dst[u] = start[u] + geometry.noise_scale * rng.normal();
        }
        n = norm(dst);
      } while (n < 1e-9);
      for (std::size_t u = 0; u < d; ++u) dst[u] /= n;
    }
  }

  const std::size_t base_count = (c + 1) / 2;
  for (std::size_t cls = 0; cls < c; ++cls) {
    (cls < base_count ? ds.base_classes : ds.new_classes).push_back(cls);
  }
  return ds;
}

TeacherModel make_prototype_teacher(const SyntheticDataset& dataset, double temperature) {
  if (!(temperature > 0.0)) {
    throw InvalidArgument("make_prototype_teacher: temperature must be positive");
  }
  return TeacherModel{dataset.texts, temperature};
}

Matrix teacher_logits(const TeacherModel& teacher, const Matrix& images) {
  if (images.cols != teacher.teacher_texts.cols) {
    throw InvalidArgument("teacher_logits: embedding width mismatch");
  }
  Matrix out(images.rows, teacher.teacher_texts.rows);
  for (std::size_t j = 0; j < images.rows; ++j) {
    for (std::size_t i = 0; i < teacher.teacher_texts.rows; ++i) {
      out.at(j, i) = cosine_sim(images.row(j), teacher.teacher_texts.row(i)) /
                     teacher.teacher_temperature;
    }
  }
  return out;
}

std::string dataset_to_json(const SyntheticDataset& ds) {
  nlohmann::json j;
  j["geometry"] = {{"num_classes", ds.geometry.num_classes},
                   {"embed_dim", ds.geometry.embed_dim},
                   {"prototype_separation", ds.geometry.prototype_separation},
                   {"noise_scale", ds.geometry.noise_scale},
                   {"boundary_fraction", ds.geometry.boundary_fraction}};
  j["shots_per_class"] = ds.shots_per_class;
  j["seed"] = ds.seed;
  j["sample_stream"] = ds.sample_stream;
  j["images"] = ds.images.data;
  j["labels"] = ds.labels;
  j["texts"] = ds.texts.data;
  j["base_classes"] = ds.base_classes;
  j["new_classes"] = ds.new_classes;
  return j.dump(2) + "\n";
}

SyntheticDataset dataset_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(std::string("dataset_from_json: ") + e.what());
  }
  SyntheticDataset ds;
  try {
    const auto& g = j.at("geometry");
    ds.geometry.num_classes = g.at("num_classes").get<std::size_t>();
    ds.geometry.embed_dim = g.at("embed_dim").get<std::size_t>();
    ds.geometry.prototype_separation = g.at("prototype_separation").get<double>();
    ds.geometry.noise_scale = g.at("noise_scale").get<double>();
    ds.geometry.boundary_fraction = g.at("boundary_fraction").get<double>();
    ds.shots_per_class = j.at("shots_per_class").get<std::size_t>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.sample_stream = j.at("sample_stream").get<std::uint64_t>();
    ds.labels = j.at("labels").get<std::vector<std::size_t>>();
    ds.base_classes = j.at("base_classes").get<std::vector<std::size_t>>();
    ds.new_classes = j.at("new_classes").get<std::vector<std::size_t>>();
    ds.images = Matrix(ds.labels.size(), ds.geometry.embed_dim);
    ds.images.data = j.at("images").get<std::vector<double>>();
    ds.texts = Matrix(ds.geometry.num_classes, ds.geometry.embed_dim);
    ds.texts.data = j.at("texts").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("dataset_from_json: ") + e.what());
  }
  if (ds.images.data.size() != ds.images.rows * ds.images.cols ||
      ds.texts.data.size() != ds.texts.rows * ds.texts.cols) {
    throw InvalidArgument("dataset_from_json: embedding array size mismatch");
  }
  return ds;
}

}  // namespace ame
