#include "ame/experiment.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "ame/diagnostics.hpp"
#include "ame/error.hpp"
#include "ame/sha256.hpp"
#include "ame/textio.hpp"
#include "ame/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ame {

namespace {

// The collapse study runs the entropy objective to its degenerate attractor,
// which the 20-epoch protocol at the protocol learning rate never reaches.
constexpr std::size_t kCollapseDefaultEpochs = 400;
constexpr double kCollapseDefaultLearningRate = 0.05;

struct FieldLog {
  std::vector<FieldNote>* notes = nullptr;

  void add(const std::string& field, const std::string& value,
           const std::string& source, bool defaulted) {
    if (notes) notes->push_back({field, value, source, defaulted});
  }
};

constexpr const char* kProtocol = "training protocol";
constexpr const char* kArtifact = "artifact default";

template <typename T>
std::string value_str(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

template <typename T>
std::string value_str(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += value_str(v[i]);
  }
  return out + "]";
}

template <typename T>
void read_field(const nlohmann::json& obj, const std::string& key,
                const std::string& path, T& target, const char* source,
                FieldLog& log) {
  if (obj.contains(key)) {
    try {
      target = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("field '" + path + "': " + e.what());
    }
    log.add(path, value_str(target), "config file", false);
  } else {
    log.add(path, value_str(target), source, true);
  }
}

void reject_unknown_keys(const nlohmann::json& obj, const std::string& scope,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw InvalidArgument("unknown field '" + scope + item.key() + "'");
    }
  }
}

// Exit code 4 covers both a missing and an unwritable output directory.
bool usable_output_dir(const std::string& path, std::string* message) {
  if (!fs::is_directory(path)) {
    *message = "output directory does not exist: " + path;
    return false;
  }
  if (::access(path.c_str(), W_OK) != 0) {
    *message = "output directory is not writable: " + path;
    return false;
  }
  return true;
}

Recipe recipe_from_string(const std::string& name) {
  if (name == "base-to-new") return Recipe::kBaseToNew;
  if (name == "collapse") return Recipe::kCollapse;
  if (name == "angle-study") return Recipe::kAngleStudy;
  if (name == "gap-sweep") return Recipe::kGapSweep;
  if (name == "shot-sweep") return Recipe::kShotSweep;
  throw InvalidArgument(
      "field 'recipe': unknown recipe '" + name +
      "' (expected base-to-new, collapse, angle-study, gap-sweep or shot-sweep)");
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["recipe"] = recipe_name(c.recipe);
  j["seeds"] = c.seeds;
  j["shots"] = c.shots;
  j["test_shots"] = c.test_shots;
  j["shot_grid"] = c.shot_grid;
  j["gap_test_samples"] = c.gap_test_samples;
  j["teacher_temperature"] = c.teacher_temperature;
  j["geometry"] = {{"num_classes", c.geometry.num_classes},
                   {"embed_dim", c.geometry.embed_dim},
                   {"prototype_separation", c.geometry.prototype_separation},
                   {"noise_scale", c.geometry.noise_scale},
                   {"boundary_fraction", c.geometry.boundary_fraction}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"omega", c.train.omega},
                {"kd_temperature", c.train.kd_temperature},
                {"kd_weight", c.train.kd_weight},
                {"manifold_dim", c.train.manifold_dim},
                {"kernel_width", c.train.kernel_width},
                {"logit_temperature", c.train.logit_temperature},
                {"projections_learnable", c.train.projections_learnable},
                {"identity_projections", c.train.identity_projections},
                {"train_projection_biases", c.train.train_projection_biases},
                {"student_init",
                 c.train.student_init == StudentInit::kTeacher ? "teacher" : "random"}};
  return j;
}

// Accumulates output files and finishes with a manifest of their hashes.
class OutputWriter {
 public:
  explicit OutputWriter(const fs::path& root) : root_(root) {}

  void write(const std::string& rel_path, const std::string& content) {
    const fs::path full = root_ / rel_path;
    fs::create_directories(full.parent_path());
    write_text_file(full.string(), content);
    entries_.push_back({rel_path, sha256_hex(content), content.size()});
  }

  std::vector<std::string> finish_with_manifest(const ExperimentConfig& config) {
    nlohmann::json manifest;
    manifest["recipe"] = recipe_name(config.recipe);
    manifest["library_version"] = kVersion;
    manifest["config"] = config_to_json(config);
    std::sort(entries_.begin(), entries_.end(),
              [](const Entry& a, const Entry& b) { return a.path < b.path; });
    nlohmann::json outputs = nlohmann::json::array();
    for (const Entry& e : entries_) {
      outputs.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    }
    manifest["outputs"] = outputs;
    const std::string content = manifest.dump(2) + "\n";
    write_text_file((root_ / "manifest.json").string(), content);

    std::vector<std::string> files;
    for (const Entry& e : entries_) files.push_back(e.path);
    files.push_back("manifest.json");
    return files;
  }

 private:
  struct Entry {
    std::string path;
    std::string sha256;
    std::size_t bytes = 0;
  };
  fs::path root_;
  std::vector<Entry> entries_;
};

std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream os;
  trace.write_csv(os);
  return os.str();
}

Matrix base_split_images(const SyntheticDataset& ds,
                         std::vector<std::size_t>* local_labels) {
  const auto& base = ds.base_classes;
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < ds.images.rows; ++r) {
    auto it = std::find(base.begin(), base.end(), ds.labels[r]);
    if (it != base.end()) {
      idx.push_back(r);
      if (local_labels) {
        local_labels->push_back(static_cast<std::size_t>(it - base.begin()));
      }
    }
  }
  Matrix out(idx.size(), ds.images.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = ds.images.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix matrix_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// Alignment of the trained parameters over the training base split.
AlignmentMetrics train_split_alignment(const TrainResult& trained,
                                       const SyntheticDataset& ds_train) {
  std::vector<std::size_t> local_labels;
  const Matrix images = base_split_images(ds_train, &local_labels);
  const Matrix base_texts = matrix_rows(trained.student.texts, ds_train.base_classes);
  auto [pt, pv] = apply_projections(trained.projections, base_texts, images);
  return alignment_metrics(class_manifold_rows(pt, pv, local_labels));
}

std::string embeddings_csv(const TrainResult& trained, const SyntheticDataset& ds) {
  auto [pt, pv] = apply_projections(trained.projections, trained.student.texts, ds.images);
  std::ostringstream os;
  os << "row_id,class,modality";
  for (std::size_t c = 0; c < pt.cols; ++c) os << ",m" << c;
  os << "\n";
  std::size_t row_id = 0;
  for (std::size_t i = 0; i < pt.rows; ++i, ++row_id) {
    os << row_id << "," << i << ",text";
    for (std::size_t c = 0; c < pt.cols; ++c) os << "," << format_double(pt.at(i, c));
    os << "\n";
  }
  for (std::size_t j = 0; j < pv.rows; ++j, ++row_id) {
    os << row_id << "," << ds.labels[j] << ",image";
    for (std::size_t c = 0; c < pv.cols; ++c) os << "," << format_double(pv.at(j, c));
    os << "\n";
  }
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void run_base_to_new(const ExperimentConfig& config, OutputWriter& out) {
  nlohmann::json per_seed = nlohmann::json::array();
  double mean_base = 0.0;
  double mean_new = 0.0;
  double mean_hm = 0.0;
  for (std::uint64_t seed : config.seeds) {
    SyntheticDataset ds_train = generate(config.geometry, config.shots, seed, 0);
    SyntheticDataset ds_test = generate(config.geometry, config.test_shots, seed, 1);
    TeacherModel teacher = make_prototype_teacher(ds_train, config.teacher_temperature);
    TrainConfig cfg = config.train;
    cfg.seed = seed;
    TrainResult trained = train(ds_train, teacher, cfg);
    EvalReport report = evaluate(trained.student, ds_test, EvalSplit::kBoth);
    AlignmentMetrics align = train_split_alignment(trained, ds_train);

    const std::string prefix = "seed_" + std::to_string(seed) + "/";
    out.write(prefix + "trace.csv", trace_to_csv(trained.trace));
    out.write(prefix + "student.json", student_to_json(trained.student));
    out.write(prefix + "projections.json", projection_to_json(trained.projections));
    out.write(prefix + "embeddings.csv", embeddings_csv(trained, ds_test));

    per_seed.push_back(
        {{"seed", seed},
         {"base", report.base_acc},
         {"new", report.new_acc},
         {"hm", report.hm},
         {"per_class", report.per_class_acc},
         {"alignment",
          {{"intra_spread", align.intra_spread},
           {"zeta_hat", align.zeta_hat},
           {"margin_ok", align.zeta_hat > align.intra_spread && align.zeta_hat > 0.0}}}});
    mean_base += report.base_acc;
    mean_new += report.new_acc;
    mean_hm += report.hm;
  }
  const double n = static_cast<double>(config.seeds.size());
  nlohmann::json eval = {{"per_seed", per_seed},
                         {"mean",
                          {{"base", mean_base / n},
                           {"new", mean_new / n},
                           {"hm", mean_hm / n}}}};
  out.write("eval.json", eval.dump(2) + "\n");
}

void run_collapse(const ExperimentConfig& config, OutputWriter& out) {
  nlohmann::json per_seed = nlohmann::json::array();
  std::size_t failed = 0;
  for (std::uint64_t seed : config.seeds) {
    SyntheticDataset ds_train = generate(config.geometry, config.shots, seed, 0);
    TeacherModel teacher = make_prototype_teacher(ds_train, config.teacher_temperature);
    TrainConfig cfg = config.train;
    cfg.seed = seed;
    TrainResult trained = train(ds_train, teacher, cfg);
    AlignmentMetrics align = train_split_alignment(trained, ds_train);
    const bool margin_ok = align.zeta_hat > align.intra_spread && align.zeta_hat > 0.0;
    if (!margin_ok) ++failed;

    const std::string prefix = "seed_" + std::to_string(seed) + "/";
    out.write(prefix + "trace.csv", trace_to_csv(trained.trace));
    per_seed.push_back({{"seed", seed},
                        {"intra_spread", align.intra_spread},
                        {"zeta_hat", align.zeta_hat},
                        {"margin_ok", margin_ok},
                        {"final_entropy", trained.trace.epoch_mean_entropy.back()}});
  }
  nlohmann::json collapse = {
      {"per_seed", per_seed},
      {"margin_failures", failed},
      {"verdict", 2 * failed >= config.seeds.size() ? "failed" : "passed"}};
  out.write("collapse.json", collapse.dump(2) + "\n");
}

void run_angle_study(const ExperimentConfig& config, OutputWriter& out) {
  nlohmann::json summary;
  struct Arm {
    const char* name;
    bool frozen;
  };
  for (const Arm arm : {Arm{"learnable", false}, Arm{"frozen", true}}) {
    std::vector<double> pooled;
    nlohmann::json arm_seeds = nlohmann::json::array();
    for (std::uint64_t seed : config.seeds) {
      SyntheticDataset ds_train = generate(config.geometry, config.shots, seed, 0);
      TeacherModel teacher =
          make_prototype_teacher(ds_train, config.teacher_temperature);
      TrainConfig cfg = config.train;
      cfg.seed = seed;
      if (arm.frozen) {
        cfg.identity_projections = true;
        cfg.projections_learnable = false;
        cfg.manifold_dim = config.geometry.embed_dim;
      }
      TrainResult trained = train(ds_train, teacher, cfg);

      std::ostringstream os;
      os << "step,angle_deg\n";
      std::vector<double> angles;
      for (const StepRecord& s : trained.trace.steps) {
        if (std::isfinite(s.grad_angle_deg)) {
          os << s.step << "," << format_double(s.grad_angle_deg) << "\n";
          angles.push_back(s.grad_angle_deg);
          pooled.push_back(s.grad_angle_deg);
        }
      }
      out.write(std::string(arm.name) + "/seed_" + std::to_string(seed) +
                    "/angles.csv",
                os.str());
      arm_seeds.push_back({{"seed", seed},
                           {"median_deg", median(angles)},
                           {"steps", angles.size()}});
    }
    summary[arm.name] = {{"median_deg", median(pooled)}, {"per_seed", arm_seeds}};
  }
  out.write("angle_summary.json", summary.dump(2) + "\n");
}

std::string gap_points_csv(const GapSweepResult& sweep) {
  std::ostringstream os;
  os << "n,seed,train_loss,test_loss,gap,delta_hat\n";
  for (const GapPoint& p : sweep.points) {
    if (p.diverged) continue;
    os << p.n << "," << p.seed << "," << format_double(p.train_loss) << ","
       << format_double(p.test_loss) << "," << format_double(p.gap) << ","
       << format_double(p.delta_hat) << "\n";
  }
  return os.str();
}

void run_gap_sweep(const ExperimentConfig& config, OutputWriter& out) {
  TrainConfig cfg = config.train;
  GapSweepResult with_entropy = gap_sweep(config.geometry, config.shot_grid, cfg,
                                          config.seeds, config.gap_test_samples);
  TrainConfig cfg0 = config.train;
  cfg0.omega = 0.0;
  GapSweepResult without_entropy = gap_sweep(
      config.geometry, config.shot_grid, cfg0, config.seeds, config.gap_test_samples);

  out.write("gap_sweep.csv", gap_points_csv(with_entropy));
  out.write("gap_sweep_omega0.csv", gap_points_csv(without_entropy));

  auto mean_json = [](const GapSweepResult& s) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < s.grid_n.size(); ++i) {
      arr.push_back({{"n", s.grid_n[i]}, {"gap", s.mean_gap[i]}});
    }
    return arr;
  };
  nlohmann::json diverged = nlohmann::json::array();
  for (const GapSweepResult* s : {&with_entropy, &without_entropy}) {
    for (const GapPoint& p : s->points) {
      if (p.diverged) {
        diverged.push_back({{"n", p.n},
                            {"seed", p.seed},
                            {"omega", s == &with_entropy ? cfg.omega : 0.0}});
      }
    }
  }
  nlohmann::json summary = {
      {"slope", with_entropy.slope},
      {"slope_omega0", without_entropy.slope},
      {"mean_gap", mean_json(with_entropy)},
      {"mean_gap_omega0", mean_json(without_entropy)},
      {"low_shot",
       {{"n", with_entropy.grid_n.front()},
        {"gap", with_entropy.mean_gap.front()},
        {"gap_omega0", without_entropy.mean_gap.front()}}},
      {"diverged", diverged}};
  out.write("gap_summary.json", summary.dump(2) + "\n");
}

void run_shot_sweep(const ExperimentConfig& config, OutputWriter& out) {
  std::ostringstream os;
  os << "shots,seed,base_acc,new_acc,hm\n";
  for (std::size_t shots : config.shot_grid) {
    for (std::uint64_t seed : config.seeds) {
      SyntheticDataset ds_train = generate(config.geometry, shots, seed, 0);
      SyntheticDataset ds_test = generate(config.geometry, config.test_shots, seed, 1);
      TeacherModel teacher =
          make_prototype_teacher(ds_train, config.teacher_temperature);
      TrainConfig cfg = config.train;
      cfg.seed = seed;
      TrainResult trained = train(ds_train, teacher, cfg);
      EvalReport report = evaluate(trained.student, ds_test, EvalSplit::kBoth);
      os << shots << "," << seed << "," << format_double(report.base_acc) << ","
         << format_double(report.new_acc) << "," << format_double(report.hm) << "\n";
    }
  }
  out.write("shot_sweep.csv", os.str());
}

}  // namespace

const char* recipe_name(Recipe r) {
  switch (r) {
    case Recipe::kBaseToNew:
      return "base-to-new";
    case Recipe::kCollapse:
      return "collapse";
    case Recipe::kAngleStudy:
      return "angle-study";
    case Recipe::kGapSweep:
      return "gap-sweep";
    case Recipe::kShotSweep:
      return "shot-sweep";
  }
  return "unknown";
}

ParseReport parse_config_text(const std::string& json_text) {
  ParseReport report;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    report.error = e.what();
    return report;
  }

  FieldLog log{&report.fields};
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw InvalidArgument("config root must be a JSON object");
    reject_unknown_keys(j, "",
                        {"recipe", "output_dir", "seeds", "shots", "test_shots",
                         "shot_grid", "gap_test_samples", "teacher_temperature",
                         "geometry", "train"});
    if (!j.contains("recipe")) throw InvalidArgument("missing required field 'recipe'");
    c.recipe = recipe_from_string(j.at("recipe").get<std::string>());
    log.add("recipe", recipe_name(c.recipe), "config file", false);
    if (!j.contains("output_dir") || !j.at("output_dir").is_string()) {
      throw InvalidArgument("missing required field 'output_dir'");
    }
    c.output_dir = j.at("output_dir").get<std::string>();
    log.add("output_dir", c.output_dir, "config file", false);

    read_field(j, "seeds", "seeds", c.seeds, kProtocol, log);
    read_field(j, "shots", "shots", c.shots, kArtifact, log);
    read_field(j, "test_shots", "test_shots", c.test_shots, kArtifact, log);
    read_field(j, "shot_grid", "shot_grid", c.shot_grid, kArtifact, log);
    read_field(j, "gap_test_samples", "gap_test_samples", c.gap_test_samples,
               kArtifact, log);
    read_field(j, "teacher_temperature", "teacher_temperature",
               c.teacher_temperature, kArtifact, log);

    nlohmann::json geometry = j.value("geometry", nlohmann::json::object());
    if (!geometry.is_object()) throw InvalidArgument("field 'geometry' must be an object");
    reject_unknown_keys(geometry, "geometry.",
                        {"num_classes", "embed_dim", "prototype_separation",
                         "noise_scale", "boundary_fraction"});
    read_field(geometry, "num_classes", "geometry.num_classes",
               c.geometry.num_classes, kArtifact, log);
    read_field(geometry, "embed_dim", "geometry.embed_dim", c.geometry.embed_dim,
               kArtifact, log);
    read_field(geometry, "prototype_separation", "geometry.prototype_separation",
               c.geometry.prototype_separation, kArtifact, log);
    read_field(geometry, "noise_scale", "geometry.noise_scale",
               c.geometry.noise_scale, kArtifact, log);
    read_field(geometry, "boundary_fraction", "geometry.boundary_fraction",
               c.geometry.boundary_fraction, kArtifact, log);

    nlohmann::json train = j.value("train", nlohmann::json::object());
    if (!train.is_object()) throw InvalidArgument("field 'train' must be an object");
    reject_unknown_keys(train, "train.",
                        {"epochs", "batch_size", "learning_rate", "omega",
                         "kd_temperature", "kd_weight", "manifold_dim",
                         "kernel_width", "logit_temperature",
                         "projections_learnable", "identity_projections",
                         "train_projection_biases", "student_init"});
    if (c.recipe == Recipe::kCollapse) {
      // Recipe semantics: entropy-only objective driven to its attractor.
      c.train.kd_weight = 0.0;
      c.train.epochs = kCollapseDefaultEpochs;
      c.train.learning_rate = kCollapseDefaultLearningRate;
    }
    const char* collapse_or_protocol =
        c.recipe == Recipe::kCollapse ? "collapse recipe default" : kProtocol;
    read_field(train, "epochs", "train.epochs", c.train.epochs,
               collapse_or_protocol, log);
    read_field(train, "batch_size", "train.batch_size", c.train.batch_size,
               kProtocol, log);
    read_field(train, "learning_rate", "train.learning_rate",
               c.train.learning_rate, collapse_or_protocol, log);
    read_field(train, "omega", "train.omega", c.train.omega, kProtocol, log);
    read_field(train, "kd_temperature", "train.kd_temperature",
               c.train.kd_temperature, kArtifact, log);
    read_field(train, "kd_weight", "train.kd_weight", c.train.kd_weight,
               c.recipe == Recipe::kCollapse ? "collapse recipe default" : kArtifact,
               log);
    read_field(train, "manifold_dim", "train.manifold_dim", c.train.manifold_dim,
               kArtifact, log);
    read_field(train, "kernel_width", "train.kernel_width", c.train.kernel_width,
               kArtifact, log);
    read_field(train, "logit_temperature", "train.logit_temperature",
               c.train.logit_temperature, kArtifact, log);
    read_field(train, "projections_learnable", "train.projections_learnable",
               c.train.projections_learnable, kArtifact, log);
    read_field(train, "identity_projections", "train.identity_projections",
               c.train.identity_projections, kArtifact, log);
    read_field(train, "train_projection_biases", "train.train_projection_biases",
               c.train.train_projection_biases, kArtifact, log);
    std::string init = c.train.student_init == StudentInit::kTeacher ? "teacher" : "random";
    read_field(train, "student_init", "train.student_init", init, kArtifact, log);
    if (init == "teacher") {
      c.train.student_init = StudentInit::kTeacher;
    } else if (init == "random") {
      c.train.student_init = StudentInit::kRandom;
    } else {
      throw InvalidArgument("field 'train.student_init': expected 'random' or 'teacher'");
    }

    // Invariants beyond field types.
    c.geometry.validate();
    c.train.validate();
    if (c.seeds.empty()) throw InvalidArgument("field 'seeds': must be non-empty");
    if (c.shots < 1) throw InvalidArgument("field 'shots': must be positive");
    if (c.test_shots < 1) throw InvalidArgument("field 'test_shots': must be positive");
    if (!(c.teacher_temperature > 0.0)) {
      throw InvalidArgument("field 'teacher_temperature': must be positive");
    }
    if (c.recipe == Recipe::kGapSweep || c.recipe == Recipe::kShotSweep) {
      if (c.shot_grid.empty()) throw InvalidArgument("field 'shot_grid': must be non-empty");
      for (std::size_t s : c.shot_grid) {
        if (s < 1) throw InvalidArgument("field 'shot_grid': entries must be positive");
      }
    }
    if (c.recipe == Recipe::kGapSweep) {
      if (c.shot_grid.size() < 3) {
        throw InvalidArgument("field 'shot_grid': gap-sweep needs >= 3 grid points");
      }
      if (c.seeds.size() < 3) {
        throw InvalidArgument("field 'seeds': gap-sweep needs >= 3 seeds");
      }
    }
    if (c.train.identity_projections &&
        c.train.manifold_dim != c.geometry.embed_dim) {
      throw InvalidArgument(
          "train.identity_projections requires train.manifold_dim == geometry.embed_dim");
    }
  } catch (const InvalidArgument& e) {
    report.error = e.what();
    report.fields.clear();
    return report;
  } catch (const nlohmann::json::exception& e) {
    report.error = e.what();
    report.fields.clear();
    return report;
  }

  report.ok = true;
  report.config = c;
  return report;
}

std::string resolve_output_dir(const std::string& configured) {
  fs::path p(configured);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("AME_OUTPUT_ROOT")) {
    return (fs::path(root) / p).string();
  }
  return p.string();
}

ValidationResult validate_config_file(const std::string& config_path) {
  ValidationResult result;
  std::string text;
  try {
    text = read_text_file(config_path);
  } catch (const InvalidArgument& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  }
  result.report = parse_config_text(text);
  if (!result.report.ok) {
    result.exit_code = 2;
    result.message = result.report.error;
    return result;
  }
  result.resolved_output_dir = resolve_output_dir(result.report.config.output_dir);
  std::string dir_message;
  if (!usable_output_dir(result.resolved_output_dir, &dir_message)) {
    result.exit_code = 4;
    result.message = dir_message;
    return result;
  }
  result.message = "ok";
  return result;
}

RunResult run_experiment(const ExperimentConfig& config,
                         const std::string& resolved_output_dir) {
  RunResult result;
  std::string dir_message;
  if (!usable_output_dir(resolved_output_dir, &dir_message)) {
    result.exit_code = 4;
    result.message = dir_message;
    return result;
  }
  OutputWriter out{fs::path(resolved_output_dir)};
  try {
    switch (config.recipe) {
      case Recipe::kBaseToNew:
        run_base_to_new(config, out);
        break;
      case Recipe::kCollapse:
        run_collapse(config, out);
        break;
      case Recipe::kAngleStudy:
        run_angle_study(config, out);
        break;
      case Recipe::kGapSweep:
        run_gap_sweep(config, out);
        break;
      case Recipe::kShotSweep:
        run_shot_sweep(config, out);
        break;
    }
  } catch (const DivergenceError& e) {
    result.exit_code = 3;
    result.message = std::string(e.what()) + " (kd=" + format_double(e.kd()) +
                     ", entropy=" + format_double(e.entropy()) +
                     ", total=" + format_double(e.total()) + ")";
    return result;
  } catch (const GeometryInfeasible& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  } catch (const InvalidArgument& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  }
  result.written_files = out.finish_with_manifest(config);
  result.message = "ok";
  return result;
}

RunResult run_experiment_file(const std::string& config_path) {
  RunResult result;
  std::string text;
  try {
    text = read_text_file(config_path);
  } catch (const InvalidArgument& e) {
    result.exit_code = 2;
    result.message = e.what();
    return result;
  }
  ParseReport report = parse_config_text(text);
  if (!report.ok) {
    result.exit_code = 2;
    result.message = report.error;
    return result;
  }
  return run_experiment(report.config, resolve_output_dir(report.config.output_dir));
}

}  // namespace ame
