// ppseg: command-line driver for the point-supervised nuclei segmentation
// pipeline. Every stage reads its inputs from and writes its artifacts to the
// run directory, and records a manifest that can be replayed.

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <ppseg/io.hpp>
#include <ppseg/pipeline.hpp>

namespace fs = std::filesystem;
using namespace ppseg;
using io::Json;

namespace {

// ---- configuration

struct Key {
  const char* name;
  const char* value;
  const char* help;
};

const std::vector<Key> kKeys = {
    {"out", "run", "run directory"},
    {"data_dir", "", "dataset root with train/val/test subdirectories (default <out>/data)"},
    {"normalize", "true", "Reinhard color normalization against the first training image"},
    {"synth.size", "128", "synthetic image side length"},
    {"synth.train", "20", "synthetic training images"},
    {"synth.val", "5", "synthetic validation images"},
    {"synth.test", "5", "synthetic test images"},
    {"synth.seed", "1", "synthetic benchmark seed"},
    {"synth.min_count", "36", "nuclei per image, lower bound"},
    {"synth.max_count", "44", "nuclei per image, upper bound"},
    {"synth.min_clutter", "3", "clutter blobs per image, lower bound"},
    {"synth.max_clutter", "6", "clutter blobs per image, upper bound"},
    {"synth.noise", "0.04", "per-pixel noise std"},
    {"ratio", "0.1", "fraction of annotated nuclei"},
    {"point_seed", "0", "seed of the partial annotation"},
    {"train.seed", "0", "weight init and image order seed"},
    {"train.hidden", "16", "hidden units of the pixel model"},
    {"det.r1", "5", "average nuclear radius"},
    {"det.r2", "10", "outer radius of the background band"},
    {"det.sigma", "2.5", "Gaussian bandwidth"},
    {"det.w_pos", "10", "weight of foreground mask pixels"},
    {"det.threshold", "0.5", "probability threshold for detections"},
    {"det.bg_low", "0.1", "background propagation: low probability"},
    {"det.bg_high", "0.7", "background propagation: high probability"},
    {"det.rounds", "3", "self-training rounds"},
    {"det.epochs", "80", "detection epochs per round"},
    {"det.lr", "0.01", "detection learning rate"},
    {"det.init", "ext-gm", "initial mask: ext-gm | gm"},
    {"det.strategy", "st-bg", "self-training: st-bg | st-nu"},
    {"det.warm", "previous", "self-training start: previous | initial | cold"},
    {"match_radius", "5", "detection matching radius"},
    {"label_points", "detected", "points used for labels: detected | gt"},
    {"cluster_seed", "0", "k-means seed"},
    {"alpha", "0.5", "weight of the Voronoi loss"},
    {"seg.epochs", "100", "segmentation epochs"},
    {"seg.lr", "0.01", "segmentation learning rate"},
    {"seg.threshold", "0.5", "foreground threshold"},
    {"seg.min_area", "0", "drop predicted instances smaller than this"},
    {"crf.sigma_pq", "9", "spatial bandwidth"},
    {"crf.sigma_rgb", "0.2", "color bandwidth"},
    {"crf.beta", "0.001", "weight of the pairwise loss"},
    {"crf.mode", "filtered", "affinity: filtered | exact"},
    {"ft.epochs", "20", "fine-tuning epochs"},
    {"ft.lr", "0.001", "fine-tuning learning rate"},
    {"infer.split", "test", "split to run inference on"},
    {"infer.data_dir", "", "dataset for inference and evaluation (default data_dir)"},
    {"infer.model", "finetune", "segmentation model: finetune | segment"},
    {"ablate.axis", "strategy", "strategy | ratio | seeds | alpha | crf"},
    {"ablate.ratios", "0.05,0.1,0.25,0.5", "ratio sweep"},
    {"ablate.seeds", "10", "number of annotation seeds"},
    {"ablate.alphas", "0,0.1,0.3,0.5,0.7,0.9,1", "alpha sweep"},
    {"ablate.sigma_pq", "5,9,15", "spatial bandwidth sweep"},
    {"ablate.sigma_rgb", "0.1,0.2,0.4", "color bandwidth sweep"},
    {"ablate.betas", "0.0001,0.001,0.01", "pairwise weight sweep"},
};

Error usage(const std::string& what) { return Error(ErrorKind::kUsage, what); }
Error data_error(const std::string& what) { return Error(ErrorKind::kData, what); }

class Config {
 public:
  Config() {
    for (const auto& k : kKeys) kv_[k.name] = k.value;
  }

  void set(const std::string& key, const std::string& value) {
    if (!kv_.count(key)) throw usage("unknown config key '" + key + "'");
    kv_[key] = value;
  }
  void merge(const io::KeyValues& kv) {
    for (const auto& [k, v] : kv) set(k, v);
  }
  void set_assignment(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw usage("--set expects key=value, got '" + s + "'");
    set(s.substr(0, eq), s.substr(eq + 1));
  }

  const std::string& str(const std::string& key) const { return kv_.at(key); }

  double num(const std::string& key) const {
    const auto& s = str(key);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !std::isfinite(v)) throw usage(key + ": not a number: '" + s + "'");
    return v;
  }
  int integer(const std::string& key) const {
    const double v = num(key);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw usage(key + ": not an integer");
    return static_cast<int>(v);
  }
  std::uint64_t seed(const std::string& key) const {
    const int v = integer(key);
    if (v < 0) throw usage(key + ": seeds must be >= 0");
    return static_cast<std::uint64_t>(v);
  }
  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw usage(key + ": expected true or false");
  }
  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw usage(key + ": bad list item '" + item + "'");
      }
    }
    if (out.empty()) throw usage(key + ": empty list");
    return out;
  }
  const std::string& choice(const std::string& key, std::initializer_list<const char*> allowed) const {
    const auto& s = str(key);
    for (const char* a : allowed)
      if (s == a) return s;
    throw usage(key + ": unexpected value '" + s + "'");
  }

  Json json() const { return Json(kv_); }

  /// Canonical "key=value" lines, sorted by key.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : kv_) s += k + "=" + v + "\n";
    return s;
  }

  fs::path out() const { return str("out"); }
  fs::path data_dir() const {
    return str("data_dir").empty() ? out() / "data" : fs::path(str("data_dir"));
  }

 private:
  std::map<std::string, std::string> kv_;
};

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::kNumeric, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw data_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- run context

struct Run {
  std::string stage;
  Config cfg;
  std::vector<fs::path> artifacts;

  fs::path out() const { return cfg.out(); }

  fs::path file(const fs::path& rel) {
    artifacts.push_back(rel);
    return out() / rel;
  }

  fs::path need(const fs::path& rel, const std::string& producer) const {
    const auto p = out() / rel;
    if (!fs::exists(p)) throw data_error("missing " + p.string() + " (run '" + producer + "' first)");
    return p;
  }

  void write_manifest() const {
    Json m;
    m["stage"] = stage;
    m["config"] = cfg.json();
    m["config_hash"] = sha256_hex(cfg.canonical());
    m["seeds"] = {{"synth", cfg.seed("synth.seed")},
                  {"points", cfg.seed("point_seed")},
                  {"train", cfg.seed("train.seed")},
                  {"cluster", cfg.seed("cluster_seed")}};
    Json arts = Json::object();
    for (const auto& rel : artifacts) arts[rel.generic_string()] = sha256_hex(file_bytes(out() / rel));
    m["artifacts"] = arts;
    io::write_json(out() / "manifests" / (stage + ".json"), m);
  }
};

std::string stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

// ---- datasets on disk: <root>/<split>/NNN_image.png, NNN_instances.png, NNN_points.json

struct DiskSplit {
  std::vector<std::string> names;
  Split split;
  bool has_instances = false;
};

DiskSplit read_split(const fs::path& root, const std::string& name, bool need_instances) {
  const fs::path dir = root / name;
  if (!fs::is_directory(dir)) throw data_error("missing dataset split " + dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string f = e.path().filename().string();
    const std::string suffix = "_image.png";
    if (f.size() > suffix.size() && f.ends_with(suffix)) names.push_back(f.substr(0, f.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw data_error("no images in " + dir.string());
  DiskSplit out;
  out.names = names;
  out.has_instances = true;
  for (const auto& n : names) {
    out.split.images.push_back(io::read_image(dir / (n + "_image.png")));
    const auto inst = dir / (n + "_instances.png");
    if (fs::exists(inst)) {
      out.split.instances.push_back(io::read_instances(inst));
      require_same_shape(out.split.images.back(), out.split.instances.back(), n.c_str());
    } else {
      out.has_instances = false;
      out.split.instances.emplace_back();
    }
    const auto pts = dir / (n + "_points.json");
    out.split.centers.push_back(fs::exists(pts) ? io::read_points(pts) : PointSet{});
  }
  if (need_instances && !out.has_instances) throw data_error(dir.string() + ": instance masks required");
  return out;
}

ColorStats reference_stats(Run& run, const DiskSplit& train, bool create) {
  const fs::path rel = "color_stats.json";
  if (create) {
    const ColorStats s = compute_color_stats(train.split.images.front());
    io::write_json(run.file(rel), io::color_stats_json(s));
    return s;
  }
  return io::color_stats_from_json(io::read_json(run.need(rel, "detect")));
}

/// Training split normalized with the reference stored by `detect`.
DiskSplit load_train(Run& run, bool create_stats = false) {
  DiskSplit d = read_split(run.cfg.data_dir(), "train", false);
  if (run.cfg.flag("normalize")) normalize_split(d.split, reference_stats(run, d, create_stats));
  return d;
}

DiskSplit load_split(Run& run, const fs::path& root, const std::string& name, bool need_instances) {
  DiskSplit d = read_split(root, name, need_instances);
  if (run.cfg.flag("normalize")) normalize_split(d.split, reference_stats(run, d, false));
  return d;
}

DetectionConfig detection_config(const Config& c) {
  DetectionConfig d;
  d.r1 = c.num("det.r1");
  d.r2 = c.num("det.r2");
  d.sigma = c.num("det.sigma");
  d.w_pos = c.num("det.w_pos");
  d.prob_threshold = c.num("det.threshold");
  d.bg_low = c.num("det.bg_low");
  d.bg_high = c.num("det.bg_high");
  d.rounds = c.integer("det.rounds");
  d.validate();
  return d;
}

TrainConfig train_config(const Config& c, const std::string& prefix) {
  TrainConfig t;
  t.epochs = c.integer(prefix + ".epochs");
  t.adam.learning_rate = c.num(prefix + ".lr");
  t.seed = c.seed("train.seed");
  t.hidden = c.integer("train.hidden");
  if (t.hidden < 1) throw usage("train.hidden must be >= 1");
  t.validate();
  return t;
}

CrfParams crf_params(const Config& c) {
  CrfParams p = CrfParams::bilateral(c.num("crf.sigma_pq"), c.num("crf.sigma_rgb"), c.num("crf.beta"));
  p.validate();
  return p;
}

AffinityMode crf_mode(const Config& c) {
  return c.choice("crf.mode", {"filtered", "exact"}) == "exact" ? AffinityMode::kExact
                                                                : AffinityMode::kFiltered;
}

WarmStart warm_start(const Config& c) {
  const auto& s = c.choice("det.warm", {"previous", "initial", "cold"});
  if (s == "initial") return WarmStart::kInitial;
  if (s == "cold") return WarmStart::kCold;
  return WarmStart::kPrevious;
}

PipelineConfig pipeline_config(const Config& c) {
  PipelineConfig p;
  p.detection = detection_config(c);
  p.match_radius = c.num("match_radius");
  p.ratio = c.num("ratio");
  p.point_seed = c.seed("point_seed");
  p.det_train = train_config(c, "det");
  p.seg_train = train_config(c, "seg");
  p.ft_train = train_config(c, "ft");
  p.warm = warm_start(c);
  p.alpha = c.num("alpha");
  p.crf = crf_params(c);
  p.cluster_seed = c.seed("cluster_seed");
  p.seg_threshold = c.num("seg.threshold");
  p.min_instance_area = static_cast<std::size_t>(std::max(0, c.integer("seg.min_area")));
  p.normalize = c.flag("normalize");
  if (!(p.ratio > 0.0 && p.ratio <= 1.0)) throw usage("ratio must be in (0, 1]");
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw usage("alpha must be in [0, 1]");
  if (!(p.match_radius > 0.0)) throw usage("match_radius must be > 0");
  return p;
}

void check_finite(const PixelModel& m, const std::string& what) {
  auto ok = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!ok(m.w1()) || !ok(m.b1()) || !ok(m.w2()) || !std::isfinite(m.b2()))
    throw Error(ErrorKind::kNumeric, what + ": training diverged (non-finite weights)");
}

// ---- overlays

using Color = std::array<double, 3>;

ImageRGB instance_overlay(const ImageRGB& image, const InstanceLabelMap& inst) {
  ImageRGB out = image;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (inst[i] <= 0) continue;
    const double hue = std::fmod(inst[i] * 0.61803398874989485, 1.0) * 6.0;
    const double f = hue - std::floor(hue);
    const Color table[6] = {{1, f, 0}, {1 - f, 1, 0}, {0, 1, f}, {0, 1 - f, 1}, {f, 0, 1}, {1, 0, 1 - f}};
    const Color& c = table[static_cast<int>(hue) % 6];
    for (int k = 0; k < 3; ++k) out[i][k] = 0.5 * image[i][k] + 0.5 * c[k];
  }
  return out;
}

void draw_marker(ImageRGB& im, const Point& p, const Color& c) {
  const int r0 = static_cast<int>(std::lround(p.row)), c0 = static_cast<int>(std::lround(p.col));
  for (int dr = -2; dr <= 2; ++dr)
    for (int dc = -2; dc <= 2; ++dc) {
      if (dr * dr + dc * dc > 5) continue;
      const int r = r0 + dr, col = c0 + dc;
      if (r >= 0 && r < im.height() && col >= 0 && col < im.width()) im(r, col) = c;
    }
}

/// True positives green, missed nuclei blue, false positives red.
ImageRGB detection_overlay(const ImageRGB& image, const PointSet& gt, const PointSet& det,
                           const MatchResult& m) {
  ImageRGB out = image;
  for (const auto& p : m.pairs) draw_marker(out, det[p.det], {0, 1, 0});
  for (int g : m.fn) draw_marker(out, gt[g], {0, 0, 1});
  for (int d : m.fp) draw_marker(out, det[d], {1, 0, 0});
  return out;
}

// ---- stages

int cmd_synth(Run& run) {
  const Config& c = run.cfg;
  BenchmarkConfig bc;
  bc.synth.height = bc.synth.width = c.integer("synth.size");
  bc.synth.min_count = c.integer("synth.min_count");
  bc.synth.max_count = c.integer("synth.max_count");
  bc.synth.min_clutter = c.integer("synth.min_clutter");
  bc.synth.max_clutter = c.integer("synth.max_clutter");
  bc.synth.noise_std = c.num("synth.noise");
  bc.train = c.integer("synth.train");
  bc.val = c.integer("synth.val");
  bc.test = c.integer("synth.test");
  bc.seed = c.seed("synth.seed");
  if (bc.train < 1 || bc.val < 0 || bc.test < 1) throw usage("synth: need >= 1 train and test image");
  bc.synth.validate();
  const fs::path data = c.data_dir();
  int k = 0;
  for (auto [name, n] : {std::pair{"train", bc.train}, {"val", bc.val}, {"test", bc.test}})
    for (int i = 0; i < n; ++i) {
      SynthConfig sc = bc.synth;
      sc.seed = image_seed(bc.seed, k++);
      const SynthSample s = generate(sc);
      const fs::path base = data / name / stem(static_cast<std::size_t>(i));
      auto record = [&](const std::string& suffix) {
        const fs::path p = base.string() + suffix;
        run.artifacts.push_back(fs::relative(p, run.out()));
        return p;
      };
      io::write_image(record("_image.png"), s.image);
      io::write_instances(record("_instances.png"), s.instances);
      io::write_points(record("_points.json"), s.centers, {{"centroids", s.centroids}});
    }
  std::cout << "synth: " << k << " images under " << data.string() << "\n";
  return 0;
}

std::vector<PointSet> read_point_dir(const Run& run, const fs::path& rel, const std::vector<std::string>& names,
                                     const std::string& producer) {
  std::vector<PointSet> out;
  for (const auto& n : names) out.push_back(io::read_points(run.need(rel / (n + ".json"), producer)));
  return out;
}

int cmd_detect(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const DiskSplit train = load_train(run, true);
  const bool extended = run.cfg.choice("det.init", {"ext-gm", "gm"}) == "ext-gm";
  std::vector<PointSet> pts;
  for (std::size_t i = 0; i < train.split.size(); ++i) {
    if (train.split.centers[i].empty()) throw data_error(train.names[i] + ": no annotated points");
    pts.push_back(sample_partial_points(train.split.centers[i], p.ratio,
                                        image_seed(p.point_seed, static_cast<int>(i))));
    io::write_points(run.file(fs::path("points/partial") / (train.names[i] + ".json")), pts.back());
  }
  const auto masks = detection_masks(train.split, pts, p.detection, extended);
  for (std::size_t i = 0; i < masks.size(); ++i)
    io::write_rmsk(run.file(fs::path("detect/masks") / (train.names[i] + ".rmsk")), masks[i]);
  const auto features = featurize_all(train.split.images);
  const PixelModel model = train_detection(features, masks, p.detection, p.det_train);
  check_finite(model, "detect");
  io::write_model(run.file("detect/model.json"), model);
  std::cout << "detect: trained initial detector on " << masks.size() << " images\n";
  return 0;
}

int cmd_selftrain(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const DiskSplit train = load_train(run);
  const auto pts = read_point_dir(run, "points/partial", train.names, "detect");
  const PixelModel init = io::read_model(run.need("detect/model.json", "detect"));
  const auto features = featurize_all(train.split.images);
  PixelDetectionTrainer trainer(features, p.detection, p.det_train);
  const auto strategy = run.cfg.choice("det.strategy", {"st-bg", "st-nu"}) == "st-bg"
                            ? SelfTrainStrategy::kBackground
                            : SelfTrainStrategy::kNuclei;
  const auto result = self_train(trainer, init, pts, p.detection, strategy, p.warm);
  check_finite(result.model, "selftrain");
  for (std::size_t r = 0; r < result.masks.size(); ++r)
    for (std::size_t i = 0; i < train.names.size(); ++i)
      io::write_rmsk(run.file(fs::path("selftrain") / ("round" + std::to_string(r + 1)) /
                              (train.names[i] + ".rmsk")),
                     result.masks[r][i]);
  io::write_model(run.file("selftrain/model.json"), result.model);
  for (std::size_t i = 0; i < train.names.size(); ++i)
    io::write_points(run.file(fs::path("points/detected") / (train.names[i] + ".json")),
                     result.detections[i]);
  std::cout << "selftrain: " << result.masks.size() << " rounds\n";
  return 0;
}

std::vector<PointSet> label_points(const Run& run, const DiskSplit& train) {
  if (run.cfg.choice("label_points", {"detected", "gt"}) == "gt") {
    for (std::size_t i = 0; i < train.split.size(); ++i)
      if (train.split.centers[i].empty()) throw data_error(train.names[i] + ": no ground-truth points");
    return train.split.centers;
  }
  return read_point_dir(run, "points/detected", train.names, "selftrain");
}

int cmd_labels(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const DiskSplit train = load_train(run);
  const auto pts = label_points(run, train);
  const SegLabels labels = make_seg_labels(train.split.images, pts, p.cluster_seed);
  for (std::size_t i = 0; i < train.names.size(); ++i) {
    io::write_trilabel(run.file(fs::path("labels/voronoi") / (train.names[i] + ".png")), labels.voronoi[i]);
    io::write_trilabel(run.file(fs::path("labels/cluster") / (train.names[i] + ".png")), labels.cluster[i]);
  }
  std::cout << "labels: " << train.names.size() << " images\n";
  return 0;
}

SegLabels read_labels(const Run& run, const std::vector<std::string>& names) {
  SegLabels out;
  for (const auto& n : names) {
    out.voronoi.push_back(io::read_trilabel(run.need(fs::path("labels/voronoi") / (n + ".png"), "labels")));
    out.cluster.push_back(io::read_trilabel(run.need(fs::path("labels/cluster") / (n + ".png"), "labels")));
  }
  return out;
}

int cmd_segment(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const DiskSplit train = load_train(run);
  const SegLabels labels = read_labels(run, train.names);
  const auto features = featurize_all(train.split.images);
  const PixelModel model = train_segmentation(features, labels.voronoi, labels.cluster, p.alpha, p.seg_train);
  check_finite(model, "segment");
  io::write_model(run.file("segment/model.json"), model);
  std::cout << "segment: trained with alpha " << p.alpha << "\n";
  return 0;
}

int cmd_finetune(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const DiskSplit train = load_train(run);
  const SegLabels labels = read_labels(run, train.names);
  const PixelModel base = io::read_model(run.need("segment/model.json", "segment"));
  const auto features = featurize_all(train.split.images);
  const PixelModel model = finetune_crf(base, train.split.images, features, labels.voronoi, labels.cluster,
                                        p.alpha, p.crf, p.ft_train, crf_mode(run.cfg));
  check_finite(model, "finetune");
  io::write_model(run.file("finetune/model.json"), model);
  std::cout << "finetune: beta " << p.crf.beta << "\n";
  return 0;
}

fs::path infer_root(const Config& c) {
  return c.str("infer.data_dir").empty() ? c.data_dir() : fs::path(c.str("infer.data_dir"));
}

PixelModel detection_model(const Run& run) {
  if (fs::exists(run.out() / "selftrain/model.json")) return io::read_model(run.out() / "selftrain/model.json");
  return io::read_model(run.need("detect/model.json", "detect"));
}

int cmd_infer(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const std::string split = run.cfg.choice("infer.split", {"train", "val", "test"});
  const std::string which = run.cfg.choice("infer.model", {"finetune", "segment"});
  const PixelModel seg = io::read_model(run.need(fs::path(which) / "model.json", which));
  const PixelModel det = detection_model(run);
  const DiskSplit d = load_split(run, infer_root(run.cfg), split, false);
  const fs::path dir = fs::path("infer") / split;
  for (std::size_t i = 0; i < d.names.size(); ++i) {
    const FeatureMap f = featurize(d.split.images[i]);
    const ProbabilityMap prob = forward(seg, f);
    const InstanceLabelMap inst = segment_instances(prob, p.seg_threshold, p.min_instance_area);
    const PointSet found = extract_detections(forward(det, f), p.detection.prob_threshold);
    const std::string& n = d.names[i];
    io::write_rmsk(run.file(dir / (n + "_prob.rmsk")), prob);
    io::write_instances(run.file(dir / (n + "_instances.png")), inst);
    io::write_image(run.file(dir / (n + "_overlay.png")), instance_overlay(d.split.images[i], inst));
    io::write_points(run.file(dir / (n + "_points.json")), found);
  }
  std::cout << "infer: " << d.names.size() << " " << split << " images\n";
  return 0;
}

int cmd_eval(Run& run) {
  const PipelineConfig p = pipeline_config(run.cfg);
  const std::string split = run.cfg.choice("infer.split", {"train", "val", "test"});
  const DiskSplit raw = read_split(infer_root(run.cfg), split, true);
  const fs::path in = fs::path("infer") / split;
  std::vector<MatchResult> pool;
  std::vector<MetricsReport> reports;
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (std::size_t i = 0; i < raw.names.size(); ++i) {
    const std::string& n = raw.names[i];
    const PointSet det = io::read_points(run.need(in / (n + "_points.json"), "infer"));
    const InstanceLabelMap pred = io::read_instances(run.need(in / (n + "_instances.png"), "infer"));
    const InstanceLabelMap& gt = raw.split.instances[i];
    require_same_shape(gt, pred, n.c_str());
    const PointSet& centers = raw.split.centers[i];
    const MatchResult m = match_detections(centers, det, p.match_radius);
    pool.push_back(m);
    MetricsReport r = segmentation_report(gt, pred);
    r.set_detection(detection_stats(m));
    if (instance_count(gt) > 1) {
      const DifficultyStats ds = dataset_difficulty(raw.split.images[i], gt);
      r.nuclei_bg_diff = ds.nuclei_bg_diff;
      r.nuclei_std = ds.nuclei_std;
    }
    reports.push_back(r);
    rows.emplace_back(n, r);
    io::write_image(run.file(fs::path("eval") / split / (n + "_detections.png")),
                    detection_overlay(raw.split.images[i], centers, det, m));
  }
  MetricsReport total = mean_report(reports);
  total.set_detection(detection_stats(pool));
  io::write_json(run.file(fs::path("eval") / split / "report.json"), io::report_json(total));
  io::write_report_csv(run.file(fs::path("eval") / split / "per_image.csv"), rows);
  std::cout << io::report_json(total).dump(2) << "\n";
  return 0;
}

// ---- ablations (in memory, on the dataset under data_dir)

Benchmark load_benchmark(Run& run) {
  const fs::path root = run.cfg.data_dir();
  Benchmark b;
  b.train = read_split(root, "train", true).split;
  b.val = fs::is_directory(root / "val") ? read_split(root, "val", true).split : Split{};
  b.test = read_split(root, "test", true).split;
  if (run.cfg.flag("normalize")) normalize_benchmark(b);
  return b;
}

using Cols = std::vector<std::optional<double>>;

std::string csv_row(const std::vector<std::string>& head, const Cols& vals) {
  std::string s;
  for (const auto& h : head) s += h + ",";
  for (std::size_t k = 0; k < vals.size(); ++k) {
    if (k) s += ",";
    if (vals[k]) s += io::format_number(*vals[k]);
  }
  return s + "\n";
}

Cols det_cols(const DetectionStats& s) { return {s.precision, s.recall, s.f1, s.mu_d, s.sigma_d}; }

Cols seg_cols(const MetricsReport& r) {
  return {*r.pixel_acc, *r.pixel_f1, *r.dice_obj, *r.aji};
}

int cmd_ablate(Run& run) {
  PipelineConfig p = pipeline_config(run.cfg);
  const std::string axis = run.cfg.choice("ablate.axis", {"strategy", "ratio", "seeds", "alpha", "crf"});
  const Benchmark b = load_benchmark(run);
  const BenchmarkFeatures f(b);
  std::ostringstream csv;
  const std::string det_head = "precision,recall,f1,mu_d,sigma_d";
  const std::string seg_head = "pixel_acc,pixel_f1,dice_obj,aji";

  auto detect_pair = [&](const PipelineConfig& cfg) {
    const auto ext = run_detection(b, f, cfg, DetectionStrategy::kExtGM);
    const auto st = run_detection(b, f, cfg, DetectionStrategy::kSTbg, &ext.model);
    return std::pair{ext, st};
  };

  if (axis == "strategy") {
    csv << "strategy," << det_head << "\n";
    const auto ext = run_detection(b, f, p, DetectionStrategy::kExtGM);
    for (auto s : {DetectionStrategy::kGM, DetectionStrategy::kExtGM, DetectionStrategy::kSTnu,
                   DetectionStrategy::kSTbg}) {
      const auto out = s == DetectionStrategy::kExtGM ? ext : run_detection(b, f, p, s, &ext.model);
      csv << csv_row({strategy_name(s)}, det_cols(out.test));
    }
  } else if (axis == "ratio") {
    csv << "ratio,strategy," << det_head << "\n";
    for (double r : run.cfg.list("ablate.ratios")) {
      if (!(r > 0.0 && r <= 1.0)) throw usage("ablate.ratios: values must be in (0, 1]");
      p.ratio = r;
      const auto [ext, st] = detect_pair(p);
      csv << csv_row({io::format_number(r), "ext-GM"}, det_cols(ext.test));
      csv << csv_row({io::format_number(r), "ST-bg"}, det_cols(st.test));
    }
  } else if (axis == "seeds") {
    csv << "seed,strategy," << det_head << "\n";
    const int n = run.cfg.integer("ablate.seeds");
    if (n < 1) throw usage("ablate.seeds must be >= 1");
    std::vector<double> f1;
    for (int s = 0; s < n; ++s) {
      p.point_seed = static_cast<std::uint64_t>(s);
      const auto [ext, st] = detect_pair(p);
      csv << csv_row({std::to_string(s), "ext-GM"}, det_cols(ext.test));
      csv << csv_row({std::to_string(s), "ST-bg"}, det_cols(st.test));
      f1.push_back(st.test.f1);
    }
    const double mean = std::accumulate(f1.begin(), f1.end(), 0.0) / n;
    double var = 0.0;
    for (double v : f1) var += (v - mean) * (v - mean);
    csv << "mean,ST-bg,,," << io::format_number(mean) << ",,\n";
    csv << "std,ST-bg,,," << io::format_number(std::sqrt(var / n)) << ",,\n";
  } else {
    std::vector<PointSet> pts = b.train.centers;
    if (run.cfg.str("label_points") == "detected") {
      const auto [ext, st] = detect_pair(p);
      pts = detect_all(st.model, f.train, p.detection.prob_threshold);
    }
    const SegLabels labels = make_seg_labels(b.train.images, pts, p.cluster_seed);
    if (axis == "alpha") {
      csv << "alpha," << seg_head << "\n";
      for (double a : run.cfg.list("ablate.alphas")) {
        if (!(a >= 0.0 && a <= 1.0)) throw usage("ablate.alphas: values must be in [0, 1]");
        const auto m = train_segmentation(f.train, labels.voronoi, labels.cluster, a, p.seg_train);
        csv << csv_row({io::format_number(a)},
                       seg_cols(evaluate_segmentation(m, b.test, f.test, p.seg_threshold, p.min_instance_area)));
      }
    } else {
      csv << "sigma_pq,sigma_rgb,beta," << seg_head << "\n";
      const auto base = train_segmentation(f.train, labels.voronoi, labels.cluster, p.alpha, p.seg_train);
      csv << csv_row({"", "", "0"},
                     seg_cols(evaluate_segmentation(base, b.test, f.test, p.seg_threshold, p.min_instance_area)));
      for (double spq : run.cfg.list("ablate.sigma_pq"))
        for (double srgb : run.cfg.list("ablate.sigma_rgb"))
          for (double beta : run.cfg.list("ablate.betas")) {
            const CrfParams crf = CrfParams::bilateral(spq, srgb, beta);
            crf.validate();
            const auto m = finetune_crf(base, b.train.images, f.train, labels.voronoi, labels.cluster,
                                        p.alpha, crf, p.ft_train, crf_mode(run.cfg));
            csv << csv_row({io::format_number(spq), io::format_number(srgb), io::format_number(beta)},
                           seg_cols(evaluate_segmentation(m, b.test, f.test, p.seg_threshold,
                                                          p.min_instance_area)));
          }
    }
  }
  const fs::path rel = fs::path("ablate") / (axis + ".csv");
  auto out = io::detail::open_out(run.file(rel));
  out << csv.str();
  std::cout << csv.str();
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage: return 1;
    case ErrorKind::kData: return 2;
    case ErrorKind::kNumeric: return 3;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nuclei segmentation from partial point annotations"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  const std::map<std::string, std::function<int(Run&)>> stages = {
      {"synth", cmd_synth},       {"detect", cmd_detect},     {"selftrain", cmd_selftrain},
      {"labels", cmd_labels},     {"segment", cmd_segment},   {"finetune", cmd_finetune},
      {"infer", cmd_infer},       {"eval", cmd_eval},         {"ablate", cmd_ablate}};
  const std::map<std::string, std::string> about = {
      {"synth", "generate the synthetic benchmark"},
      {"detect", "sample partial points and train the initial detector"},
      {"selftrain", "self-train the detector and detect training nuclei"},
      {"labels", "build Voronoi and cluster labels"},
      {"segment", "train the segmentation model"},
      {"finetune", "fine-tune with the dense CRF loss"},
      {"infer", "predict probability maps, instances and detections"},
      {"eval", "score inference output against ground truth"},
      {"ablate", "run a study sweep and write a CSV"}};

  std::string config_file, manifest_file, out_dir, axis;
  std::vector<std::string> sets;
  bool list_keys = false;
  for (const auto& [name, fn] : stages) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("-c,--config", config_file, "key = value config file");
    sub->add_option("-m,--manifest", manifest_file, "replay the configuration of a manifest");
    sub->add_option("-o,--out", out_dir, "run directory (same as --set out=...)");
    sub->add_option("-s,--set", sets, "override one key: key=value");
    sub->add_flag("--keys", list_keys, "list config keys and defaults, then exit");
    if (name == "ablate") sub->add_option("--axis", axis, "strategy | ratio | seeds | alpha | crf");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (list_keys) {
    for (const auto& k : kKeys) std::cout << k.name << " = " << k.value << "    # " << k.help << "\n";
    return 0;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    Run run{stage, Config{}, {}};
    if (!manifest_file.empty()) {
      const Json m = io::read_json(manifest_file);
      if (!m.contains("config") || !m.at("config").is_object())
        throw data_error(manifest_file + ": no config object");
      for (const auto& [k, v] : m.at("config").items()) {
        if (!v.is_string()) throw data_error(manifest_file + ": config values must be strings");
        run.cfg.set(k, v.get<std::string>());
      }
    }
    if (!config_file.empty()) run.cfg.merge(io::read_key_values(config_file));
    for (const auto& s : sets) run.cfg.set_assignment(s);
    if (!out_dir.empty()) run.cfg.set("out", out_dir);
    if (!axis.empty()) run.cfg.set("ablate.axis", axis);

    const int rc = stages.at(stage)(run);
    run.write_manifest();
    return rc;
  } catch (const Error& e) {
    std::cerr << "ppseg " << stage << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Json::exception& e) {
    std::cerr << "ppseg " << stage << ": " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ppseg " << stage << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ppseg " << stage << ": " << e.what() << "\n";
    return 3;
  }
}
