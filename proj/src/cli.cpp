#include "tsdet/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tsdet/evalkit.hpp"
#include "tsdet/gtconv.hpp"
#include "tsdet/hqim.hpp"
#include "tsdet/pacgraph.hpp"
#include "tsdet/synthgen.hpp"
#include "tsdet/tsio.hpp"

namespace tsdet::cli {

namespace {

namespace fs = std::filesystem;

/// Flag combination problems detected after parsing; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw UsageError(what + ": '" + s + "' is not a number");
  }
  return v;
}

std::vector<double> parse_ap_range(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.size() != 3) throw UsageError("--ap-range expects lo:step:hi, got '" + spec + "'");
  try {
    return iou_range(parse_double(parts[0], "--ap-range"), parse_double(parts[1], "--ap-range"),
                     parse_double(parts[2], "--ap-range"));
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("--ap-range: ") + e.what());
  }
}

std::pair<double, double> parse_sub_range(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("--sub-range expects lo:hi");
  return {parse_double(spec.substr(0, colon), "--sub-range"),
          parse_double(spec.substr(colon + 1), "--sub-range")};
}

/// Rounds every value to the canonical 6-decimal text form.
SequenceDataset canonicalize(const SequenceDataset& ds) {
  std::stringstream ss;
  format_detections(ss, ds, BoxFormat::predictions);
  return parse_detections(ss, BoxFormat::predictions);
}

// ---------------------------------------------------------------------------
// Frame pairing between prediction and ground-truth streams.

struct PairedFrames {
  std::vector<EvalFrame> frames;
  std::vector<std::string> sequence_ids;
  std::vector<std::size_t> frame_indices;
};

PairedFrames pair_frames(const SequenceDataset& preds, const SequenceDataset& gts) {
  std::set<std::string> gt_ids;
  for (const auto& f : gts) gt_ids.insert(f.sequence_id);
  std::set<std::string> unknown;
  std::map<std::pair<std::string, std::size_t>, const FrameDetections*> by_key;
  for (const auto& f : preds) {
    if (!gt_ids.contains(f.sequence_id)) unknown.insert(f.sequence_id);
    by_key[{f.sequence_id, f.frame_index}] = &f;
  }
  if (!unknown.empty()) {
    std::string msg = "prediction sequences missing from ground truth:";
    for (const auto& id : unknown) msg += " " + id;
    throw InvalidInput(msg);
  }

  std::set<std::pair<std::string, std::size_t>> gt_keys;
  PairedFrames out;
  for (const auto& g : gts) {
    gt_keys.insert({g.sequence_id, g.frame_index});
    EvalFrame ef;
    ef.gts = g.boxes;
    if (auto it = by_key.find({g.sequence_id, g.frame_index}); it != by_key.end()) {
      ef.preds = it->second->boxes;
    }
    out.frames.push_back(std::move(ef));
    out.sequence_ids.push_back(g.sequence_id);
    out.frame_indices.push_back(g.frame_index);
  }
  // Predicted frames absent from the ground truth are treated as object-free.
  for (const auto& f : preds) {
    if (gt_keys.contains({f.sequence_id, f.frame_index})) continue;
    out.frames.push_back({f.boxes, {}});
    out.sequence_ids.push_back(f.sequence_id);
    out.frame_indices.push_back(f.frame_index);
  }
  return out;
}

// ---------------------------------------------------------------------------
// postprocess

struct PostprocessOptions {
  std::string method = "pac";
  std::string in, out, config;
  PacParams pac;
  std::string soft_mode = "gaussian";
  double sigma = 0.5;
};

SequenceDataset postprocess(const SequenceDataset& in, const PostprocessOptions& o) {
  SequenceDataset out(in.size());
  parallel_for(in.size(), [&](std::size_t f) {
    const auto& frame = in[f];
    out[f].sequence_id = frame.sequence_id;
    out[f].frame_index = frame.frame_index;
    if (o.method == "pac") {
      out[f].boxes = pac_select(frame.boxes, o.pac);
    } else if (o.method == "nms") {
      out[f].boxes = classical_nms(frame.boxes, o.pac.nms_iou);
    } else {
      const auto mode = o.soft_mode == "linear" ? SoftNmsMode::linear : SoftNmsMode::gaussian;
      out[f].boxes = soft_nms(frame.boxes, o.pac.nms_iou, mode, o.sigma);
    }
  });
  return out;
}

void apply_pac_config(PacParams& p, const ConfigSection& section, const CLI::App& sub) {
  for (const auto& [key, value] : section) {
    double* dst = nullptr;
    const char* flag = nullptr;
    if (key == "theta") {
      dst = &p.theta;
      flag = "--theta";
    } else if (key == "delta") {
      dst = &p.delta;
      flag = "--delta";
    } else if (key == "nms_iou") {
      dst = &p.nms_iou;
      flag = "--nms-iou";
    } else {
      throw FormatError(FormatError::Code::unknown_key, "unknown config key '" + key + "'");
    }
    if (sub.count(flag) == 0) *dst = parse_double(value, "config key '" + key + "'");
  }
}

int cmd_postprocess(PostprocessOptions o, const CLI::App& sub, std::ostream& err) {
  if (!o.config.empty()) {
    const Config cfg = read_config(o.config);
    if (auto it = cfg.find("pac"); it != cfg.end()) apply_pac_config(o.pac, it->second, sub);
  }
  try {
    if (o.method == "pac") {
      o.pac.validate();
    } else if (!(o.pac.nms_iou > 0.0 && o.pac.nms_iou < 1.0)) {
      throw InvalidInput("--nms-iou must lie in (0, 1)");
    }
    if (!(o.sigma > 0.0)) throw InvalidInput("--sigma must be positive");
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  const auto in = read_detections(o.in, BoxFormat::predictions);
  write_detections(postprocess(in, o), o.out, BoxFormat::predictions);
  (void)err;
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCliOptions {
  std::string pred, gt, trace, out;
  std::string ap_range = "0.5:0.05:0.95";
  std::string sub_range = "0.5:0.75";
  double score_thresh = 0.5;
  double match_iou = 0.5;
  bool negative = false;
};

EvalOptions to_eval_options(const EvalCliOptions& o) {
  EvalOptions e;
  e.thresholds = parse_ap_range(o.ap_range);
  std::tie(e.sub_lo, e.sub_hi) = parse_sub_range(o.sub_range);
  e.score_threshold = o.score_thresh;
  e.match_iou = o.match_iou;
  return e;
}

void write_negative(std::ostream& out, const PairedFrames& paired, double score_thresh) {
  std::vector<std::vector<Box>> negatives;
  for (const auto& f : paired.frames) {
    if (f.gts.empty()) negatives.push_back(f.preds);
  }
  if (negatives.empty()) throw InvalidInput("--negative: no object-free frames in ground truth");
  const auto s = false_positive_rate(negatives, score_thresh);
  out << "negative_frames\t" << s.frames << '\n'
      << "fp_boxes\t" << s.fp_boxes << '\n'
      << "frames_with_fp\t" << s.frames_with_fp << '\n'
      << "fp_rate\t" << fixed(s.rate) << '\n'
      << "fp_box_rate\t" << fixed(s.box_rate) << '\n';
}

void write_trace(const fs::path& path, const PairedFrames& paired, double iou,
                 double score_thresh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write " + path.string());
  out << "sequence\tframe\tn_gt\trecalled\n";
  const auto rows = recall_trace(paired.frames, paired.frame_indices, iou, score_thresh);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << paired.sequence_ids[r] << '\t' << rows[r].frame_index << '\t'
        << rows[r].recalled.size() << '\t';
    for (std::size_t g = 0; g < rows[r].recalled.size(); ++g) {
      out << (g ? "," : "") << rows[r].recalled[g];
    }
    out << '\n';
  }
}

int cmd_eval(const EvalCliOptions& o, std::ostream& out) {
  const EvalOptions opts = to_eval_options(o);
  const auto preds = read_detections(o.pred, BoxFormat::predictions);
  const auto gts = read_detections(o.gt, BoxFormat::ground_truth);
  const PairedFrames paired = pair_frames(preds, gts);

  std::ostringstream report;
  write_report(report, evaluate(paired.frames, opts));
  if (o.negative) write_negative(report, paired, o.score_thresh);
  if (!o.trace.empty()) write_trace(o.trace, paired, o.match_iou, o.score_thresh);

  if (o.out.empty()) {
    out << report.str();
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw FormatError(FormatError::Code::io, "cannot write " + o.out);
    f << report.str();
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string config, out_gt, out_cand, raster_dir;
  std::uint64_t seed = 42;
  int raster_w = 64;
  int raster_h = 48;
};

int cmd_synth(const SynthOptions& o, const CLI::App& sub, std::ostream& out) {
  SynthConfig cfg;
  if (!o.config.empty()) {
    const Config file = read_config(o.config);
    for (const auto& [section, values] : file) {
      if (section != "synthgen") {
        throw FormatError(FormatError::Code::unknown_key,
                          "unknown config section '" + section + "'");
      }
      apply_config(cfg, values);
    }
  }
  if (sub.count("--seed")) cfg.seed = o.seed;
  try {
    cfg.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(FormatError::Code::malformed_line, e.what());
  }

  const auto gt = generate_ground_truth(cfg);
  const auto cand = corrupt_candidates(gt, cfg);
  write_detections(gt, o.out_gt, BoxFormat::ground_truth);
  if (!o.out_cand.empty()) write_detections(cand, o.out_cand, BoxFormat::predictions);
  if (!o.raster_dir.empty()) {
    fs::create_directories(o.raster_dir);
    for (const auto& frame : gt) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06zu.pgm", frame.frame_index);
      write_pgm(render_frame(cfg, frame, o.raster_w, o.raster_h), fs::path(o.raster_dir) / name);
    }
  }

  const auto d = measure_discrepancy(gt, cand);
  const auto positives = static_cast<std::size_t>(
      std::count_if(gt.begin(), gt.end(), [](const auto& f) { return !f.boxes.empty(); }));
  out << "frames\t" << gt.size() << '\n'
      << "positive_frames\t" << positives << '\n'
      << "discrepant_frames\t" << d.discrepant_frames << '\n'
      << "discrepancy_rate\t"
      << fixed(d.positive_frames ? static_cast<double>(d.discrepant_frames) /
                                       static_cast<double>(d.positive_frames)
                                 : 0.0)
      << '\n'
      << "mean_rank_correlation\t" << fixed(d.mean_rank_correlation) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// init-weights / temporal-demo

struct WeightsOptions {
  std::string out;
  std::uint64_t seed = 1;
  int channels = 4;
  int summary = 4;
  std::size_t k = 4;
  double scale = 0.3;
  bool zero = false;
  bool zero_calibration = false;
};

NamedTensors make_weights(const WeightsOptions& o) {
  if (o.channels < 2 || o.channels % 2 != 0) throw UsageError("--channels must be even and >= 2");
  if (o.summary < 1) throw UsageError("--summary must be >= 1");
  if (o.k < 1) throw UsageError("--k must be >= 1");
  SynthRng rng(o.seed);
  NamedTensors w;
  auto add = [&](const std::string& name, Shape dims, bool zero = false) {
    TensorD t(std::move(dims));
    for (Index i = 0; i < t.size(); ++i) {
      // Rounded through float so the in-memory map equals what TSDW1 stores.
      t.values()[i] = zero || o.zero ? 0.0 : static_cast<float>(o.scale * rng.normal());
    }
    w[name] = std::move(t);
  };
  const Index c = o.channels, cs = o.summary;
  add("gtconv.base.weight", {c, 1, 3, 3});
  add("gtconv.base.bias", {c});
  add("gtconv.f_agg_gap.weight", {cs, 1, 1, 1, 1});
  add("gtconv.f_agg_gap.bias", {cs});
  add("gtconv.f_agg_sap.weight", {cs, 1, 1, 1, 1});
  add("gtconv.f_agg_sap.bias", {cs});
  add("gtconv.sap_attn.weight", {1, 1, 1, 1});
  add("gtconv.sap_attn.bias", {1});
  add("gtconv.f_w.weight", {c, cs, 3, 1, 1}, o.zero_calibration);
  add("gtconv.f_w.bias", {c}, o.zero_calibration);
  add("gtconv.f_b.weight", {c, cs, 3, 1, 1}, o.zero_calibration);
  add("gtconv.f_b.bias", {c}, o.zero_calibration);
  w["gtconv.bn.mean"] = TensorD({cs}, 0.0);
  w["gtconv.bn.var"] = TensorD({cs}, 1.0);
  w["gtconv.bn.gamma"] = TensorD({cs}, o.zero ? 0.0 : 1.0);
  w["gtconv.bn.beta"] = TensorD({cs}, 0.0);
  for (const char* g : {"W_f", "W_i", "W_o", "W_C"}) {
    add(std::string("hqim.cell.") + g + ".weight", {c, 2 * c, 3, 3});
    add(std::string("hqim.cell.") + g + ".bias", {c});
  }
  add("hqim.cell.F.weight", {c, c, 3, 3});
  add("hqim.cell.F.bias", {c});
  for (std::size_t r = 0; r < AccumulatorStack<double>::reducers_for(o.k); ++r) {
    add("hqim.acc.reducer" + std::to_string(r) + ".weight", {c / 2, c, 3, 3});
    add("hqim.acc.reducer" + std::to_string(r) + ".bias", {c / 2});
  }
  return w;
}

int cmd_init_weights(const WeightsOptions& o, std::ostream& out) {
  const NamedTensors w = make_weights(o);
  write_weights(w, o.out);
  out << "tensors\t" << w.size() << '\n';
  return kOk;
}

struct DemoOptions {
  std::string weights, frames = "synthetic", out;
  std::size_t k = 4;
  std::size_t n_frames = 8;
  std::uint64_t seed = 42;
  int raster_w = 32;
  int raster_h = 24;
};

std::vector<TensorD> load_frames(const DemoOptions& o) {
  std::vector<TensorD> frames;
  if (o.frames == "synthetic") {
    SynthConfig cfg;
    cfg.n_frames = o.n_frames;
    cfg.seed = o.seed;
    cfg.velocity_x = 8.0;
    cfg.velocity_y = 4.0;
    for (const auto& f : generate_ground_truth(cfg)) {
      frames.push_back(render_frame(cfg, f, o.raster_w, o.raster_h));
    }
    return frames;
  }
  std::vector<fs::path> files;
  if (!fs::is_directory(o.frames)) {
    throw FormatError(FormatError::Code::io, "--frames: no such directory " + o.frames);
  }
  for (const auto& entry : fs::directory_iterator(o.frames)) {
    if (entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() > o.n_frames) files.resize(o.n_frames);
  if (files.empty()) throw FormatError(FormatError::Code::io, "--frames: no .pgm files");
  for (const auto& p : files) frames.push_back(read_pgm(p));
  return frames;
}

int cmd_temporal_demo(const DemoOptions& o, std::ostream& out) {
  if (o.k < 1) throw UsageError("--k must be >= 1");
  const NamedTensors w = read_weights(o.weights);
  std::vector<std::string> required = gtconv_weight_names();
  const auto hq = hqim_weight_names(o.k);
  required.insert(required.end(), hq.begin(), hq.end());
  if (const auto missing = missing_names(w, required); !missing.empty()) {
    std::string msg = "weights file lacks:";
    for (const auto& n : missing) msg += " " + n;
    throw InvalidInput(msg);
  }
  const auto layer = load_gtconv<double>(w);
  HqimStream<double> hqim(load_convlstm_cell<double>(w), load_accumulator<double>(w, o.k), o.k);
  const bool identity = (layer.f_w.weight.values() == 0.0).all() &&
                        (layer.f_w.bias.values() == 0.0).all() &&
                        (layer.f_b.weight.values() == 0.0).all() &&
                        (layer.f_b.bias.values() == 0.0).all();

  FrameSequenceBuffer<double> buffer(o.k);
  double max_dev = 0.0;
  std::ostringstream rows;
  rows << "frame\tchannel\tmean\tmax\n";
  const auto frames = load_frames(o);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    buffer.push(frames[t]);
    const TensorD features = gtconv_forward(frames[t], buffer, layer);
    if (identity) {
      max_dev = std::max(max_dev,
                         (features.values() - conv2d(frames[t], layer.base).values()).abs().maxCoeff());
    }
    const TensorD fused = hqim.push(features);
    const auto m = fused.as_matrix();
    for (Index c = 0; c < fused.extent(0); ++c) {
      rows << t << '\t' << c << '\t' << fixed(m.row(c).mean()) << '\t'
           << fixed(m.row(c).maxCoeff()) << '\n';
    }
  }

  out << "frames\t" << frames.size() << '\n' << "k\t" << o.k << '\n';
  out << "calibration_identity\t" << (identity ? "yes" : "no") << '\n';
  if (identity) {
    out << "reduction_invariant\t" << (max_dev <= 1e-6 ? "pass" : "fail") << '\n';
  }
  const std::string table = rows.str();
  if (o.out.empty()) {
    out << table;
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw FormatError(FormatError::Code::io, "cannot write " + o.out);
    f << table;
  }
  return identity && max_dev > 1e-6 ? kDataError : kOk;
}

// ---------------------------------------------------------------------------
// sweep-delta

struct SweepOptions {
  std::string in, gt, out;
  std::vector<double> deltas{0.6, 0.7, 0.8, 0.9};
  double theta = 0.5;
  double nms_iou = 0.65;
  EvalCliOptions eval;
};

int cmd_sweep_delta(SweepOptions o, std::ostream& out, std::ostream& err) {
  if (o.deltas.empty()) throw UsageError("--deltas must name at least one value");
  std::vector<double> deltas;
  for (double d : o.deltas) {
    if (std::find(deltas.begin(), deltas.end(), d) != deltas.end()) {
      err << "warning: duplicate delta " << fixed(d, 2) << " ignored\n";
      continue;
    }
    deltas.push_back(d);
  }
  for (double d : deltas) {
    try {
      PacParams{o.theta, d, o.nms_iou}.validate();
    } catch (const InvalidInput& e) {
      throw UsageError(e.what());
    }
  }
  const EvalOptions opts = to_eval_options(o.eval);
  const auto cand = read_detections(o.in, BoxFormat::predictions);
  const auto gts = read_detections(o.gt, BoxFormat::ground_truth);

  std::ostringstream reports, table;
  table << "delta\tAP_" << fixed(opts.sub_lo, 2) << '-' << fixed(opts.sub_hi, 2)
        << "\tAP50\tAP75\tAP_m\tAP_l\n";
  auto cell = [](const std::optional<double>& v) { return v ? fixed(*v) : "undefined"; };
  for (double d : deltas) {
    PostprocessOptions pp;
    pp.pac = {o.theta, d, o.nms_iou};
    const auto processed = canonicalize(postprocess(cand, pp));
    const MetricsReport r = evaluate(pair_frames(processed, gts).frames, opts);
    reports << "# delta\t" << fixed(d, 2) << '\n';
    write_report(reports, r);
    table << fixed(d, 2) << '\t' << cell(r.ap.sub_range) << '\t' << cell(r.ap.ap50) << '\t'
          << cell(r.ap.ap75) << '\t' << cell(r.ap_medium) << '\t' << cell(r.ap_large) << '\n';
  }
  out << reports.str();
  if (o.out.empty()) {
    out << table.str();
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw FormatError(FormatError::Code::io, "cannot write " + o.out);
    f << table.str();
  }
  return kOk;
}

void add_eval_flags(CLI::App* sub, EvalCliOptions& o) {
  sub->add_option("--ap-range", o.ap_range, "IoU thresholds lo:step:hi")->capture_default_str();
  sub->add_option("--sub-range", o.sub_range, "Sub-range averaged separately, lo:hi")
      ->capture_default_str();
  sub->add_option("--score-thresh", o.score_thresh, "Operating score for P/R/F1")
      ->capture_default_str();
  sub->add_option("--match-iou", o.match_iou, "Operating IoU for P/R/F1 and traces")
      ->capture_default_str();
}

}  // namespace

unsigned thread_count() {
  unsigned n = 0;
  if (const char* env = std::getenv("TSDETECT_THREADS")) {
    const std::string_view s(env);
    std::from_chars(s.data(), s.data() + s.size(), n);
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal-spatial detection post-processing and evaluation toolkit", "tsdetect"};
  app.require_subcommand(1);

  PostprocessOptions pp;
  auto* post = app.add_subcommand("postprocess", "Rescore/suppress candidate boxes per frame");
  post->add_option("--method", pp.method, "pac, nms or softnms")
      ->check(CLI::IsMember({"pac", "nms", "softnms"}))
      ->capture_default_str();
  post->add_option("--in", pp.in, "Candidate detections")->required();
  post->add_option("--out", pp.out, "Output detections")->required();
  post->add_option("--theta", pp.pac.theta, "Neighbor IoU threshold")->capture_default_str();
  post->add_option("--delta", pp.pac.delta, "Low/high neighbor IoU threshold")
      ->capture_default_str();
  post->add_option("--nms-iou", pp.pac.nms_iou, "Suppression IoU threshold")
      ->capture_default_str();
  post->add_option("--soft-mode", pp.soft_mode, "softnms decay: linear or gaussian")
      ->check(CLI::IsMember({"linear", "gaussian"}))
      ->capture_default_str();
  post->add_option("--sigma", pp.sigma, "Gaussian soft-NMS sigma")->capture_default_str();
  post->add_option("--config", pp.config, "INI config; [pac] theta/delta/nms_iou");

  EvalCliOptions ev;
  auto* eval = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  eval->add_option("--pred", ev.pred, "Predicted detections")->required();
  eval->add_option("--gt", ev.gt, "Ground-truth boxes")->required();
  add_eval_flags(eval, ev);
  eval->add_flag("--negative", ev.negative, "Report false positives on object-free frames");
  eval->add_option("--trace", ev.trace, "Write the per-frame recall trace here");
  eval->add_option("--out", ev.out, "Write the report here instead of stdout");

  SynthOptions sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence");
  synth->add_option("--config", sy.config, "INI config with a [synthgen] section");
  synth->add_option("--seed", sy.seed, "Overrides the config seed");
  synth->add_option("--out-gt", sy.out_gt, "Ground-truth output")->required();
  synth->add_option("--out-cand", sy.out_cand, "Candidate detections output");
  synth->add_option("--raster-dir", sy.raster_dir, "Also write PGM frames here");
  synth->add_option("--raster-w", sy.raster_w, "Raster width")->capture_default_str();
  synth->add_option("--raster-h", sy.raster_h, "Raster height")->capture_default_str();

  WeightsOptions wo;
  auto* init = app.add_subcommand("init-weights", "Write a TSDW1 file for the temporal demo");
  init->add_option("--out", wo.out, "Output weights")->required();
  init->add_option("--seed", wo.seed, "Random seed")->capture_default_str();
  init->add_option("--channels", wo.channels, "Feature channels (even)")->capture_default_str();
  init->add_option("--summary", wo.summary, "Temporal summary channels")->capture_default_str();
  init->add_option("--k", wo.k, "Window length")->capture_default_str();
  init->add_option("--scale", wo.scale, "Std-dev of random weights")->capture_default_str();
  init->add_flag("--zero", wo.zero, "All-zero weights");
  init->add_flag("--zero-calibration", wo.zero_calibration, "Zero the calibration generators");

  DemoOptions dm;
  auto* demo = app.add_subcommand("temporal-demo", "Run GT-Conv and HQIM over a frame sequence");
  demo->add_option("--weights", dm.weights, "TSDW1 weights")->required();
  demo->add_option("--frames", dm.frames, "'synthetic' or a directory of PGM frames")
      ->capture_default_str();
  demo->add_option("--k", dm.k, "Window length")->capture_default_str();
  demo->add_option("--n-frames", dm.n_frames, "Frames to process")->capture_default_str();
  demo->add_option("--seed", dm.seed, "Seed of the synthetic frames")->capture_default_str();
  demo->add_option("--raster-w", dm.raster_w, "Synthetic raster width")->capture_default_str();
  demo->add_option("--raster-h", dm.raster_h, "Synthetic raster height")->capture_default_str();
  demo->add_option("--out", dm.out, "Write per-frame summaries here instead of stdout");

  SweepOptions sw;
  auto* sweep = app.add_subcommand("sweep-delta", "Evaluate PAC over several delta values");
  sweep->add_option("--in", sw.in, "Candidate detections")->required();
  sweep->add_option("--gt", sw.gt, "Ground-truth boxes")->required();
  sweep->add_option("--deltas", sw.deltas, "Comma-separated delta values")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--theta", sw.theta, "Neighbor IoU threshold")->capture_default_str();
  sweep->add_option("--nms-iou", sw.nms_iou, "Suppression IoU threshold")->capture_default_str();
  add_eval_flags(sweep, sw.eval);
  sweep->add_option("--out", sw.out, "Write the plot table here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (post->parsed()) return cmd_postprocess(pp, *post, err);
    if (eval->parsed()) return cmd_eval(ev, out);
    if (synth->parsed()) return cmd_synth(sy, *synth, out);
    if (init->parsed()) return cmd_init_weights(wo, out);
    if (demo->parsed()) return cmd_temporal_demo(dm, out);
    if (sweep->parsed()) return cmd_sweep_delta(sw, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace tsdet::cli
