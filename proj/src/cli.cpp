#include "hgr/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "hgr/bench.hpp"
#include "hgr/error.hpp"
#include "hgr/gesture_net.hpp"
#include "hgr/haar_cascade.hpp"
#include "hgr/mil_tracker.hpp"
#include "hgr/pipeline.hpp"
#include "hgr/skin_segment.hpp"

namespace hgr {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::Io, "short write to " + path);
}

Binarize parse_binarize(const std::string& text) {
  if (text == "otsu") return {};
  if (text.rfind("fixed:", 0) == 0) {
    Binarize b;
    b.mode = Binarize::Mode::Fixed;
    try {
      b.threshold = std::stoi(text.substr(6));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "bad --binarize threshold in '" + text + "'");
    }
    if (b.threshold < 0 || b.threshold > 255) fail(ErrorCode::InvalidArgument, "--binarize threshold must be 0..255");
    return b;
  }
  fail(ErrorCode::InvalidArgument, "--binarize must be 'otsu' or 'fixed:<t>'");
}

Rect parse_box(const std::string& text) {
  Rect r;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(text);
  std::string rest;
  if (!(in >> r.x >> c1 >> r.y >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' || c3 != ',' || (in >> rest)) {
    fail(ErrorCode::InvalidArgument, "--init expects x,y,w,h");
  }
  return r;
}

std::string fmt(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct SeedOption {
  std::uint64_t value = 42;
  CLI::Option* option = nullptr;

  void add(CLI::App* app) { option = app->add_option("--seed", value, "Random seed (default 42)"); }
  void announce(std::ostream& out) const { out << "seed " << value << (option->count() ? "" : " (default)") << "\n"; }
};

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hand-pose recognition pipeline: skin segmentation, cascade detection, MIL tracking, CNN classification"};
  app.name(args.empty() ? "hgr" : args[0]);
  app.require_subcommand(1);

  // fit-skin
  auto* fit = app.add_subcommand("fit-skin", "Fit a six-channel skin box model from r,g,b CSV pixels");
  std::string fit_pixels, fit_out;
  double fit_alpha = 0.025;
  fit->add_option("--pixels", fit_pixels, "CSV of r,g,b skin pixels")->required();
  fit->add_option("--alpha", fit_alpha, "Percentile clip per tail");
  fit->add_option("--out", fit_out, "Output skin model")->required();

  // segment
  auto* seg = app.add_subcommand("segment", "Extract the 48x48 hand mask from an RGB frame");
  std::string seg_image, seg_skin, seg_out;
  PatchConfig seg_cfg;
  seg->add_option("--image", seg_image, "P6 frame")->required();
  seg->add_option("--skin", seg_skin, "Skin model")->required();
  seg->add_option("--open", seg_cfg.open_iters, "Opening iterations");
  seg->add_option("--close", seg_cfg.close_iters, "Closing iterations");
  seg->add_option("--pad", seg_cfg.pad_fraction, "Box padding fraction");
  seg->add_option("--out", seg_out, "Write the mask as P5");

  // train
  auto* tr = app.add_subcommand("train", "Train the gesture network");
  std::string tr_data, tr_out, tr_log, tr_binarize = "otsu";
  int tr_synthetic = 0;
  double tr_split = 0.8;
  Hyper hyper;
  SeedOption tr_seed;
  auto* tr_data_opt = tr->add_option("--data", tr_data, "Dataset root (<label>/*.pgm)");
  tr->add_option("--synthetic", tr_synthetic, "Generate N synthetic shapes per class instead of --data")
      ->excludes(tr_data_opt);
  tr->add_option("--out", tr_out, "Output weights (.hgw)")->required();
  tr->add_option("--log", tr_log, "Write the training report as JSON");
  tr->add_option("--binarize", tr_binarize, "otsu or fixed:<t>");
  tr->add_option("--split", tr_split, "Training fraction per class");
  tr->add_option("--epochs", hyper.epochs);
  tr->add_option("--lr", hyper.learning_rate);
  tr->add_option("--momentum", hyper.momentum);
  tr->add_option("--batch", hyper.batch_size);
  tr->add_option("--decay", hyper.lr_decay, "Learning-rate factor per decay step");
  tr->add_option("--decay-every", hyper.decay_every, "Epochs per decay step");
  tr_seed.add(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate weights on a dataset and write the confusion matrix");
  std::string ev_data, ev_weights, ev_report, ev_binarize = "otsu";
  unsigned ev_threads = 1;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--weights", ev_weights)->required();
  ev->add_option("--report", ev_report, "Confusion matrix CSV");
  ev->add_option("--binarize", ev_binarize);
  ev->add_option("--threads", ev_threads);

  // classify
  auto* cl = app.add_subcommand("classify", "Classify one image");
  std::string cl_image, cl_weights, cl_binarize = "otsu";
  cl->add_option("--image", cl_image, "P5 or P6 image; resized to 48x48 after binarization")->required();
  cl->add_option("--weights", cl_weights)->required();
  cl->add_option("--binarize", cl_binarize);

  // detect
  auto* de = app.add_subcommand("detect", "Run the cascade detector on an image");
  std::string de_image, de_cascade;
  DetectParams de_params;
  de->add_option("--cascade", de_cascade)->required();
  de->add_option("--image", de_image)->required();
  de->add_option("--scale-factor", de_params.scale_factor);
  de->add_option("--step", de_params.step_fraction);
  de->add_option("--min-neighbors", de_params.min_neighbors);

  // track
  auto* tk = app.add_subcommand("track", "Track a box through a frame directory");
  std::string tk_frames, tk_init, tk_config;
  double tk_threshold = kDefaultConfidenceThreshold;
  SeedOption tk_seed;
  tk->add_option("--frames", tk_frames, "Directory of frame_*.ppm")->required();
  tk->add_option("--init", tk_init, "Initial box x,y,w,h")->required();
  tk->add_option("--config", tk_config, "Tracker key=value config");
  tk->add_option("--threshold", tk_threshold, "Confidence threshold");
  tk_seed.add(tk);

  // run
  auto* rn = app.add_subcommand("run", "Run the full pipeline over a frame directory");
  std::string rn_frames, rn_config, rn_report, rn_skin, rn_weights, rn_cascade;
  SeedOption rn_seed;
  rn->add_option("--frames", rn_frames)->required();
  rn->add_option("--config", rn_config, "Pipeline key=value config");
  rn->add_option("--skin", rn_skin);
  rn->add_option("--weights", rn_weights);
  rn->add_option("--cascade", rn_cascade);
  rn->add_option("--report", rn_report, "Session report JSON");
  rn_seed.add(rn);

  // bench
  auto* bn = app.add_subcommand("bench", "Latency benchmarks");
  bn->require_subcommand(1);
  auto* bf = bn->add_subcommand("forward", "Single-image forward latency");
  std::string bf_weights, bf_report;
  int bf_iters = 100, bf_warmup = 10;
  std::optional<double> bf_power;
  SeedOption bf_seed;
  bf->add_option("--weights", bf_weights, "Weights; omitted = freshly initialized network");
  bf->add_option("--iters", bf_iters);
  bf->add_option("--warmup", bf_warmup);
  bf->add_option("--report", bf_report, "Bench report JSON");
  bf->add_option("--power-w", bf_power, "Operator-measured power draw in watts");
  bf_seed.add(bf);
  auto* bp = bn->add_subcommand("pipeline", "Per-frame pipeline latency");
  std::string bp_frames, bp_config, bp_report, bp_skin, bp_weights, bp_cascade;
  int bp_iters = 3;
  std::optional<double> bp_power;
  SeedOption bp_seed;
  bp->add_option("--frames", bp_frames)->required();
  bp->add_option("--config", bp_config);
  bp->add_option("--skin", bp_skin);
  bp->add_option("--weights", bp_weights);
  bp->add_option("--cascade", bp_cascade);
  bp->add_option("--iters", bp_iters, "Session replays");
  bp->add_option("--report", bp_report);
  bp->add_option("--power-w", bp_power);
  bp_seed.add(bp);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  auto pipeline_config = [&](const std::string& config, const std::string& skin, const std::string& weights,
                             const std::string& cascade, const SeedOption& seed) {
    PipelineConfig cfg;
    if (!config.empty()) cfg = parse_pipeline_config(read_text(config));
    if (!skin.empty()) cfg.skin_model_path = skin;
    if (!weights.empty()) cfg.weights_path = weights;
    if (!cascade.empty()) cfg.cascade_path = cascade;
    if (seed.option->count() || config.empty()) cfg.seed = seed.value;
    return cfg;
  };

  try {
    if (fit->parsed()) {
      const auto pixels = parse_skin_pixels_csv(read_text(fit_pixels));
      const SkinModel model = fit_skin_model(pixels, fit_alpha);
      write_text(fit_out, serialize_skin_model(model));
      out << serialize_skin_model(model);
    } else if (seg->parsed()) {
      const Image frame = read_pnm_file(seg_image);
      if (frame.channels != 3) fail(ErrorCode::WrongChannelCount, seg_image + " is not an RGB (P6) image");
      const auto patch = extract_hand_patch(frame, load_skin_model_file(seg_skin), seg_cfg);
      if (!patch) {
        out << "none\n";
      } else {
        const auto& b = patch->component.bbox;
        out << "bbox " << b.x << ' ' << b.y << ' ' << b.w << ' ' << b.h << " area " << patch->component.area << "\n";
        if (!seg_out.empty()) write_pnm_file(seg_out, mask_to_image(patch->mask));
      }
    } else if (tr->parsed()) {
      tr_seed.announce(out);
      hyper.seed = tr_seed.value;
      Dataset data;
      if (tr_synthetic > 0) {
        data = make_synthetic_shapes(tr_synthetic, tr_seed.value);
      } else if (!tr_data.empty()) {
        data = load_dataset(tr_data, parse_binarize(tr_binarize));
      } else {
        err << "usage error: train needs --data or --synthetic\n" << tr->help();
        return 2;
      }
      Network net = build_network(tr_seed.value);
      const TrainReport report = train(net, data, hyper, tr_split, [&](const EpochLog& e) {
        out << "epoch " << e.epoch << " lr " << e.learning_rate << " loss " << fmt(e.train_loss, 4) << " train_acc "
            << fmt(e.train_accuracy, 4) << " val_acc " << fmt(e.val_accuracy, 4) << "\n";
      });
      save_weights_file(tr_out, net);
      out << "best_epoch " << report.best_epoch << " val_acc " << fmt(report.best_val_accuracy, 4) << "\n";
      if (!tr_log.empty()) {
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : report.epochs) {
          epochs.push_back({{"epoch", e.epoch},
                            {"learning_rate", e.learning_rate},
                            {"train_loss", e.train_loss},
                            {"train_accuracy", e.train_accuracy},
                            {"val_accuracy", e.val_accuracy}});
        }
        const nlohmann::json doc = {{"seed", hyper.seed},
                                    {"hyper",
                                     {{"learning_rate", hyper.learning_rate},
                                      {"momentum", hyper.momentum},
                                      {"batch_size", hyper.batch_size},
                                      {"epochs", hyper.epochs},
                                      {"lr_decay", hyper.lr_decay},
                                      {"decay_every", hyper.decay_every}}},
                                    {"split", tr_split},
                                    {"train_count", report.train_count},
                                    {"val_count", report.val_count},
                                    {"best_epoch", report.best_epoch},
                                    {"best_val_accuracy", report.best_val_accuracy},
                                    {"weights", tr_out},
                                    {"epochs", epochs}};
        write_text(tr_log, doc.dump(2) + "\n");
      }
    } else if (ev->parsed()) {
      const Network net = load_weights_file(ev_weights);
      const Dataset data = load_dataset(ev_data, parse_binarize(ev_binarize));
      const Evaluation result = evaluate(net, data, ev_threads);
      if (!ev_report.empty()) write_text(ev_report, result.confusion.to_csv());
      out << "samples " << result.confusion.total() << " accuracy " << fmt(result.accuracy, 4) << "\n";
    } else if (cl->parsed()) {
      const Network net = load_weights_file(cl_weights);
      const Image img = to_luma(read_pnm_file(cl_image));
      BinaryMask mask = binarize(img, parse_binarize(cl_binarize));
      if (mask.width != kInputSide || mask.height != kInputSide) mask = resize_nearest(mask, kInputSide, kInputSide);
      const Prediction p = classify(net, mask);
      out << "label " << p.label << " conf " << fmt(p.probability, 4) << "\n";
    } else if (de->parsed()) {
      const CascadeModel model = load_cascade_file(de_cascade);
      const Image gray = to_luma(read_pnm_file(de_image));
      const auto dets = detect_multiscale(model, gray, de_params);
      for (const auto& d : dets) {
        out << d.bbox.x << ' ' << d.bbox.y << ' ' << d.bbox.w << ' ' << d.bbox.h << " neighbors " << d.neighbors << "\n";
      }
      out << "detections " << dets.size() << "\n";
    } else if (tk->parsed()) {
      tk_seed.announce(out);
      const TrackerParams params = tk_config.empty() ? TrackerParams{} : parse_tracker_config(read_text(tk_config));
      const auto files = list_frame_files(tk_frames);
      const Image first = to_luma(read_pnm_file(files.front()));
      TrackerState state = init_tracker(first, parse_box(tk_init), params, tk_seed.value);
      for (std::size_t i = 1; i < files.size(); ++i) {
        const TrackResult r = track_step(state, to_luma(read_pnm_file(files[i])));
        out << "frame " << i << ' ' << r.bbox.x << ' ' << r.bbox.y << ' ' << r.bbox.w << ' ' << r.bbox.h << " conf "
            << fmt(r.confidence, 4) << (confidence_ok(r, tk_threshold) ? "" : " lost") << "\n";
      }
    } else if (rn->parsed()) {
      rn_seed.announce(out);
      const PipelineContext ctx = load_pipeline(pipeline_config(rn_config, rn_skin, rn_weights, rn_cascade, rn_seed));
      const auto frames = load_frame_directory(rn_frames);
      const SessionReport report = run_session(frames, ctx);
      for (const auto& f : report.frames) {
        out << "frame " << f.frame_index << ' ' << mode_name(f.mode);
        if (f.hand_bbox) out << " bbox " << f.hand_bbox->x << ',' << f.hand_bbox->y << ',' << f.hand_bbox->w << ',' << f.hand_bbox->h;
        if (f.smoothed_label) out << " label " << *f.smoothed_label;
        out << " total_ms " << fmt(f.timings.total_ms, 3) << "\n";
      }
      out << "mean_total_ms " << fmt(report.total.mean, 3) << " p95_total_ms " << fmt(report.total.p95, 3) << "\n";
      if (!rn_report.empty()) write_text(rn_report, to_json(report, ctx.config).dump(2) + "\n");
    } else if (bf->parsed()) {
      bf_seed.announce(out);
      Network net;
      try {
        net = bf_weights.empty() ? build_network(bf_seed.value) : load_weights_file(bf_weights);
      } catch (const Error& e) {
        fail(ErrorCode::BadWeights, e.what());
      }
      BenchReport report = bench_forward(net, bf_iters, bf_warmup, bf_seed.value);
      report.power_w = bf_power;
      out << "forward iters " << report.iterations << " mean_ms " << fmt(report.stats.mean, 4) << " p50_ms "
          << fmt(report.stats.p50, 4) << " p95_ms " << fmt(report.stats.p95, 4) << " max_ms " << fmt(report.stats.max, 4)
          << (report.pinned ? " pinned" : " unpinned") << "\n";
      out << "reference: 351 ms per image on a 1.2 GHz Cortex-A53 (0.690 W); not measured here\n";
      if (!bf_report.empty()) write_text(bf_report, to_json(report).dump(2) + "\n");
    } else if (bp->parsed()) {
      bp_seed.announce(out);
      const PipelineContext ctx = load_pipeline(pipeline_config(bp_config, bp_skin, bp_weights, bp_cascade, bp_seed));
      const auto frames = load_frame_directory(bp_frames);
      BenchReport report = bench_pipeline(frames, ctx, bp_iters);
      report.power_w = bp_power;
      out << "pipeline frames " << report.iterations << " mean_ms " << fmt(report.stats.mean, 4) << " p50_ms "
          << fmt(report.stats.p50, 4) << " p95_ms " << fmt(report.stats.p95, 4) << "\n";
      for (const auto& [mode, s] : report.by_mode) out << "  " << mode << " mean_ms " << fmt(s.mean, 4) << " n " << s.count << "\n";
      out << "reference: 351 ms per image on a 1.2 GHz Cortex-A53 (0.690 W); not measured here\n";
      if (!bp_report.empty()) write_text(bp_report, to_json(report).dump(2) + "\n");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace hgr
