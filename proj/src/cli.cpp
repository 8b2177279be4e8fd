#include "flatten/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "flatten/diffusion.hpp"
#include "flatten/error.hpp"
#include "flatten/feature_video.hpp"
#include "flatten/flow_field.hpp"
#include "flatten/image.hpp"
#include "flatten/metrics.hpp"
#include "flatten/pipeline.hpp"
#include "flatten/trajectory.hpp"

namespace flatten::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Raised by command handlers for validation failures that are already
/// reported on stderr.
struct Failure {
  std::string message;
};

struct Globals {
  std::string out_dir;
  std::uint64_t seed = 0;
};

class Session {
 public:
  Session(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {}

  fs::path output(const std::string& path) const {
    const fs::path p(path);
    return p.is_absolute() ? p : fs::path(g_.out_dir) / p;
  }

  void prepare_parent(const fs::path& p) const {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  }

  void write_json(const json& doc, const fs::path& p) const {
    prepare_parent(p);
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    f << doc.dump(2) << '\n';
  }

  /// Writes the resolved parameters of a command next to its outputs.
  void persist(const std::string& command, json params) const {
    params["command"] = command;
    params["seed"] = g_.seed;
    params["out_dir"] = g_.out_dir;
    std::string name = command;
    for (char& c : name)
      if (c == ' ') c = '-';
    write_json(params, fs::path(g_.out_dir) / (name + ".run.json"));
  }

  std::uint64_t seed() const { return g_.seed; }
  std::ostream& out() const { return out_; }
  std::ostream& err() const { return err_; }

 private:
  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
};

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("invalid JSON in " + p.string() + ": " + e.what());
  }
}

flow::FlowSequence load_flows(const std::vector<std::string>& paths) {
  std::vector<flow::FlowField> fields;
  for (const auto& p : paths) fields.push_back(flow::load_flo(p));
  return flow::FlowSequence(std::move(fields));
}

json flow_to_json(const flow::FlowField& f) {
  return {{"width", f.width()}, {"height", f.height()}, {"fx", f.fx_plane()}, {"fy", f.fy_plane()}};
}

flow::FlowField flow_from_json(const json& doc) {
  try {
    return flow::FlowField(doc.at("width").get<int>(), doc.at("height").get<int>(),
                           doc.at("fx").get<std::vector<float>>(), doc.at("fy").get<std::vector<float>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed flow JSON: ") + e.what());
  }
}

bool has_extension(const std::string& path, const std::string& ext) {
  return fs::path(path).extension() == ext;
}

// flow ------------------------------------------------------------------------

struct FlowGenArgs {
  std::string kind = "constant";
  double dx = 0.0, dy = 0.0, angle = 0.0, scale = 1.0;
  std::optional<double> cx, cy;
  int width = 64, height = 64;
  std::string output = "flow.flo";
};

void add_flow(CLI::App& app, Session& s, std::function<void()>& action) {
  auto* flow_cmd = app.add_subcommand("flow", "Generate, convert, downsample or perturb .flo fields");
  flow_cmd->require_subcommand(1);

  auto gen_args = std::make_shared<FlowGenArgs>();
  auto* gen = flow_cmd->add_subcommand("gen", "Synthesize an analytic flow field");
  gen->add_option("--kind", gen_args->kind, "constant | rotation | zoom")
      ->check(CLI::IsMember({"constant", "rotation", "zoom"}));
  gen->add_option("--dx", gen_args->dx);
  gen->add_option("--dy", gen_args->dy);
  gen->add_option("--angle", gen_args->angle, "rotation angle in radians");
  gen->add_option("--scale", gen_args->scale, "zoom factor");
  gen->add_option("--cx", gen_args->cx, "motion center x (default: grid center)");
  gen->add_option("--cy", gen_args->cy, "motion center y (default: grid center)");
  gen->add_option("--w,--width", gen_args->width)->check(CLI::PositiveNumber);
  gen->add_option("--h,--height", gen_args->height)->check(CLI::PositiveNumber);
  gen->add_option("-o,--output", gen_args->output);
  gen->callback([&s, &action, gen_args] {
    action = [&s, gen_args] {
      const auto& a = *gen_args;
      const double cx = a.cx.value_or((a.width - 1) / 2.0);
      const double cy = a.cy.value_or((a.height - 1) / 2.0);
      flow::Motion motion = flow::ConstantMotion{a.dx, a.dy};
      if (a.kind == "rotation") motion = flow::RotationMotion{a.angle, cx, cy};
      if (a.kind == "zoom") motion = flow::ZoomMotion{a.scale, cx, cy};
      const auto out = s.output(a.output);
      s.prepare_parent(out);
      flow::write_flo(flow::synth_flow(motion, a.width, a.height), out);
      s.persist("flow gen", {{"kind", a.kind}, {"dx", a.dx}, {"dy", a.dy}, {"angle", a.angle}, {"scale", a.scale},
                             {"cx", cx}, {"cy", cy}, {"width", a.width}, {"height", a.height},
                             {"output", out.string()}});
    };
  });

  auto conv_in = std::make_shared<std::string>();
  auto conv_out = std::make_shared<std::string>();
  auto* convert = flow_cmd->add_subcommand("convert", "Convert between .flo and JSON (by file extension)");
  convert->add_option("-i,--input", *conv_in)->required();
  convert->add_option("-o,--output", *conv_out)->required();
  convert->callback([&s, &action, conv_in, conv_out] {
    action = [&s, conv_in, conv_out] {
      const auto field = has_extension(*conv_in, ".json") ? flow_from_json(read_json(*conv_in)) : flow::load_flo(*conv_in);
      const auto out = s.output(*conv_out);
      if (has_extension(*conv_out, ".json")) {
        s.write_json(flow_to_json(field), out);
      } else {
        s.prepare_parent(out);
        flow::write_flo(field, out);
      }
      s.persist("flow convert", {{"input", *conv_in}, {"output", out.string()}});
    };
  });

  auto ds_in = std::make_shared<std::string>();
  auto ds_out = std::make_shared<std::string>("downsampled.flo");
  auto ds_factor = std::make_shared<int>(8);
  auto* down = flow_cmd->add_subcommand("downsample", "Block-mean downsample to a coarser grid");
  down->add_option("-i,--input", *ds_in)->required();
  down->add_option("--factor", *ds_factor)->check(CLI::PositiveNumber);
  down->add_option("-o,--output", *ds_out);
  down->callback([&s, &action, ds_in, ds_out, ds_factor] {
    action = [&s, ds_in, ds_out, ds_factor] {
      const auto out = s.output(*ds_out);
      s.prepare_parent(out);
      flow::write_flo(flow::downsample_flow(flow::load_flo(*ds_in), *ds_factor), out);
      s.persist("flow downsample", {{"input", *ds_in}, {"factor", *ds_factor}, {"output", out.string()}});
    };
  });

  auto nz_in = std::make_shared<std::string>();
  auto nz_out = std::make_shared<std::string>("noisy.flo");
  auto nz_sigma = std::make_shared<double>(0.0);
  auto* noise = flow_cmd->add_subcommand("noise", "Add seeded Gaussian noise to a flow field");
  noise->add_option("-i,--input", *nz_in)->required();
  noise->add_option("--sigma", *nz_sigma)->required();
  noise->add_option("-o,--output", *nz_out);
  noise->callback([&s, &action, nz_in, nz_out, nz_sigma] {
    action = [&s, nz_in, nz_out, nz_sigma] {
      const auto out = s.output(*nz_out);
      s.prepare_parent(out);
      flow::write_flo(flow::perturb_flow(flow::load_flo(*nz_in), *nz_sigma, s.seed()), out);
      s.persist("flow noise", {{"input", *nz_in}, {"sigma", *nz_sigma}, {"output", out.string()}});
    };
  });
}

// traj ------------------------------------------------------------------------

struct TrajSampleArgs {
  std::vector<std::string> flows;
  int factor = 1;
  int frames = 0;
  int height = 0;
  int width = 0;
  std::string output = "trajectories.json";
};

void report_partition(const traj::PartitionReport& r, std::ostream& os) {
  auto list = [&os](const char* label, const std::vector<traj::PatchRef>& patches) {
    if (patches.empty()) return;
    os << label << " (" << patches.size() << "):";
    for (const auto& p : patches) os << " [" << p.frame << "," << p.x << "," << p.y << "]";
    os << '\n';
  };
  list("missing", r.missing);
  list("duplicated", r.duplicated);
  list("out of range", r.out_of_range);
  if (!r.malformed.empty()) {
    os << "malformed trajectories (" << r.malformed.size() << "):";
    for (int id : r.malformed) os << ' ' << id;
    os << '\n';
  }
}

void add_traj(CLI::App& app, Session& s, std::function<void()>& action) {
  auto* traj_cmd = app.add_subcommand("traj", "Sample, check and visualise patch trajectories");
  traj_cmd->require_subcommand(1);

  auto sa = std::make_shared<TrajSampleArgs>();
  auto* sample = traj_cmd->add_subcommand("sample", "Sample trajectories from a flow sequence");
  sample->add_option("--flows", sa->flows, "one .flo per frame pair, in order");
  sample->add_option("--factor", sa->factor, "downsample flows by this factor first")->check(CLI::PositiveNumber);
  sample->add_option("--frames", sa->frames, "frame count when no flows are given (static video)");
  sample->add_option("--height", sa->height, "latent height (default: from flows)");
  sample->add_option("--width", sa->width, "latent width (default: from flows)");
  sample->add_option("-o,--output", sa->output);
  sample->callback([&s, &action, sa] {
    action = [&s, sa] {
      flow::FlowSequence flows;
      int height = sa->height;
      int width = sa->width;
      if (sa->flows.empty()) {
        if (sa->frames < 1 || height < 1 || width < 1) {
          throw ArgumentError("without --flows, --frames, --height and --width are required");
        }
        std::vector<flow::FlowField> zero(static_cast<std::size_t>(sa->frames - 1), flow::FlowField(width, height));
        flows = flow::FlowSequence(std::move(zero), sa->frames);
      } else {
        flows = flow::downsample_flows(load_flows(sa->flows), sa->factor);
        if (height == 0) height = flows.height();
        if (width == 0) width = flows.width();
      }
      const auto set = traj::sample_trajectories(flows, height, width, s.seed());
      const auto out = s.output(sa->output);
      s.write_json(traj::to_json(set), out);
      s.out() << set.size() << " trajectories over " << set.frame_count() << "x" << height << "x" << width
              << " patches\n";
      s.persist("traj sample", {{"flows", sa->flows}, {"factor", sa->factor}, {"frames", flows.frame_count()},
                                {"height", height}, {"width", width}, {"output", out.string()}});
    };
  });

  auto check_in = std::make_shared<std::string>();
  auto* check = traj_cmd->add_subcommand("check", "Verify that trajectories partition the patch grid");
  check->add_option("-i,--input", *check_in)->required();
  check->callback([&s, &action, check_in] {
    action = [&s, check_in] {
      const auto set = traj::trajectory_set_from_json(read_json(*check_in));
      const auto report = traj::validate_partition(set);
      if (!report.passed) {
        report_partition(report, s.err());
        throw Failure{"trajectory set does not partition the patch grid"};
      }
      s.out() << "partition ok: " << set.size() << " trajectories, " << report.total_length << " patches\n";
    };
  });

  auto viz_in = std::make_shared<std::string>();
  auto viz_frames = std::make_shared<std::vector<std::string>>();
  auto viz_prefix = std::make_shared<std::string>("traj");
  auto viz_samples = std::make_shared<int>(5);
  auto viz_cell = std::make_shared<int>(8);
  auto* viz = traj_cmd->add_subcommand("viz", "Mark sampled trajectories on every frame (PNG)");
  viz->add_option("-i,--input", *viz_in)->required();
  viz->add_option("--samples", *viz_samples)->check(CLI::NonNegativeNumber);
  viz->add_option("--frames", *viz_frames, "background PNG frames (default: gray canvas)");
  viz->add_option("--cell", *viz_cell, "pixels per latent cell on the gray canvas")->check(CLI::PositiveNumber);
  viz->add_option("--prefix", *viz_prefix, "output name prefix; writes <prefix>_<k>.png");
  viz->callback([&s, &action, viz_in, viz_frames, viz_prefix, viz_samples, viz_cell] {
    action = [&s, viz_in, viz_frames, viz_prefix, viz_samples, viz_cell] {
      const auto set = traj::trajectory_set_from_json(read_json(*viz_in));
      ImageSequence frames;
      for (const auto& p : *viz_frames) frames.push_back(read_png(p));
      traj::RenderOptions opts;
      opts.cell_size = *viz_cell;
      const auto images = traj::render_trajectories(set, *viz_samples, frames, s.seed(), opts);
      json written = json::array();
      for (std::size_t k = 0; k < images.size(); ++k) {
        const auto out = s.output(*viz_prefix + "_" + std::to_string(k) + ".png");
        s.prepare_parent(out);
        write_png(images[k], out);
        written.push_back(out.string());
      }
      s.persist("traj viz", {{"input", *viz_in}, {"samples", *viz_samples}, {"frames", *viz_frames},
                             {"cell", *viz_cell}, {"outputs", written}});
    };
  });
}

// pipeline --------------------------------------------------------------------

struct PipelineArgs {
  std::string config;
  std::string latent;
  std::string trajectories;
  std::string output;
  std::string cache;
  std::string flatten = "both";
  bool no_inject = false;
};

pipeline::PipelineConfig load_config(const std::string& path) {
  return path.empty() ? pipeline::PipelineConfig{} : pipeline::config_from_json(read_json(path));
}

void add_pipeline(CLI::App& app, Session& s, std::function<void()>& action) {
  auto* pipe = app.add_subcommand("pipeline", "Toy FLATTEN editing pipeline on latent videos");
  pipe->require_subcommand(1);

  // latent: fixture generator
  struct LatentArgs {
    int frames = 4, height = 12, width = 12, channels = 4;
    bool still = false;
    std::string output = "latent.bin";
  };
  auto la = std::make_shared<LatentArgs>();
  auto* latent = pipe->add_subcommand("latent", "Write a seeded random latent video");
  latent->add_option("--frames", la->frames)->check(CLI::PositiveNumber);
  latent->add_option("--height", la->height)->check(CLI::PositiveNumber);
  latent->add_option("--width", la->width)->check(CLI::PositiveNumber);
  latent->add_option("--channels", la->channels)->check(CLI::PositiveNumber);
  latent->add_flag("--static", la->still, "repeat frame 0 in every frame");
  latent->add_option("-o,--output", la->output);
  latent->callback([&s, &action, la] {
    action = [&s, la] {
      auto z = random_feature_video(la->frames, la->height, la->width, la->channels, s.seed());
      if (la->still) {
        const Eigen::Index per = static_cast<Eigen::Index>(la->height) * la->width;
        for (int k = 1; k < la->frames; ++k) z.tokens().middleRows(k * per, per) = z.tokens().topRows(per);
      }
      const auto out = s.output(la->output);
      s.prepare_parent(out);
      write_feature_video(z, out);
      s.persist("pipeline latent", {{"frames", la->frames}, {"height", la->height}, {"width", la->width},
                                    {"channels", la->channels}, {"static", la->still}, {"output", out.string()}});
    };
  });

  auto ia = std::make_shared<PipelineArgs>();
  ia->output = "inverted.bin";
  ia->cache = "cache";
  auto* invert = pipe->add_subcommand("invert", "DDIM-invert a latent video and cache block features");
  invert->add_option("--config", ia->config, "pipeline config JSON");
  invert->add_option("--latent", ia->latent)->required();
  invert->add_option("--trajectories", ia->trajectories)->required();
  invert->add_option("-o,--output", ia->output);
  invert->add_option("--cache", ia->cache, "directory for the injection cache");
  invert->callback([&s, &action, ia] {
    action = [&s, ia] {
      const auto config = load_config(ia->config);
      const auto z0 = read_feature_video(ia->latent);
      const auto set = traj::trajectory_set_from_json(read_json(ia->trajectories));
      const pipeline::ToyUNet unet(config, z0.channels());
      const auto result = pipeline::invert_video(z0, unet, set, config.schedule(), config.inv_steps);
      const auto out = s.output(ia->output);
      s.prepare_parent(out);
      write_feature_video(result.latent, out, BlobType::float64);
      const auto cache_dir = s.output(ia->cache);
      pipeline::write_cache(result.cache, cache_dir);
      s.persist("pipeline invert", {{"config", pipeline::to_json(config)}, {"latent", ia->latent},
                                    {"trajectories", ia->trajectories}, {"output", out.string()},
                                    {"cache", cache_dir.string()}});
    };
  });

  auto ea = std::make_shared<PipelineArgs>();
  ea->output = "edited.bin";
  auto* edit = pipe->add_subcommand("edit", "DDIM-sample from an inverted latent with feature injection");
  edit->add_option("--config", ea->config, "pipeline config JSON");
  edit->add_option("--latent", ea->latent, "inverted latent z_T")->required();
  edit->add_option("--trajectories", ea->trajectories)->required();
  edit->add_option("--cache", ea->cache, "injection cache directory written by `pipeline invert`");
  edit->add_flag("--no-inject", ea->no_inject, "sample without feature injection");
  edit->add_option("-o,--output", ea->output);
  edit->callback([&s, &action, ea] {
    action = [&s, ea] {
      const auto config = load_config(ea->config);
      const auto z_T = read_feature_video(ea->latent);
      const auto set = traj::trajectory_set_from_json(read_json(ea->trajectories));
      const pipeline::ToyUNet unet(config, z_T.channels());
      std::optional<pipeline::InjectionCache> cache;
      if (!ea->no_inject) {
        if (ea->cache.empty()) throw ConfigError("feature injection needs --cache (or pass --no-inject)");
        cache = pipeline::read_cache(ea->cache);
      }
      const auto edited = pipeline::edit_video(z_T, unet, set, config.schedule(), config.samp_steps,
                                               cache ? &*cache : nullptr, config.injection);
      const auto out = s.output(ea->output);
      s.prepare_parent(out);
      write_feature_video(edited, out);
      s.persist("pipeline edit", {{"config", pipeline::to_json(config)}, {"latent", ea->latent},
                                  {"trajectories", ea->trajectories}, {"cache", ea->cache},
                                  {"inject", !ea->no_inject}, {"output", out.string()}});
    };
  });

  auto ra = std::make_shared<PipelineArgs>();
  ra->output = "reconstruction.json";
  auto* recon = pipe->add_subcommand("reconstruct", "Inversion/reconstruction quality with and without FLATTEN");
  recon->add_option("--config", ra->config, "pipeline config JSON");
  recon->add_option("--latent", ra->latent)->required();
  recon->add_option("--trajectories", ra->trajectories)->required();
  recon->add_option("--flatten", ra->flatten, "which variants to report")
      ->check(CLI::IsMember({"on", "off", "both"}));
  recon->add_option("-o,--output", ra->output);
  recon->callback([&s, &action, ra] {
    action = [&s, ra] {
      const auto config = load_config(ra->config);
      const auto z0 = read_feature_video(ra->latent);
      const auto set = traj::trajectory_set_from_json(read_json(ra->trajectories));
      const pipeline::ToyUNet unet(config, z0.channels());
      const auto report =
          pipeline::reconstruct_experiment(z0, unet, set, config.schedule(), config.inv_steps, config.samp_steps);
      json doc = pipeline::to_json(report);
      if (ra->flatten == "on") doc.erase("without_flatten");
      if (ra->flatten == "off") doc.erase("with_flatten");
      const auto out = s.output(ra->output);
      s.write_json(doc, out);
      s.out() << doc.dump(2) << '\n';
      s.persist("pipeline reconstruct", {{"config", pipeline::to_json(config)}, {"latent", ra->latent},
                                         {"trajectories", ra->trajectories}, {"flatten", ra->flatten},
                                         {"output", out.string()}});
    };
  });
}

// metrics ---------------------------------------------------------------------

struct MetricsArgs {
  std::vector<std::string> frames;
  std::vector<std::string> flows;
  std::vector<std::string> reference;
  std::optional<double> clip_t;
  std::optional<double> e_warp;
  std::string output = "metrics.json";
};

void add_metrics(CLI::App& app, Session& s, std::function<void()>& action) {
  auto ma = std::make_shared<MetricsArgs>();
  auto* m = app.add_subcommand("metrics", "E_warp, PSNR, SSIM and S_edit for a frame sequence");
  m->add_option("--frames", ma->frames, "edited frames (PNG), in order");
  m->add_option("--flows", ma->flows, "source-video flows (.flo), one per frame pair");
  m->add_option("--reference", ma->reference, "reference frames for PSNR/SSIM");
  m->add_option("--clip-t", ma->clip_t, "externally measured CLIP-T (x100 scale)");
  m->add_option("--e-warp", ma->e_warp, "use this E_warp (x1000 scale) instead of computing it");
  m->add_option("-o,--output", ma->output);
  m->callback([&s, &action, ma] {
    action = [&s, ma] {
      metrics::MetricReport report;
      ImageSequence frames;
      for (const auto& p : ma->frames) frames.push_back(read_png(p));
      if (ma->e_warp) {
        report.e_warp_scaled = *ma->e_warp;
      } else if (!ma->flows.empty()) {
        report.e_warp_scaled = metrics::warping_error(frames, load_flows(ma->flows));
      }
      if (!ma->reference.empty()) {
        ImageSequence ref;
        for (const auto& p : ma->reference) ref.push_back(read_png(p));
        report.psnr_db = metrics::psnr(frames, ref);
        report.ssim = metrics::ssim(frames, ref);
      }
      if (ma->clip_t) {
        report.clip_t_scaled = *ma->clip_t;
        if (!report.e_warp_scaled) throw ArgumentError("--clip-t needs flows or --e-warp to form S_edit");
        report.s_edit = metrics::edit_score(*ma->clip_t, *report.e_warp_scaled);
      }
      if (!report.e_warp_scaled && !report.psnr_db) {
        throw ArgumentError("nothing to compute: pass --flows, --reference or --e-warp");
      }
      const auto doc = metrics::to_json(report);
      const auto out = s.output(ma->output);
      s.write_json(doc, out);
      s.out() << doc.dump(2) << '\n';
      json params = {{"frames", ma->frames}, {"flows", ma->flows}, {"reference", ma->reference},
                     {"output", out.string()}};
      params["clip_t"] = ma->clip_t ? json(*ma->clip_t) : json(nullptr);
      params["e_warp"] = ma->e_warp ? json(*ma->e_warp) : json(nullptr);
      s.persist("metrics", params);
    };
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Globals g;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) {
    g.out_dir = env;
  } else {
    g.out_dir = ".";
  }
  Session session(g, out, err);
  std::function<void()> action;

  CLI::App app{"FLATTEN toolkit: flows, trajectories, flow-guided attention pipeline and metrics", "flatten"};
  // "--h" is a height alias in `flow gen`, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--out-dir", g.out_dir, std::string("output directory (default: $") + kOutDirEnv + " or .)");
  app.add_option("--seed", g.seed, "global seed");
  add_flow(app, session, action);
  add_traj(app, session, action);
  add_pipeline(app, session, action);
  add_metrics(app, session, action);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const Failure& f) {
    err << "error: " << f.message << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace flatten::cli
