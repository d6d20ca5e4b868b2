#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "splatedit/errors.hpp"
#include "splatedit/server.hpp"
#include "splatedit/session.hpp"

namespace {

using namespace splatedit;
using json = nlohmann::json;

struct KnobFlags {
  std::optional<std::size_t> knn_k;
  std::optional<double> kappa, step_ratio, max_move_ratio;
  std::optional<std::string> inpaint, up_axis;
  bool keep_sh_rest = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--knn-k", knn_k, "neighbors for relabeling and inpainting");
    cmd->add_option("--kappa", kappa, "added asset size relative to the reference");
    cmd->add_option("--step-ratio", step_ratio, "move step as a fraction of the centroid distance");
    cmd->add_option("--max-move-ratio", max_move_ratio, "move cap as a fraction of the scene diagonal");
    cmd->add_option("--inpaint", inpaint, "fill holes left by removal")->check(CLI::IsMember({"on", "off"}));
    cmd->add_flag("--keep-sh-rest", keep_sh_rest, "keep view-dependent SH terms when recoloring");
    cmd->add_option("--up-axis", up_axis, "gravity axis")->check(CLI::IsMember({"z", "y"}));
  }

  EditKnobs apply(EditKnobs k) const {
    if (knn_k) k.knn_k = *knn_k;
    if (kappa) k.kappa = *kappa;
    if (step_ratio) k.step_ratio = *step_ratio;
    if (max_move_ratio) k.max_move_ratio = *max_move_ratio;
    if (inpaint) k.inpaint = *inpaint == "on";
    if (keep_sh_rest) k.keep_sh_rest = true;
    if (up_axis) k.up = *up_axis == "y" ? Vec3::UnitY() : Vec3::UnitZ();
    return k;
  }
};

void log_stderr(const std::string& msg) { std::cerr << msg << '\n'; }

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

SessionServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-driven editor for 3D Gaussian Splatting scenes"};
  app.require_subcommand(1);

  // import
  std::string ply, labels_json, labels_bin, session_dir, assets_dir, scorer_url;
  double min_confidence = kDefaultMinConfidence;
  KnobFlags import_knobs;
  auto* import_cmd = app.add_subcommand("import", "create a session from a scene and its labels");
  import_cmd->add_option("--ply", ply, "scene PLY")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--labels-json", labels_json, "instance table")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--labels-bin", labels_bin, "per-Gaussian instance ids")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--min-confidence", min_confidence, "drop instances below this confidence")
      ->check(CLI::Range(0.0, 1.0));
  import_cmd->add_option("--session", session_dir, "session directory")->required();
  import_cmd->add_option("--assets-dir", assets_dir, "asset registry directory");
  import_cmd->add_option("--scorer-url", scorer_url, "external scorer base URL");
  import_knobs.attach(import_cmd);

  // edit
  std::string prompt, out_path;
  KnobFlags edit_knobs;
  auto* edit_cmd = app.add_subcommand("edit", "apply one prompt to a session");
  edit_cmd->add_option("--session", session_dir, "session directory")->required();
  edit_cmd->add_option("--prompt", prompt, "edit instruction")->required();
  edit_cmd->add_option("--out", out_path, "also write the edited scene here");
  edit_cmd->add_option("--assets-dir", assets_dir, "asset registry directory");
  edit_cmd->add_option("--scorer-url", scorer_url, "external scorer base URL");
  edit_knobs.attach(edit_cmd);

  // ground
  std::string trace_path;
  KnobFlags ground_knobs;
  auto* ground_cmd = app.add_subcommand("ground", "resolve a prompt without editing");
  ground_cmd->add_option("--session", session_dir, "session directory")->required();
  ground_cmd->add_option("--prompt", prompt, "edit instruction")->required();
  ground_cmd->add_option("--trace", trace_path, "write the grounding result and trace as JSON");
  ground_cmd->add_option("--scorer-url", scorer_url, "external scorer base URL");
  ground_knobs.attach(ground_cmd);

  // undo
  auto* undo_cmd = app.add_subcommand("undo", "revert the last edit");
  undo_cmd->add_option("--session", session_dir, "session directory")->required();

  // preview
  double azimuth = 45.0, elevation = 30.0;
  std::uint32_t width = 512, height = 512;
  std::optional<InstanceId> crop_id;
  auto* preview_cmd = app.add_subcommand("preview", "render an orthographic PNG");
  preview_cmd->add_option("--session", session_dir, "session directory")->required();
  preview_cmd->add_option("--azimuth", azimuth, "degrees around the up axis");
  preview_cmd->add_option("--elevation", elevation, "degrees above the horizon");
  preview_cmd->add_option("--width", width)->check(CLI::Range(1u, 8192u));
  preview_cmd->add_option("--height", height)->check(CLI::Range(1u, 8192u));
  preview_cmd->add_option("--crop-id", crop_id, "frame one instance");
  preview_cmd->add_option("--out", out_path, "output PNG")->required();

  // assets add
  std::string asset_name, asset_ply;
  auto* assets_cmd = app.add_subcommand("assets", "manage the asset registry");
  assets_cmd->require_subcommand(1);
  auto* assets_add = assets_cmd->add_subcommand("add", "register an asset PLY under a name");
  assets_add->add_option("--name", asset_name, "asset name used in prompts")->required();
  assets_add->add_option("--ply", asset_ply, "asset PLY")->required()->check(CLI::ExistingFile);
  assets_add->add_option("--assets-dir", assets_dir, "asset registry directory");

  // serve
  int port = 7331;
  std::string host = "127.0.0.1";
  auto* serve_cmd = app.add_subcommand("serve", "serve the HTTP API for a session");
  serve_cmd->add_option("--session", session_dir, "session directory")->required();
  serve_cmd->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--scorer-url", scorer_url, "external scorer base URL");
  serve_cmd->add_option("--assets-dir", assets_dir, "asset registry directory");

  CLI11_PARSE(app, argc, argv);

  try {
    auto open_session = [&] {
      Session s = Session::open(session_dir, log_stderr);
      if (!scorer_url.empty()) s.config().scorer_url = scorer_url;
      if (!assets_dir.empty()) s.config().assets_dir = assets_dir;
      return s;
    };

    if (*import_cmd) {
      SessionConfig cfg;
      cfg.min_confidence = min_confidence;
      cfg.knobs = import_knobs.apply({});
      cfg.scorer_url = scorer_url;
      if (!assets_dir.empty()) cfg.assets_dir = assets_dir;
      Session s = Session::import(ply, labels_json, labels_bin, session_dir, cfg, log_stderr);
      std::cout << s.meta_json() << '\n';
    } else if (*edit_cmd) {
      Session s = open_session();
      const auto outcome = s.edit(prompt, edit_knobs.apply(s.config().knobs));
      s.save();
      if (!out_path.empty()) save_ply(s.scene(), out_path);
      json out{{"journal_id", outcome.journal_id},
               {"winner", outcome.grounded.primary.winner.id},
               {"affected", outcome.affected},
               {"added", outcome.added},
               {"splat_count", s.scene().size()},
               {"timings", json::parse(to_json(outcome.timings))}};
      std::cout << out.dump(2) << '\n';
    } else if (*ground_cmd) {
      Session s = open_session();
      bool hit = false;
      const auto g = s.ground(prompt, ground_knobs.apply(s.config().knobs), &hit);
      s.save_caches();
      const std::string text = to_json(g);
      if (!trace_path.empty()) {
        std::ofstream(trace_path) << text << '\n';
      }
      std::cout << "winner " << g.primary.winner.id << " (" << g.primary.winner.class_name << ")"
                << (hit ? " [cached]" : "") << '\n';
    } else if (*undo_cmd) {
      Session s = open_session();
      s.undo();
      s.save();
      std::cout << "journal length " << s.journal().size() << '\n';
    } else if (*preview_cmd) {
      Session s = open_session();
      ViewParams v;
      v.azimuth_deg = azimuth;
      v.elevation_deg = elevation;
      v.width = width;
      v.height = height;
      v.up = s.config().knobs.up;
      write_bytes(out_path, encode_png(s.preview(v, crop_id)));
    } else if (*assets_add) {
      const auto dest = register_asset(assets_dir.empty() ? "assets" : assets_dir, asset_name, asset_ply);
      std::cout << dest.string() << '\n';
    } else if (*serve_cmd) {
      Session s = open_session();
      ServerOptions opts;
      opts.host = host;
      opts.port = port;
      SessionServer server(s, opts);
      server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving session " << s.config().session_id << " on http://" << host << ":" << server.port()
                << '\n';
      server.run();
      g_server = nullptr;
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << to_string(e.stage()) << "] " << e.code() << ": " << e.what() << '\n';
    if (!e.trace_json().empty()) std::cerr << e.trace_json() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
