// trussforge: search, refine, validate and render truss layouts.
//
// Exit codes: 0 success (or valid layout), 1 invalid layout from validate,
// 2 usage error, 3 I/O or parse error.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "trussforge/checkpoint.hpp"
#include "trussforge/model.hpp"
#include "trussforge/rl.hpp"
#include "trussforge/rng.hpp"
#include "trussforge/search.hpp"
#include "trussforge/svg.hpp"
#include "trussforge/testbeds.hpp"
#include "trussforge/validity.hpp"

namespace {

using namespace trussforge;

constexpr int kExitOk = 0;
constexpr int kExitInvalidLayout = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct CommonSearchOpts {
  std::string case_name;
  int max_nodes = 0;
  long budget = 0;
  std::uint64_t seed = 0;
  double kappa = 0.0;
  long progress = 0;
  double beta = 0.3;
  double ucb_c = 30.0;
  double bandwidth = 0.1;
};

struct CommonRefineOpts {
  long rl_steps = 0;
  std::uint64_t seed = 0;
  double kappa = 0.0;
  int max_invalid = 5;
  int episode_len = 20;
  bool no_diverse = false;
  int batch = 256;
  int update_every = 1;
  int jobs = 1;
  std::string net_profile = "paper";
  std::string log_path;
};

TrussLayout load_layout_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file: " + path);
  return deserialize(json::parse(in));
}

rl::RefineParams make_refine_params(const CommonRefineOpts& o) {
  rl::RefineParams p;
  p.steps = o.rl_steps;
  p.episode_len = o.episode_len;
  p.max_invalid = o.max_invalid;
  p.no_diverse = o.no_diverse;
  p.kappa = o.kappa;
  p.batch = o.batch;
  p.update_every = o.update_every;
  p.jobs = o.jobs;
  p.seed = o.seed;
  p.net = o.net_profile == "desk" ? rl::NetConfig::desk() : rl::NetConfig();
  return p;
}

Checkpoint run_search_to_checkpoint(const CaseConfig& cfg, const CommonSearchOpts& o) {
  uct::SearchParams params;
  params.budget = o.budget;
  params.kappa = o.kappa;
  params.seed = o.seed;
  params.progress_every = o.progress;
  params.beta = o.beta;
  params.ucb_c = o.ucb_c;
  params.kernel_bandwidth = o.bandwidth;
  Rng rng(o.seed);

  const auto started = std::chrono::steady_clock::now();
  uct::SearchResult res = uct::run_search(cfg, params, rng, [](const uct::SearchProgress& p) {
    std::cerr << "iteration " << p.iteration << ": " << p.topologies << " topologies";
    if (p.best_mass) std::cerr << ", best " << *p.best_mass << " kg";
    std::cerr << "\n";
  });
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - started)
                          .count();

  Checkpoint ck;
  ck.manifest.case_name = cfg.name;
  ck.manifest.max_nodes = cfg.max_nodes;
  ck.manifest.seed = o.seed;
  ck.manifest.search_budget = o.budget;
  ck.manifest.kappa = params.kappa_for(cfg);
  ck.diverse = std::move(res.diverse);
  ck.iterations = res.iterations;
  ck.rng_state = rng.state();

  std::cerr << "search: " << ck.iterations << " iterations in " << secs << " s, "
            << res.valid_layouts << " valid rollouts\n";
  std::cout << "topologies: " << ck.diverse.topology_count() << "\n";
  if (const auto best = ck.diverse.best()) {
    std::cout << "best mass: " << best->mass << " kg\n";
  } else {
    std::cout << "best mass: none (no valid layout found)\n";
  }
  return ck;
}

int cmd_search(const CommonSearchOpts& o, const std::string& out_path) {
  const CaseConfig cfg = load_case(o.case_name, o.max_nodes);
  Checkpoint ck = run_search_to_checkpoint(cfg, o);
  save_checkpoint(ck, out_path);
  return kExitOk;
}

int cmd_refine(const std::string& checkpoint_path, const CommonRefineOpts& o,
               const std::string& out_path, const std::string& best_layout_path) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.diverse.empty()) {
    std::cerr << "nothing to refine: the checkpoint holds no valid layouts\n";
    return kExitUsage;
  }
  const CaseConfig cfg = load_case(ck.manifest.case_name, ck.manifest.max_nodes);
  rl::RefineParams params = make_refine_params(o);
  Rng rng(o.seed);

  std::ofstream log_stream;
  rl::RefineLogFn log_fn;
  if (!o.log_path.empty()) {
    log_stream.open(o.log_path);
    if (!log_stream) throw std::runtime_error("cannot write log: " + o.log_path);
    log_fn = [&log_stream](const rl::RefineLogRecord& rec) {
      log_stream << rec.to_json().dump() << "\n";
    };
  }

  rl::RefineResult res = rl::run_refinement(std::move(ck.diverse), cfg, params, rng, log_fn);

  Checkpoint out = std::move(ck);
  out.diverse = std::move(res.diverse);
  out.manifest.rl_steps = o.rl_steps;
  out.manifest.no_diverse = o.no_diverse;
  out.manifest.max_invalid = o.max_invalid;
  out.manifest.episode_len = o.episode_len;
  out.rng_state = rng.state();
  save_checkpoint(out, out_path);

  const auto best = out.diverse.best();
  if (!best_layout_path.empty() && best) {
    std::ofstream f(best_layout_path);
    f << serialize(best->layout).dump(2) << "\n";
  }
  std::cout << "best mass: " << (best ? best->mass : 0.0) << " kg\n";
  return kExitOk;
}

int cmd_validate(const std::string& layout_path, const std::string& case_name,
                 int max_nodes, const std::string& json_out) {
  const TrussLayout layout = load_layout_file(layout_path);
  const CaseConfig cfg = max_nodes > 0
      ? load_case(case_name, max_nodes)
      : load_case_for_layout(case_name, static_cast<int>(layout.nodes.size()));

  const AnalysisResult fea = assemble_and_solve(layout, cfg.material);
  const ValidityReport rep = check(layout, cfg, &fea);
  const double m = mass(layout, cfg.material.density);

  std::cout << "classification: " << to_string(rep.classification) << "\n";
  std::cout << "mass: " << m << " kg\n";
  for (int g = 0; g < ConstraintBounds::kConstraintCount; ++g) {
    const auto s = rep.status[static_cast<std::size_t>(g)];
    std::cout << "  g" << g << ": "
              << (s == ValidityReport::Status::kPass     ? "pass"
                  : s == ValidityReport::Status::kFail  ? "fail"
                                                        : "inactive");
    if (s == ValidityReport::Status::kFail) {
      std::cout << " (violation " << rep.violation[static_cast<std::size_t>(g)] << ")";
    }
    std::cout << "\n";
  }
  std::cout << "bar  length[m]  stress[MPa]  buckle[MPa]  slenderness\n";
  for (std::size_t i = 0; i < layout.bars.size(); ++i) {
    std::printf("%3zu  %9.4f  %11.3f  %11.3f  %11.1f\n", i,
                layout.bar_length(static_cast<int>(i)), fea.axial_stress[i] / 1e6,
                fea.buckling_limit[i] / 1e6, fea.slenderness[i]);
  }

  if (!json_out.empty()) {
    json doc = rep.to_json();
    doc["mass_kg"] = m;
    doc["solvable"] = fea.solvable;
    doc["max_displacement_m"] = fea.max_displacement_inf();
    std::ofstream f(json_out);
    if (!f) throw std::runtime_error("cannot write report: " + json_out);
    f << doc.dump(2) << "\n";
  }
  return rep.valid() ? kExitOk : kExitInvalidLayout;
}

int cmd_render(const std::string& layout_path, const std::string& case_name,
               int max_nodes, const std::string& out_path, double max_stroke) {
  const TrussLayout layout = load_layout_file(layout_path);
  std::optional<CaseConfig> cfg;
  if (!case_name.empty()) {
    cfg = max_nodes > 0
        ? load_case(case_name, max_nodes)
        : load_case_for_layout(case_name, static_cast<int>(layout.nodes.size()));
  }
  svg::RenderStyle style;
  style.max_stroke = max_stroke;
  if (cfg) style.density = cfg->material.density;
  const std::string doc = svg::render(layout, cfg ? &*cfg : nullptr, style);
  std::ofstream f(out_path);
  if (!f) throw std::runtime_error("cannot write SVG: " + out_path);
  f << doc;
  std::cout << "wrote " << out_path << "\n";
  return kExitOk;
}

int cmd_pipeline(const CommonSearchOpts& so, CommonRefineOpts ro,
                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const CaseConfig cfg = load_case(so.case_name, so.max_nodes);

  Checkpoint search_ck = run_search_to_checkpoint(cfg, so);
  search_ck.manifest.rl_steps = ro.rl_steps;
  search_ck.manifest.no_diverse = ro.no_diverse;
  search_ck.manifest.max_invalid = ro.max_invalid;
  search_ck.manifest.episode_len = ro.episode_len;
  save_checkpoint(search_ck, (fs::path(out_dir) / "search_checkpoint.json").string());
  if (search_ck.diverse.empty()) {
    std::cerr << "nothing to refine: search found no valid layouts\n";
    return kExitUsage;
  }

  ro.seed = so.seed;
  ro.kappa = so.kappa;
  rl::RefineParams params = make_refine_params(ro);
  Rng rng(ro.seed);
  std::ofstream log_stream(fs::path(out_dir) / "train_log.ndjson");
  rl::RefineLogFn log_fn = [&log_stream](const rl::RefineLogRecord& rec) {
    log_stream << rec.to_json().dump() << "\n";
  };
  rl::RefineResult res =
      rl::run_refinement(std::move(search_ck.diverse), cfg, params, rng, log_fn);

  Checkpoint refined = std::move(search_ck);
  refined.diverse = std::move(res.diverse);
  refined.rng_state = rng.state();
  save_checkpoint(refined, (fs::path(out_dir) / "refined_checkpoint.json").string());

  const auto best = refined.diverse.best();
  if (best) {
    std::ofstream f(fs::path(out_dir) / "best_layout.json");
    f << serialize(best->layout).dump(2) << "\n";
    std::ofstream s(fs::path(out_dir) / "best_layout.svg");
    svg::RenderStyle style;
    style.density = cfg.material.density;
    s << svg::render(best->layout, &cfg, style);
  }
  std::cout << "best mass: " << (best ? best->mass : 0.0) << " kg\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"truss layout synthesis: sampled-UCT search plus soft actor-critic refinement"};
  app.require_subcommand(1);

  CommonSearchOpts so;
  CommonRefineOpts ro;
  std::string out_path, checkpoint_path, layout_path, case_name, json_out, best_layout_path;
  int validate_nodes = 0;
  double max_stroke = 10.0;

  auto add_search_opts = [&](CLI::App* cmd) {
    cmd->add_option("--case", so.case_name, "case name (ten-bar-load1, ten-bar-load2, seventeen-bar, sundial)")
        ->required();
    cmd->add_option("--max-nodes", so.max_nodes, "total node budget p")->required();
    cmd->add_option("--budget", so.budget, "search iterations")
        ->required()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", so.seed, "random seed")->default_val(0);
    cmd->add_option("--kappa", so.kappa, "reward scale (default: case value)");
    cmd->add_option("--progress", so.progress, "progress print period (iterations)");
    cmd->add_option("--beta", so.beta, "value mix between mean and best reward");
    cmd->add_option("--ucb-c", so.ucb_c, "UCB exploration coefficient");
    cmd->add_option("--bandwidth", so.bandwidth, "kernel regression bandwidth");
  };
  auto add_refine_opts = [&](CLI::App* cmd) {
    cmd->add_option("--rl-steps", ro.rl_steps, "environment step budget")
        ->required()
        ->check(CLI::NonNegativeNumber);
    if (!cmd->get_option_no_throw("--seed")) {
      cmd->add_option("--seed", ro.seed, "random seed")->default_val(0);
    }
    if (!cmd->get_option_no_throw("--kappa")) {
      cmd->add_option("--kappa", ro.kappa, "reward scale (default: case value)");
    }
    cmd->add_option("--max-invalid", ro.max_invalid,
                    "invalid layouts tolerated per episode; 0 ends episodes at the first");
    cmd->add_option("--episode-len", ro.episode_len, "actions per episode");
    cmd->add_flag("--no-diverse", ro.no_diverse,
                  "start episodes only from the global lightest layouts");
    cmd->add_option("--batch", ro.batch, "gradient batch size");
    cmd->add_option("--update-every", ro.update_every, "environment steps per gradient update");
    cmd->add_option("--jobs", ro.jobs, "worker threads for batch gradients");
    cmd->add_option("--net-profile", ro.net_profile, "network size profile")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--log", ro.log_path, "training log (newline-delimited JSON)");
  };

  CLI::App* search = app.add_subcommand("search", "run the layout search stage");
  add_search_opts(search);
  search->add_option("--out", out_path, "checkpoint file")->required();

  CLI::App* refine = app.add_subcommand("refine", "refine a search checkpoint");
  refine->add_option("--checkpoint", checkpoint_path, "search checkpoint")->required();
  add_refine_opts(refine);
  refine->add_option("--out", out_path, "refined checkpoint file")->required();
  refine->add_option("--best-layout", best_layout_path, "write the lightest layout here");

  CLI::App* pipeline = app.add_subcommand("pipeline", "search then refine");
  add_search_opts(pipeline);
  add_refine_opts(pipeline);
  pipeline->add_option("--out", out_path, "output directory")->required();

  CLI::App* validate = app.add_subcommand("validate", "check a layout against a case");
  validate->add_option("--layout", layout_path, "layout JSON document")->required();
  validate->add_option("--case", case_name, "case name")->required();
  validate->add_option("--max-nodes", validate_nodes,
                       "node budget (default: layout node count)");
  validate->add_option("--json", json_out, "machine-readable report path");

  CLI::App* render = app.add_subcommand("render", "draw a layout as SVG");
  render->add_option("--layout", layout_path, "layout JSON document")->required();
  render->add_option("--case", case_name, "case name for labels and mass");
  render->add_option("--max-nodes", validate_nodes, "node budget for the case");
  render->add_option("--out", out_path, "SVG output path")->required();
  render->add_option("--stroke", max_stroke, "stroke width of the thickest bar");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (search->parsed()) return cmd_search(so, out_path);
    if (refine->parsed()) return cmd_refine(checkpoint_path, ro, out_path, best_layout_path);
    if (pipeline->parsed()) return cmd_pipeline(so, ro, out_path);
    if (validate->parsed()) return cmd_validate(layout_path, case_name, validate_nodes, json_out);
    if (render->parsed()) return cmd_render(layout_path, case_name, validate_nodes, out_path, max_stroke);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
