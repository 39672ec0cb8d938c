#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "hcmgan/checkpoint.hpp"
#include "hcmgan/cli.hpp"
#include "hcmgan/errors.hpp"
#include "hcmgan/eval.hpp"
#include "hcmgan/hctree.hpp"

namespace hcmgan::cli {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_color_mt("hcmgan");
    l->set_pattern("[%H:%M:%S] %^%l%$ %v");
    const char* env = std::getenv("HCMGAN_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
    return l;
  }();
  return log;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

void write_losses(const fs::path& p, const std::vector<split::LossRecord>& losses) {
  std::string s = "step,loss_d,loss_g,loss_c\n";
  for (const auto& r : losses)
    s += std::to_string(r.step) + ',' + fmt(r.loss_d) + ',' + fmt(r.loss_g) + ',' + fmt(r.loss_c) + '\n';
  write_text(p, s);
}

// Left-child vector after each phase, one column per phase.
void write_trajectory(const fs::path& p, const tree::SplitMeta& meta) {
  std::string s = "index";
  for (std::size_t t = 0; t < meta.trajectory.size(); ++t) s += ",t" + std::to_string(t);
  s += '\n';
  const std::size_t n = meta.trajectory.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    s += std::to_string(i);
    for (const auto& v : meta.trajectory) s += ',' + fmt(v[i]);
    s += '\n';
  }
  write_text(p, s);
}

fs::path node_dir(const fs::path& out, int id) { return out / "nodes" / std::to_string(id); }

void write_node_membership(const fs::path& out, const tree::TreeNode& nd) {
  fs::create_directories(node_dir(out, nd.id));
  tree::write_membership_csv(out / tree::membership_path(nd.id), nd.membership);
}

void write_split_artifacts(const fs::path& out, const tree::ClusterTree& t, int id) {
  const auto& nd = t.node(id);
  const auto& meta = *nd.meta;
  const auto dir = node_dir(out, id);
  fs::create_directories(dir);
  write_losses(dir / "losses.csv", meta.losses.front());
  for (std::size_t k = 1; k < meta.losses.size(); ++k)
    write_losses(dir / ("losses_refine" + std::to_string(k) + ".csv"), meta.losses[k]);
  gan::write_blob(dir / "checkpoint.bin", meta.checkpoints.back());
  write_trajectory(dir / "trajectory.csv", meta);
  write_node_membership(out, t.node(nd.children->first));
  write_node_membership(out, t.node(nd.children->second));
}

std::string manifest_text(const RunConfig& rc, const tree::ClusterTree& t) {
  const auto ini = resolved_ini(rc);
  std::string s = ini;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(ini)));
  s += "\n[manifest]\nformat=1\nconfig_hash=" + std::string(hash) + "\nrun_seed=" + std::to_string(rc.split.seed) + '\n';
  if (rc.dataset.kind == "synth") s += "mixture_seed=" + std::to_string(rc.dataset.mixture.seed) + '\n';
  for (const auto& nd : t.nodes) {
    if (!nd.meta) continue;
    s += "node" + std::to_string(nd.id) + "_raw_seed=" + std::to_string(nd.meta->raw_seed) + '\n';
    for (std::size_t k = 0; k < nd.meta->refinement_seeds.size(); ++k)
      s += "node" + std::to_string(nd.id) + "_refine" + std::to_string(k + 1) +
           "_seed=" + std::to_string(nd.meta->refinement_seeds[k]) + '\n';
  }
  return s;
}

void absolutize(DatasetConfig& d) {
  for (auto* p : {&d.path, &d.images, &d.labels})
    if (!p->empty()) *p = fs::absolute(*p).lexically_normal();
}

int cmd_cluster(const fs::path& config, const std::vector<std::string>& overrides, const std::string& out_override) {
  auto rc = load_run_config(config, overrides);
  if (!out_override.empty()) rc.out_dir = out_override;
  validate(rc);
  absolutize(rc.dataset);

  const auto ds = load_dataset(rc.dataset);
  auto& net = rc.split.network;
  if (net.profile == gan::Profile::Conv) {
    net.image_h = ds.image_h;
    net.image_w = ds.image_w;
  }
  net.data_dim = ds.dim();
  net.validate();
  logger()->info("dataset {}: {} examples x {} features{}", ds.source, ds.size(), ds.dim(),
                 ds.labels ? " (labelled)" : "");

  const fs::path out = rc.out_dir;
  fs::create_directories(out / "nodes");
  auto t = tree::init_tree(ds.size());
  write_node_membership(out, t.node(0));
  tree::grow_until(t, rc.leaves, ds.x, rc.split, [&](const tree::ClusterTree& tr, int id) {
    write_split_artifacts(out, tr, id);
    const auto& nd = tr.node(id);
    logger()->info("split node {} (mass {:.2f}) -> {} ({:.2f}), {} ({:.2f})", id, nd.total_mass(),
                   nd.children->first, tr.node(nd.children->first).total_mass(), nd.children->second,
                   tr.node(nd.children->second).total_mass());
  });
  const double defect = tree::leaf_mass_defect(t);
  if (defect > 1e-8) logger()->warn("leaf masses deviate from one by {:.3g}", defect);

  write_text(out / "tree.json", tree::to_json(t).dump(2) + "\n");
  eval::render_reports(t, ds, out, rc.split.seed);
  write_text(out / "manifest.ini", manifest_text(rc, t));
  if (ds.labels) {
    const auto m = eval::compute_metrics(t, *ds.labels);
    logger()->info("acc {:.4f}  acc_macro {:.4f}  nmi {:.4f}", m.acc, m.acc_macro, m.nmi);
  }
  logger()->info("wrote {}", out.string());
  return kOk;
}

tree::ClusterTree load_tree(const fs::path& run_dir) {
  std::ifstream in(run_dir / "tree.json");
  if (!in) throw IoError("no tree.json in " + run_dir.string());
  try {
    return tree::from_json(nlohmann::json::parse(in), run_dir);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tree.json: ") + e.what());
  }
}

int cmd_eval(const fs::path& run_dir, const fs::path& labels_path, const std::string& out_path) {
  const auto t = load_tree(run_dir);
  if (!fs::is_regular_file(labels_path)) throw IoError("no such labels file: " + labels_path.string());
  const auto labels = data::load_labels(labels_path);
  if (labels.size() != t.n)
    throw ConfigError("label count mismatch: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(t.n) + " examples");
  const auto text = eval::to_json(eval::compute_metrics(t, labels)).dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text(out_path, text);
  return kOk;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const auto spec = load_mixture_spec(spec_path);
  auto ds = data::synth_mixture(spec);
  const auto labels = *ds.labels;
  ds.labels.reset();
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_csv(out, ds);
  auto labels_path = out;
  labels_path.replace_extension(".labels.csv");
  data::write_labels(labels_path, labels);
  logger()->info("wrote {} rows to {} and {}", ds.size(), out.string(), labels_path.string());
  return kOk;
}

int cmd_export_dot(const fs::path& run_dir, const std::string& out_path) {
  const auto dot = tree::to_dot(load_tree(run_dir));
  if (out_path.empty())
    std::cout << dot;
  else
    write_text(out_path, dot);
  return kOk;
}

}  // namespace

int exit_code_for(std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError& e) {
    logger()->error("config: {}", e.what());
    return kConfigError;
  } catch (const DivergenceError& e) {
    logger()->error("training diverged: {}", e.what());
    return kDivergence;
  } catch (const DegenerateNodeError& e) {
    logger()->error("cannot split: {}", e.what());
    return kDivergence;
  } catch (const IoError& e) {
    logger()->error("i/o: {}", e.what());
    return kIoError;
  } catch (const FormatError& e) {
    logger()->error("bad input: {}", e.what());
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    logger()->error("i/o: {}", e.what());
    return kIoError;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kConfigError;
  } catch (...) {
    logger()->error("unknown failure");
    return kConfigError;
  }
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Hierarchical clustering with multi-generator GANs"};
  app.require_subcommand(1);

  std::string config, out, run_dir, labels, spec, target;
  std::vector<std::string> overrides;

  auto* cluster = app.add_subcommand("cluster", "grow a cluster tree from a config (or a manifest)");
  cluster->add_option("config", config, "INI config or manifest.ini")->required();
  cluster->add_option("--set", overrides, "override, e.g. --set split.epochs=5");
  cluster->add_option("--out", out, "output directory (overrides tree.out_dir)");

  auto* ev = app.add_subcommand("eval", "score a finished run against labels");
  ev->add_option("run_dir", run_dir, "run directory")->required();
  ev->add_option("--labels", labels, "labels file (IDX or one-column CSV)")->required();
  ev->add_option("--out", out, "also write the metrics JSON here");

  auto* synth = app.add_subcommand("synth", "write a Gaussian mixture to CSV plus a labels file");
  synth->add_option("spec", spec, "INI file with a [mixture] section")->required();
  synth->add_option("out", target, "output CSV path")->required();

  auto* dot = app.add_subcommand("export-dot", "print the tree of a run as DOT");
  dot->add_option("run_dir", run_dir, "run directory")->required();
  dot->add_option("-o,--out", out, "write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*cluster) return cmd_cluster(config, overrides, out);
    if (*ev) return cmd_eval(run_dir, labels, out);
    if (*synth) return cmd_synth(spec, target);
    if (*dot) return cmd_export_dot(run_dir, out);
  } catch (...) {
    return exit_code_for(std::current_exception());
  }
  return kConfigError;
}

}  // namespace hcmgan::cli
