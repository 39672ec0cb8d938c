#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "hcmgan/cli.hpp"
#include "hcmgan/errors.hpp"

namespace hcmgan::cli {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string> kKnownKeys{
    "dataset.kind",        "dataset.path",          "dataset.label_column", "dataset.images",
    "dataset.labels",      "mixture.k",             "mixture.dim",          "mixture.seed",
    "mixture.layout",      "mixture.radius",        "mixture.means",        "mixture.stddevs",
    "mixture.counts",      "split.lambda",          "split.refinements",    "split.epochs",
    "split.batch_real",    "split.batch_per_generator", "split.lr_gen",     "split.lr_disc",
    "split.lr_cls",        "split.beta1",           "split.beta2",          "split.leaky_slope",
    "split.noise_variance", "tree.leaves",          "tree.out_dir",         "model.profile",
    "model.latent_dim",    "model.gen_hidden",      "model.trunk_hidden",   "run.seed"};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream is(s);
  while (std::getline(is, part, sep)) out.push_back(trim(part));
  return out;
}

template <class T>
T number(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError(key + ": cannot parse '" + t + "' as a number");
  return v;
}

bool boolean(const std::string& key, const std::string& text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + t + "'");
}

std::vector<double> doubles(const std::string& key, const std::string& text, char sep = ',') {
  std::vector<double> out;
  for (const auto& p : split_on(text, sep)) out.push_back(number<double>(key, p));
  return out;
}

std::vector<std::size_t> sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& p : split_on(text, ',')) out.push_back(number<std::size_t>(key, p));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string join(const std::vector<T>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_same_v<T, std::string>)
      out += v[i];
    else if constexpr (std::is_floating_point_v<T>)
      out += fmt(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

void apply_override(pt::ptree& tree, const std::string& ov) {
  const auto eq = ov.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + ov + "' is not section.key=value");
  const auto key = trim(ov.substr(0, eq));
  if (!kKnownKeys.count(key)) throw ConfigError("override names unknown key '" + key + "'");
  tree.put(pt::ptree::path_type(key, '.'), trim(ov.substr(eq + 1)));
}

// Builds the mixture; layout=circle expands to explicit per-mode entries.
data::MixtureSpec mixture_from(const pt::ptree& t) {
  data::MixtureSpec m;
  m.seed = number<std::uint64_t>("mixture.seed", t.get<std::string>("mixture.seed", "0"));
  const auto layout = trim(t.get<std::string>("mixture.layout", "explicit"));
  if (layout == "circle") {
    const auto k = number<std::size_t>("mixture.k", t.get<std::string>("mixture.k", "2"));
    const double radius = number<double>("mixture.radius", t.get<std::string>("mixture.radius", "3"));
    const double sd = number<double>("mixture.stddevs", t.get<std::string>("mixture.stddevs", "0.5"));
    const auto count = number<std::size_t>("mixture.counts", t.get<std::string>("mixture.counts", "500"));
    return data::circle_mixture(k, radius, sd, count, m.seed);
  }
  if (layout != "explicit") throw ConfigError("mixture.layout must be 'explicit' or 'circle'");
  const auto means_text = t.get_optional<std::string>("mixture.means");
  if (!means_text) throw ConfigError("mixture.means is required");
  const auto means = split_on(*means_text, ';');
  const auto sds = split_on(t.get<std::string>("mixture.stddevs", "0.5"), ';');
  const auto counts = split_on(t.get<std::string>("mixture.counts", "500"), ';');
  auto pick = [](const std::vector<std::string>& v, std::size_t i) { return v.size() == 1 ? v[0] : v.at(i); };
  if ((sds.size() != 1 && sds.size() != means.size()) || (counts.size() != 1 && counts.size() != means.size()))
    throw ConfigError("mixture: stddevs and counts need one entry, or one per mode");
  for (std::size_t i = 0; i < means.size(); ++i) {
    data::MixtureMode mode;
    mode.mean = doubles("mixture.means", means[i]);
    mode.stddev = doubles("mixture.stddevs", pick(sds, i));
    if (mode.stddev.size() == 1) mode.stddev.assign(mode.mean.size(), mode.stddev[0]);
    mode.count = number<std::size_t>("mixture.counts", pick(counts, i));
    m.modes.push_back(std::move(mode));
  }
  if (auto k = t.get_optional<std::string>("mixture.k"); k && number<std::size_t>("mixture.k", *k) != m.modes.size())
    throw ConfigError("mixture.k does not match the number of means");
  if (auto d = t.get_optional<std::string>("mixture.dim"))
    for (const auto& mode : m.modes)
      if (mode.mean.size() != number<std::size_t>("mixture.dim", *d)) throw ConfigError("mixture.dim does not match means");
  return m;
}

RunConfig from_tree(const pt::ptree& t) {
  for (const auto& [section, body] : t) {
    if (section == "manifest") continue;
    if (body.empty()) throw ConfigError("top-level key '" + section + "' outside any section");
    for (const auto& [key, _] : body)
      if (!kKnownKeys.count(section + "." + key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
  auto get = [&t](const std::string& key, const std::string& def) { return t.get<std::string>(key, def); };

  RunConfig rc;
  auto& d = rc.dataset;
  d.kind = trim(get("dataset.kind", "synth"));
  d.path = trim(get("dataset.path", ""));
  d.label_column = boolean("dataset.label_column", get("dataset.label_column", "false"));
  d.images = trim(get("dataset.images", ""));
  d.labels = trim(get("dataset.labels", ""));
  if (d.kind == "synth") d.mixture = mixture_from(t);

  auto& s = rc.split;
  s.lambda = number<double>("split.lambda", get("split.lambda", fmt(s.lambda)));
  s.refinements = number<int>("split.refinements", get("split.refinements", std::to_string(s.refinements)));
  s.epochs = number<int>("split.epochs", get("split.epochs", std::to_string(s.epochs)));
  s.batch_real = number<std::size_t>("split.batch_real", get("split.batch_real", std::to_string(s.batch_real)));
  s.batch_per_generator = number<std::size_t>(
      "split.batch_per_generator", get("split.batch_per_generator", std::to_string(s.batch_per_generator)));
  s.lr_gen = number<double>("split.lr_gen", get("split.lr_gen", fmt(s.lr_gen)));
  s.lr_disc = number<double>("split.lr_disc", get("split.lr_disc", fmt(s.lr_disc)));
  s.lr_cls = number<double>("split.lr_cls", get("split.lr_cls", fmt(s.lr_cls)));
  s.beta1 = number<double>("split.beta1", get("split.beta1", fmt(s.beta1)));
  s.beta2 = number<double>("split.beta2", get("split.beta2", fmt(s.beta2)));
  s.leaky_slope = number<double>("split.leaky_slope", get("split.leaky_slope", fmt(s.leaky_slope)));
  s.noise_variance = number<double>("split.noise_variance", get("split.noise_variance", fmt(s.noise_variance)));
  s.seed = number<std::uint64_t>("run.seed", get("run.seed", "0"));

  auto& n = s.network;
  n.profile = gan::parse_profile(trim(get("model.profile", "mlp")));
  n.latent_dim = number<std::size_t>("model.latent_dim", get("model.latent_dim", std::to_string(n.latent_dim)));
  n.gen_hidden = sizes("model.gen_hidden", get("model.gen_hidden", join(n.gen_hidden, ",")));
  n.trunk_hidden = sizes("model.trunk_hidden", get("model.trunk_hidden", join(n.trunk_hidden, ",")));

  rc.leaves = number<std::size_t>("tree.leaves", get("tree.leaves", "2"));
  rc.out_dir = trim(get("tree.out_dir", "out"));
  return rc;
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& ov : overrides) apply_override(tree, ov);
  return from_tree(tree);
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_run_config(in, overrides);
}

data::MixtureSpec load_mixture_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read mixture spec " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("mixture spec: ") + e.what());
  }
  auto m = mixture_from(tree);
  m.validate();
  return m;
}

void validate(const RunConfig& rc) {
  const auto& d = rc.dataset;
  auto need_file = [](const std::filesystem::path& p, const std::string& key) {
    if (p.empty()) throw ConfigError(key + " is required");
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(key + ": no such file '" + p.string() + "'");
  };
  if (d.kind == "synth") {
    d.mixture.validate();
  } else if (d.kind == "csv") {
    need_file(d.path, "dataset.path");
    if (!d.labels.empty()) need_file(d.labels, "dataset.labels");
  } else if (d.kind == "idx") {
    need_file(d.images, "dataset.images");
    if (!d.labels.empty()) need_file(d.labels, "dataset.labels");
  } else {
    throw ConfigError("dataset.kind must be synth, csv or idx, got '" + d.kind + "'");
  }
  rc.split.validate();
  if (rc.split.network.latent_dim == 0) throw ConfigError("model.latent_dim must be >= 1");
  if (rc.split.network.profile == gan::Profile::Conv && d.kind != "idx")
    throw ConfigError("the conv profile needs image data (dataset.kind = idx)");
  if (rc.leaves < 2) throw ConfigError("tree.leaves must be >= 2");
  if (rc.out_dir.empty()) throw ConfigError("tree.out_dir must not be empty");
}

std::string resolved_ini(const RunConfig& rc) {
  std::ostringstream os;
  const auto& d = rc.dataset;
  os << "[dataset]\nkind=" << d.kind << '\n';
  if (d.kind == "csv") os << "path=" << d.path.string() << "\nlabel_column=" << (d.label_column ? "true" : "false") << '\n';
  if (d.kind == "idx") os << "images=" << d.images.string() << '\n';
  if (!d.labels.empty()) os << "labels=" << d.labels.string() << '\n';
  if (d.kind == "synth") {
    std::vector<std::string> means, sds, counts;
    for (const auto& m : d.mixture.modes) {
      means.push_back(join(m.mean, ","));
      sds.push_back(join(m.stddev, ","));
      counts.push_back(std::to_string(m.count));
    }
    os << "\n[mixture]\nk=" << d.mixture.modes.size() << "\nseed=" << d.mixture.seed << "\nmeans=" << join(means, "; ")
       << "\nstddevs=" << join(sds, "; ") << "\ncounts=" << join(counts, "; ") << '\n';
  }
  const auto& s = rc.split;
  os << "\n[split]\nlambda=" << fmt(s.lambda) << "\nrefinements=" << s.refinements << "\nepochs=" << s.epochs
     << "\nbatch_real=" << s.batch_real << "\nbatch_per_generator=" << s.batch_per_generator
     << "\nlr_gen=" << fmt(s.lr_gen) << "\nlr_disc=" << fmt(s.lr_disc) << "\nlr_cls=" << fmt(s.lr_cls)
     << "\nbeta1=" << fmt(s.beta1) << "\nbeta2=" << fmt(s.beta2) << "\nleaky_slope=" << fmt(s.leaky_slope)
     << "\nnoise_variance=" << fmt(s.noise_variance) << '\n';
  os << "\n[model]\nprofile=" << gan::profile_name(s.network.profile) << "\nlatent_dim=" << s.network.latent_dim
     << "\ngen_hidden=" << join(s.network.gen_hidden, ",") << "\ntrunk_hidden=" << join(s.network.trunk_hidden, ",")
     << '\n';
  os << "\n[tree]\nleaves=" << rc.leaves << "\nout_dir=" << rc.out_dir.string() << '\n';
  os << "\n[run]\nseed=" << s.seed << '\n';
  return os.str();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

data::Dataset load_dataset(const DatasetConfig& dc) {
  data::Dataset ds;
  if (dc.kind == "synth") {
    ds = data::synth_mixture(dc.mixture);
  } else if (dc.kind == "csv") {
    ds = data::load_csv(dc.path, {.label_column = dc.label_column});
    if (!dc.labels.empty()) ds.labels = data::load_labels(dc.labels);
  } else if (dc.kind == "idx") {
    ds = data::load_idx(dc.images, dc.labels.empty() ? std::nullopt : std::optional(dc.labels));
  } else {
    throw ConfigError("unknown dataset kind '" + dc.kind + "'");
  }
  ds.validate();
  return ds;
}

}  // namespace hcmgan::cli
