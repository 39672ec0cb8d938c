#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hcmgan/cli.hpp"
#include "hcmgan/errors.hpp"
#include "json.hpp"

using namespace hcmgan;
using namespace hcmgan::cli;
namespace fs = std::filesystem;

namespace {

const char* kTwoBlobs = R"(
[dataset]
kind = synth

[mixture]
seed = 7
means = -3,0; 3,0
stddevs = 0.5
counts = 150

[split]
epochs = 4
refinements = 1
batch_real = 50
batch_per_generator = 50

[model]
latent_dim = 16
gen_hidden = 32,32
trunk_hidden = 32,16

[tree]
leaves = 2

[run]
seed = 3
)";

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("hcmgan_cli_" + std::to_string(::getpid()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() { fs::remove_all(dir); }
};

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_args(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "hcmgan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream capture;
  auto* old = std::cout.rdbuf(capture.rdbuf());
  const int code = run(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  if (out) *out = capture.str();
  return code;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(kTwoBlobs);
  auto rc = parse_run_config(in, {"split.epochs=9", "split.lambda=0.5"});
  CHECK(rc.split.epochs == 9);
  CHECK(rc.split.lambda == 0.5);
  CHECK(rc.split.lr_gen == 2e-4);
  CHECK(rc.split.lr_disc == 1e-4);
  CHECK(rc.split.lr_cls == 2e-5);
  CHECK(rc.split.seed == 3);
  CHECK(rc.dataset.mixture.modes.size() == 2);
  CHECK(rc.dataset.mixture.modes[1].mean == std::vector<double>{3, 0});
  CHECK(rc.dataset.mixture.modes[0].stddev == std::vector<double>{0.5, 0.5});
  CHECK(rc.split.network.gen_hidden == std::vector<std::size_t>{32, 32});
  CHECK_NOTHROW(validate(rc));

  // The resolved form parses back to the same resolved form.
  std::istringstream again(resolved_ini(rc));
  CHECK(resolved_ini(parse_run_config(again)) == resolved_ini(rc));

  std::istringstream bad_key("[split]\nepoch = 3\n");
  CHECK_THROWS_AS(parse_run_config(bad_key), ConfigError);
  std::istringstream in2(kTwoBlobs);
  CHECK_THROWS_AS(parse_run_config(in2, {"split.nope=1"}), ConfigError);
  std::istringstream bad_num("[split]\nepochs = many\n[mixture]\nmeans=0,0\n");
  CHECK_THROWS_AS(parse_run_config(bad_num), ConfigError);

  std::istringstream circle("[mixture]\nlayout = circle\nk = 4\nradius = 2\nstddevs = 0.3\ncounts = 10\n");
  CHECK(parse_run_config(circle).dataset.mixture.modes.size() == 4);

  std::istringstream in3(kTwoBlobs);
  auto rc3 = parse_run_config(in3, {"tree.leaves=1"});
  CHECK_THROWS_AS(validate(rc3), ConfigError);
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("cluster, replay, eval and export-dot") {
  Scratch s;
  const auto cfg = write(s.dir / "two.ini", kTwoBlobs);
  const auto a = s.dir / "a", b = s.dir / "b", c = s.dir / "c";
  REQUIRE(run_args({"cluster", cfg.string(), "--out", a.string()}) == kOk);

  const auto tree = nlohmann::json::parse(slurp(a / "tree.json"));
  CHECK(tree["nodes"].size() == 3);
  for (const char* f : {"manifest.ini", "tree.dot", "metrics.json", "nodes/0/membership.csv", "nodes/0/losses.csv",
                        "nodes/0/checkpoint.bin", "nodes/1/grid.pgm", "nodes/2/class_mass.json"})
    CHECK_MESSAGE(fs::exists(a / f), f);

  SUBCASE("same seed gives byte-identical artifacts") {
    REQUIRE(run_args({"cluster", cfg.string(), "--out", b.string()}) == kOk);
    for (int id = 0; id < 3; ++id) {
      const auto f = "nodes/" + std::to_string(id) + "/membership.csv";
      CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "tree.json") == slurp(b / "tree.json"));
  }
  SUBCASE("manifest replays the run") {
    REQUIRE(run_args({"cluster", (a / "manifest.ini").string(), "--out", c.string()}) == kOk);
    CHECK(slurp(a / "nodes/1/membership.csv") == slurp(c / "nodes/1/membership.csv"));
    CHECK(slurp(a / "tree.json") == slurp(c / "tree.json"));
  }
  SUBCASE("another seed differs") {
    REQUIRE(run_args({"cluster", cfg.string(), "--out", b.string(), "--set", "run.seed=4"}) == kOk);
    CHECK(slurp(a / "nodes/1/membership.csv") != slurp(b / "nodes/1/membership.csv"));
  }
  SUBCASE("eval recomputes the stored metrics") {
    const auto spec = write(s.dir / "mix.ini", kTwoBlobs);
    REQUIRE(run_args({"synth", spec.string(), (s.dir / "d.csv").string()}) == kOk);
    std::string out;
    REQUIRE(run_args({"eval", a.string(), "--labels", (s.dir / "d.labels.csv").string()}, &out) == kOk);
    const auto printed = nlohmann::json::parse(out);
    const auto stored = nlohmann::json::parse(slurp(a / "metrics.json"));
    CHECK(printed == stored);
    CHECK(printed["acc"].get<double>() == 1.0);

    write(s.dir / "short.csv", "label\n0\n1\n");
    CHECK(run_args({"eval", a.string(), "--labels", (s.dir / "short.csv").string()}) == kConfigError);
    CHECK(run_args({"eval", (s.dir / "nowhere").string(), "--labels", (s.dir / "short.csv").string()}) == kIoError);
  }
  SUBCASE("export-dot") {
    std::string out;
    REQUIRE(run_args({"export-dot", a.string()}, &out) == kOk);
    CHECK(out.find("n0 -> n1") != std::string::npos);
  }
}

TEST_CASE("cluster validates before writing") {
  Scratch s;
  const auto cfg = write(s.dir / "csv.ini", "[dataset]\nkind = csv\npath = " + (s.dir / "missing.csv").string() +
                                                "\n[tree]\nout_dir = " + (s.dir / "out").string() + "\n");
  CHECK(run_args({"cluster", cfg.string()}) == kConfigError);
  CHECK_FALSE(fs::exists(s.dir / "out"));
  CHECK(run_args({"cluster", (s.dir / "absent.ini").string()}) == kConfigError);
  CHECK(run_args({"bogus"}) == kConfigError);
}

TEST_CASE("cluster on a csv dataset with labels") {
  Scratch s;
  const auto spec = write(s.dir / "mix.ini", kTwoBlobs);
  REQUIRE(run_args({"synth", spec.string(), (s.dir / "d.csv").string()}) == kOk);
  const auto cfg = write(s.dir / "csv.ini", "[dataset]\nkind = csv\npath = " + (s.dir / "d.csv").string() +
                                                "\nlabels = " + (s.dir / "d.labels.csv").string() +
                                                "\n[split]\nepochs = 2\n[model]\nlatent_dim = 8\ngen_hidden = 16\n"
                                                "trunk_hidden = 16,8\n[tree]\nleaves = 3\n");
  REQUIRE(run_args({"cluster", cfg.string(), "--out", (s.dir / "run").string()}) == kOk);
  const auto m = nlohmann::json::parse(slurp(s.dir / "run/metrics.json"));
  CHECK(m["c_leaves"] == 3);
  CHECK(m["n"] == 300);
}

TEST_CASE("synth") {
  Scratch s;
  const auto spec = write(s.dir / "m.ini", "[mixture]\nseed = 2\nmeans = 0,0; 4,4\nstddevs = 0.3\ncounts = 100\n");
  REQUIRE(run_args({"synth", spec.string(), (s.dir / "x.csv").string()}) == kOk);
  REQUIRE(run_args({"synth", spec.string(), (s.dir / "y.csv").string()}) == kOk);
  const auto ds = data::load_csv(s.dir / "x.csv", {.rescale = false});
  CHECK(ds.size() == 200);
  const auto labels = data::load_labels(s.dir / "x.labels.csv");
  CHECK(std::set<int>(labels.begin(), labels.end()).size() == 2);
  CHECK(slurp(s.dir / "x.csv") == slurp(s.dir / "y.csv"));
  write(s.dir / "bad.ini", "[mixture]\nmeans = 0,0\nstddevs = -1\n");
  CHECK(run_args({"synth", (s.dir / "bad.ini").string(), (s.dir / "z.csv").string()}) == kConfigError);
}

TEST_CASE("exit codes") {
  auto code = [](auto ex) { return exit_code_for(std::make_exception_ptr(ex)); };
  CHECK(code(DivergenceError("nan")) == kDivergence);
  CHECK(code(DegenerateNodeError("empty")) == kDivergence);
  CHECK(code(ConfigError("bad")) == kConfigError);
  CHECK(code(IoError("disk")) == kIoError);
  CHECK(code(FormatError("magic")) == kIoError);
}
