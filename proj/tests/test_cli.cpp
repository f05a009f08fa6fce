#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(GCVT_BIN) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

fs::path temp_dir() {
  fs::path d = fs::temp_directory_path() / "gcv_cli_test";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("cli happy paths exit 0") {
  fs::path dir = temp_dir();
  fs::path model = dir / "model.json";
  CHECK(run("gen --model tiny-gcn --seed 2 --out " + model.string()) == 0);
  CHECK(fs::exists(model));

  fs::path out = dir / "compiled";
  CHECK(run("compile --model " + model.string() + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "program.gcvi"));
  CHECK(fs::exists(out / "image.bin"));
  CHECK(fs::exists(out / "layout.json"));

  CHECK(run("simulate --model tiny-gcn --seed 2 --format csv") == 0);
  CHECK(run("verify --model " + model.string()) == 0);
  CHECK(run("verify --model tiny-stgcn --seed 3 --no-fuse") == 0);
  fs::remove_all(dir);
}

TEST_CASE("cli usage and io errors exit 2") {
  CHECK(run("") == 2);                                  // missing subcommand
  CHECK(run("compile") == 2);                           // missing --model/--out
  CHECK(run("frobnicate --model tiny-gcn") == 2);       // unknown subcommand
  CHECK(run("simulate --model /nonexistent/model.json") == 2);
  CHECK(run("gen --model resnet50 --out /tmp/x.json") == 2);
  CHECK(run("simulate --model tiny-gcn --format yaml") == 2);
}

TEST_CASE("cli compile failures exit 1") {
  fs::path dir = temp_dir();
  fs::path bad = dir / "bad.json";
  std::ofstream f(bad);
  f << R"({"input": {"shape": [3, 4, 4]},
           "layers": [
             {"id": "c1", "kind": "Conv", "inputs": ["@input"],
              "params": {"c_in": 3, "c_out": 8, "k1": 1, "k2": 1}},
             {"id": "fc", "kind": "Linear", "inputs": ["c1"],
              "params": {"f_in": 7, "f_out": 2}}]})";
  f.close();
  CHECK(run("compile --model " + bad.string() + " --out " +
            (dir / "out").string()) == 1);

  std::ofstream g(bad, std::ios::trunc);
  g << "{ not json";
  g.close();
  CHECK(run("compile --model " + bad.string() + " --out " +
            (dir / "out").string()) == 1);
  fs::remove_all(dir);
}
