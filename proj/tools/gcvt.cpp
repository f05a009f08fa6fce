#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gcvt/isa.hpp"
#include "gcvt/lowering.hpp"
#include "gcvt/modelgen.hpp"
#include "gcvt/oracle.hpp"
#include "gcvt/planner.hpp"
#include "gcvt/simulator.hpp"

namespace fs = std::filesystem;
using namespace gcv;

namespace {

// I/O problems exit with 2; compile / verification failures with 1.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string model;
  std::string arch;
  std::string out;
  uint64_t seed = 1;
  int64_t tol_ulps = 2;
  bool no_fuse = false;
  std::string format = "table";
};

void add_common(CLI::App* cmd, Options& o, bool needs_out) {
  cmd->add_option("--model", o.model, "Built-in model name or model JSON path")
      ->required();
  cmd->add_option("--arch", o.arch, "Architecture configuration JSON path");
  auto* out = cmd->add_option("--out", o.out, "Output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", o.seed, "Seed for built-in model generation");
}

ComputationGraph load_model(const Options& o) {
  if (is_builtin_model(o.model)) return generate_model(o.model, o.seed);
  if (!fs::exists(o.model)) throw io_error("model not found: " + o.model);
  return parse_model_file(o.model);
}

ArchConfig load_arch(const Options& o) {
  if (o.arch.empty()) return ArchConfig{};
  if (!fs::exists(o.arch)) throw io_error("arch config not found: " + o.arch);
  return arch_from_file(o.arch);
}

Tensor model_input(const ComputationGraph& g, uint64_t seed) {
  if (!g.input_tensor.empty()) {
    auto it = g.tensors.find(g.input_tensor);
    if (it != g.tensors.end()) return it->second;
  }
  return seeded_tensor(seed, g.input_shape.dims);
}

struct Compiled {
  ComputationGraph model;   // as loaded, before DM insertion / fusion
  TiledProgram tp;
  CompiledProgram cp;
  Tensor input;
};

Compiled compile_model(const Options& o) {
  Compiled c;
  c.model = load_model(o);
  c.input = model_input(c.model, o.seed);
  ComputationGraph g = insert_dm_layers(c.model);
  if (!o.no_fuse) g = fuse_layers(g);
  MatrixProgram prog = lower_graph(g);
  c.tp = plan(prog, load_arch(o));
  c.cp = emit(c.tp, &c.input);
  return c;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw io_error("cannot write " + p.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_artifacts(const Compiled& c, const std::string& out) {
  fs::create_directories(out);
  fs::path dir(out);
  write_program_file((dir / "program.gcvi").string(), c.cp.instructions);
  std::ofstream img(dir / "image.bin", std::ios::binary);
  img.write(reinterpret_cast<const char*>(c.cp.image.data()),
            static_cast<std::streamsize>(c.cp.image.size()));
  write_text(dir / "layout.json", c.cp.layout_json);
  write_text(dir / "plan.txt", dump_plan(c.tp));
  write_text(dir / "instructions.txt", dump_instructions(c.cp.instructions));
}

std::vector<std::string> layer_names(const TiledProgram& tp) {
  std::vector<std::string> names;
  for (const auto& l : tp.layers) names.push_back(l.layer_id);
  return names;
}

// Resolves the report's offset-keyed output regions back to sink names.
std::map<std::string, Tensor> named_outputs(const CompiledProgram& cp,
                                            const SimReport& rep) {
  nlohmann::json layout = nlohmann::json::parse(cp.layout_json);
  std::map<int, uint32_t> value_off;
  for (const auto& v : layout.at("values"))
    value_off[v.at("id").get<int>()] = v.at("offset").get<uint32_t>();
  std::map<std::string, Tensor> named;
  for (const auto& out : layout.at("outputs")) {
    uint32_t off = value_off.at(out.at("value").get<int>());
    auto it = rep.outputs.find(off);
    if (it != rep.outputs.end()) named[out.at("name").get<std::string>()] = it->second;
  }
  return named;
}

int cmd_compile(const Options& o) {
  Compiled c = compile_model(o);
  write_artifacts(c, o.out);
  std::cout << "compiled " << o.model << ": " << c.cp.instructions.size()
            << " instructions, image " << c.cp.image.size() << " bytes -> " << o.out
            << "\n";
  return 0;
}

int cmd_simulate(const Options& o) {
  Compiled c = compile_model(o);
  SimReport rep = simulate(c.cp.instructions, c.cp.image, c.tp.arch, layer_names(c.tp));
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    fs::path dir(o.out);
    write_text(dir / "report.json", rep.to_json());
    write_text(dir / "report.csv", rep.to_csv());
    write_text(dir / "report.txt", rep.to_table());
  }
  if (o.format == "json") std::cout << rep.to_json();
  else if (o.format == "csv") std::cout << rep.to_csv();
  else std::cout << rep.to_table();
  return 0;
}

int cmd_verify(const Options& o) {
  Compiled c = compile_model(o);
  SimReport rep = simulate(c.cp.instructions, c.cp.image, c.tp.arch, layer_names(c.tp));
  RefResult ref = run_reference(c.model, c.input);
  ComparisonReport cmp = compare(named_outputs(c.cp, rep), ref, o.tol_ulps);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text(fs::path(o.out) / "verify.json", cmp.to_json());
  }
  for (const auto& po : cmp.outputs)
    std::cout << (po.pass ? "pass " : "FAIL ") << po.id << ": max "
              << po.max_ulp << " ulp, max abs err " << po.max_abs_error << "\n";
  std::cout << (cmp.pass ? "PASS" : "FAIL") << " (tolerance " << o.tol_ulps
            << " ulp)\n";
  return cmp.pass ? 0 : 1;
}

int cmd_gen(const Options& o) {
  if (!is_builtin_model(o.model)) throw io_error("unknown model " + o.model);
  ComputationGraph g = generate_model(o.model, o.seed);
  std::string text = serialize_model(g);
  fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, text);
  std::cout << "wrote " << o.model << " (seed " << o.seed << ") to " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compiler and cycle-level simulator for a GNN/CNN accelerator"};
  app.require_subcommand(1);

  Options o;
  auto* compile = app.add_subcommand("compile", "Compile a model to an instruction stream");
  add_common(compile, o, true);
  compile->add_flag("--no-fuse", o.no_fuse, "Disable layer fusion");

  auto* simulate = app.add_subcommand("simulate", "Compile and run the cycle-level simulator");
  add_common(simulate, o, false);
  simulate->add_flag("--no-fuse", o.no_fuse, "Disable layer fusion");
  simulate->add_option("--format", o.format, "Report format: table, json or csv")
      ->check(CLI::IsMember({"table", "json", "csv"}));

  auto* verify = app.add_subcommand("verify", "Simulate and compare against the reference model");
  add_common(verify, o, false);
  verify->add_flag("--no-fuse", o.no_fuse, "Disable layer fusion");
  verify->add_option("--tol-ulps", o.tol_ulps, "Verification tolerance in binary16 ULPs");

  auto* gen = app.add_subcommand("gen", "Write a built-in model as a model JSON file");
  gen->add_option("--model", o.model, "Built-in model name")->required();
  gen->add_option("--out", o.out, "Output model JSON path")->required();
  gen->add_option("--seed", o.seed, "Generation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (compile->parsed()) return cmd_compile(o);
    if (simulate->parsed()) return cmd_simulate(o);
    if (verify->parsed()) return cmd_verify(o);
    return cmd_gen(o);
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
