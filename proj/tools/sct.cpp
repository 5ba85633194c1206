// sct: CBCT -> synthetic-CT toolkit. Subcommands cover the whole loop:
// gen-data, train, infer, eval, plus gradcheck/selftest verification.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 data or file-format
// error, 4 verification failure.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sct/adam.hpp"
#include "sct/blas.hpp"
#include "sct/checkpoint.hpp"
#include "sct/dataset.hpp"
#include "sct/fileio.hpp"
#include "sct/losses.hpp"
#include "sct/metrics.hpp"
#include "sct/meunet.hpp"
#include "sct/ops.hpp"
#include "sct/phantom.hpp"
#include "sct/rng.hpp"
#include "sct/verify.hpp"
#include "sct/volume.hpp"

namespace fs = std::filesystem;
using namespace sct;

namespace {

// ---- shared option blocks ---------------------------------------------------

struct CommonFlags {
  int threads = 1;
  std::string config;  // consumed before parsing; listed here for --help
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--threads", f.threads, "BLAS thread count")
      ->envname("SCT_THREADS")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--config", f.config,
                  "key=value file; command-line flags win");
}

// Expands `--config FILE` into option tokens. A key from the file is applied
// only when the same flag is absent from the command line; multi-value keys
// split on whitespace.
std::vector<std::string> merge_config_tokens(int argc, char** argv) {
  std::vector<std::string> tokens(argv + 1, argv + argc);

  std::string path;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == "--config") {
      if (i + 1 >= tokens.size())
        throw ConfigError("--config needs a file argument");
      path = tokens[i + 1];
      tokens.erase(tokens.begin() + i, tokens.begin() + i + 2);
      break;
    }
    if (tokens[i].rfind("--config=", 0) == 0) {
      path = tokens[i].substr(9);
      tokens.erase(tokens.begin() + i);
      break;
    }
  }
  if (path.empty()) return tokens;

  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto notspace = [](unsigned char c) { return !std::isspace(c); };
    line.erase(line.begin(),
               std::find_if(line.begin(), line.end(), notspace));
    line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(),
               line.end());
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not key=value: '" + line + "'");
    auto trim = [&](std::string s) {
      s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
      s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
      return s;
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        " has an empty key: '" + line + "'");
    std::string flag = "--" + key;
    if (key == "config")
      throw ConfigError("config files cannot nest via 'config='");

    bool on_cli = false;
    for (const auto& t : tokens)
      if (t == flag || t.rfind(flag + "=", 0) == 0) on_cli = true;
    if (on_cli) continue;

    tokens.push_back(flag);
    std::istringstream vs(value);
    std::string piece;
    while (vs >> piece) tokens.push_back(piece);
  }
  return tokens;
}

struct ModelFlags {
  std::string arch = "meunet";
  std::vector<std::size_t> channels = {64, 128, 256};
  std::size_t token_count = 1024;
  std::vector<std::size_t> vss_depths = {16, 8};
  std::vector<std::size_t> embed_dims = {128, 256};
  std::size_t state_dim = 8;
  std::size_t size = 256;

  MEUNetConfig to_config() const {
    MEUNetConfig cfg;
    cfg.variant = variant_from_string(arch);
    cfg.channels = channels;
    cfg.token_count = token_count;
    cfg.vss_depths = {vss_depths[0], vss_depths[1]};
    cfg.embed_dims = {embed_dims[0], embed_dims[1]};
    cfg.state_dim = state_dim;
    cfg.input_size = size;
    return cfg;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--arch", f.arch,
                  "meunet | meunet_v1 | meunet_v2 | meunet_fixed_patch | "
                  "unet_d2 | unet_d3 | unet_d4")
      ->capture_default_str();
  cmd->add_option("--channels", f.channels, "encoder channel widths")
      ->capture_default_str();
  cmd->add_option("--token-count", f.token_count, "tokens per skip grid (L)")
      ->capture_default_str();
  cmd->add_option("--vss-depths", f.vss_depths, "VSS blocks per skip level")
      ->expected(2)
      ->capture_default_str();
  cmd->add_option("--embed-dims", f.embed_dims, "token embed dim per skip level")
      ->expected(2)
      ->capture_default_str();
  cmd->add_option("--state-dim", f.state_dim, "SSM state size (D)")
      ->capture_default_str();
  cmd->add_option("--size", f.size, "square slice side the model runs at")
      ->capture_default_str();
}

std::string format_hu_stats(const Volume& v) {
  float lo = v.voxels[0], hi = v.voxels[0];
  for (float x : v.voxels) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "HU range [%.1f, %.1f]", lo, hi);
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::size_t pairs = 8;
  PhantomConfig phantom;
  std::uint64_t seed = 1;
};

int run_gen(const GenArgs& a) {
  fs::create_directories(a.out);
  std::string manifest;
  char line[256];
  std::snprintf(line, sizeof(line),
                "pairs=%zu\nsize=%zu\nseed=%llu\nshading=%g\nstreaks=%g\n"
                "noise=%g\ndrift=%g\n",
                a.pairs, a.phantom.size,
                static_cast<unsigned long long>(a.seed), a.phantom.shading,
                a.phantom.streaks, a.phantom.noise, a.phantom.drift);
  manifest += line;

  for (std::size_t i = 0; i < a.pairs; ++i) {
    PhantomConfig cfg = a.phantom;
    cfg.seed = derive_seed(a.seed, 0xda7a + i);
    auto pair = gen_phantom_pair(cfg);

    char idx[8];
    std::snprintf(idx, sizeof(idx), "%03zu", i);
    std::string cb = "cbct_" + std::string(idx) + ".gvol";
    std::string ct = "ct_" + std::string(idx) + ".gvol";
    std::string lb = "labels_" + std::string(idx) + ".gvol";
    gvol_write(pair.cbct, (fs::path(a.out) / cb).string());
    gvol_write(pair.ct, (fs::path(a.out) / ct).string());
    Volume labels;
    labels.dims = pair.ct.dims;
    labels.voxels.assign(pair.labels.begin(), pair.labels.end());
    gvol_write(labels, (fs::path(a.out) / lb).string());

    std::snprintf(line, sizeof(line), "pair %s %s %s %s\n", idx, cb.c_str(),
                  ct.c_str(), lb.c_str());
    manifest += line;
  }
  write_text_atomic((fs::path(a.out) / "manifest.txt").string(), manifest);
  std::printf("wrote %zu pair(s) to %s\n", a.pairs, a.out.c_str());
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, out;
  ModelFlags model;
  std::string loss = "mcl";
  std::size_t batch = 4;
  double lr = 0.02;
  std::size_t epochs = 100;
  std::size_t steps = 0;  // 0: train for --epochs instead
  std::uint64_t seed = 1;
};

int run_train(const TrainArgs& a) {
  auto ds = dataset_build(a.data, a.model.size);
  if (ds.size() == 0) throw DataError("no volume pairs in " + a.data);
  if (ds.size() < a.batch)
    throw ConfigError("batch " + std::to_string(a.batch) + " exceeds the " +
                      std::to_string(ds.size()) + " available pairs");

  auto cfg = a.model.to_config();
  Pcg32 rng(a.seed, 0);
  auto model = build_model<float>(cfg, rng);

  auto params = model.params();
  AdamStateF opt;
  opt.lr = static_cast<float>(a.lr);
  opt.init(params);

  std::size_t total_steps =
      a.steps ? a.steps : a.epochs * (ds.size() / a.batch);
  if (total_steps == 0) throw ConfigError("nothing to do: zero steps");

  std::string log;
  char line[256];
  std::snprintf(line, sizeof(line),
                "arch=%s loss=%s pairs=%zu batch=%zu lr=%g steps=%zu seed=%llu "
                "params=%zu\n",
                a.model.arch.c_str(), a.loss.c_str(), ds.size(), a.batch, a.lr,
                total_steps, static_cast<unsigned long long>(a.seed),
                model.param_count());
  log += line;
  std::fputs(line, stdout);

  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total_steps; ++epoch) {
    auto batches = epoch_batches(ds, a.batch, derive_seed(a.seed, 0xe0 + epoch));
    for (auto& b : batches) {
      if (step >= total_steps) break;
      ++step;
      for (auto& p : params) p.zero_grad();
      auto pred = model.forward(b.input);
      if (a.loss == "glob") {
        auto loss = l1_mean(pred, b.target);
        loss.backward();
        std::snprintf(line, sizeof(line), "step %zu loss %.6e\n", step,
                      static_cast<double>(loss.item()));
      } else {
        auto terms = mcl_loss(pred, b.target);
        terms.total.backward();
        std::snprintf(line, sizeof(line),
                      "step %zu loss %.6e glob %.6e soft %.6e bone %.6e\n",
                      step, static_cast<double>(terms.total.item()),
                      static_cast<double>(terms.glob.item()),
                      static_cast<double>(terms.soft.item()),
                      static_cast<double>(terms.bone.item()));
      }
      adam_step(params, opt);
      log += line;
      std::fputs(line, stdout);
    }
    if (batches.empty()) throw ConfigError("epoch produced no batches");
  }

  fs::create_directories(a.out);
  checkpoint_save(model.named_params(),
                  (fs::path(a.out) / "model.gckpt").string());
  write_text_atomic((fs::path(a.out) / "train_log.txt").string(), log);
  std::printf("saved %s\n", (fs::path(a.out) / "model.gckpt").string().c_str());
  return 0;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
  std::string ckpt, in, out;
  ModelFlags model;
};

int run_infer(const InferArgs& a) {
  auto vol = gvol_read(a.in);
  std::size_t slices = vol.dims.size() == 3 ? vol.dims[0] : 1;
  std::size_t h = vol.dims[vol.dims.size() - 2];
  std::size_t w = vol.dims[vol.dims.size() - 1];
  if (h != w || h != a.model.size)
    throw ConfigError("volume slices are " + std::to_string(h) + "x" +
                      std::to_string(w) + " but the model expects " +
                      std::to_string(a.model.size) + " square");

  auto cfg = a.model.to_config();
  Pcg32 rng(0, 0);
  auto model = build_model<float>(cfg, rng);
  checkpoint_load(a.ckpt, model.named_params());

  Volume out;
  out.dims = vol.dims;
  out.spacing = vol.spacing;
  out.voxels.resize(vol.voxels.size());
  const std::size_t plane = h * w;
  for (std::size_t s = 0; s < slices; ++s) {
    std::vector<float> in(plane);
    for (std::size_t i = 0; i < plane; ++i)
      in[i] = static_cast<float>(hu_to_norm(vol.voxels[s * plane + i]));
    auto x = TensorF::from_data({1, 1, h, w}, std::move(in), false);
    auto y = model.forward(x);
    const auto& yd = y.data();
    for (std::size_t i = 0; i < plane; ++i)
      out.voxels[s * plane + i] =
          static_cast<float>(norm_to_hu(static_cast<double>(yd[i])));
  }
  gvol_write(out, a.out);
  std::printf("wrote %s (%zu slice(s), %s)\n", a.out.c_str(), slices,
              format_hu_stats(out).c_str());
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pred, ref, report, metrics;
  std::string label = "pred";
};

int run_eval(const EvalArgs& a) {
  auto pv = gvol_read(a.pred);
  auto rv = gvol_read(a.ref);
  if (pv.dims != rv.dims)
    throw DataError("prediction and reference dims differ");
  std::size_t slices = pv.dims.size() == 3 ? pv.dims[0] : 1;
  std::size_t h = pv.dims[pv.dims.size() - 2];
  std::size_t w = pv.dims[pv.dims.size() - 1];

  std::vector<double> p(pv.voxels.begin(), pv.voxels.end());
  std::vector<double> r(rv.voxels.begin(), rv.voxels.end());
  auto rep = evaluate_pair(p, r, slices, h, w);

  auto table = format_metrics_table({{a.label, rep}});
  std::fputs(table.c_str(), stdout);
  if (!a.report.empty()) write_text_atomic(a.report, table);

  if (!a.metrics.empty()) {
    std::string kv;
    char line[96];
    auto region = [&](const char* name, const RegionScore& s) {
      std::snprintf(line, sizeof(line), "%s.ssim=%.6f\n", name, s.ssim);
      kv += line;
      if (std::isfinite(s.psnr))
        std::snprintf(line, sizeof(line), "%s.psnr=%.4f\n", name, s.psnr);
      else
        std::snprintf(line, sizeof(line), "%s.psnr=inf\n", name);
      kv += line;
      std::snprintf(line, sizeof(line), "%s.voxels=%zu\n", name, s.voxels);
      kv += line;
    };
    region("full", rep.full);
    region("soft", rep.soft);
    region("bone", rep.bone);
    std::snprintf(line, sizeof(line), "mae_hu=%.4f\nslices=%zu\n", rep.mae_hu,
                  rep.slices);
    kv += line;
    write_text_atomic(a.metrics, kv);
  }
  return 0;
}

// ---- gradcheck / selftest -----------------------------------------------------

int report_and_code(const std::vector<verify::CheckResult>& rs) {
  std::fputs(verify::format_results(rs).c_str(), stdout);
  std::size_t failed = 0;
  for (const auto& r : rs) failed += !r.pass;
  if (failed) {
    std::printf("%zu of %zu checks FAILED\n", failed, rs.size());
    return 4;
  }
  std::printf("all %zu checks passed\n", rs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "CBCT -> synthetic-CT toolkit (exit codes: 0 ok, 2 config, 3 data, "
      "4 verification)"};
  app.require_subcommand(1);

  CommonFlags common;

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate phantom slice pairs");
  add_common(cmd_gen, common);
  cmd_gen->add_option("--out", gen.out, "output directory")->required();
  cmd_gen->add_option("--pairs", gen.pairs, "number of pairs")
      ->capture_default_str();
  cmd_gen->add_option("--size", gen.phantom.size, "slice side")
      ->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  cmd_gen->add_option("--shading", gen.phantom.shading, "shading amplitude")
      ->capture_default_str();
  cmd_gen->add_option("--streaks", gen.phantom.streaks, "streak amplitude, HU")
      ->capture_default_str();
  cmd_gen->add_option("--noise", gen.phantom.noise, "noise sigma, HU")
      ->capture_default_str();
  cmd_gen->add_option("--drift", gen.phantom.drift, "intensity drift fraction")
      ->capture_default_str();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train a translation model");
  add_common(cmd_train, common);
  cmd_train->add_option("--data", tr.data, "directory of paired volumes")
      ->required();
  cmd_train->add_option("--out", tr.out, "output directory")->required();
  add_model_flags(cmd_train, tr.model);
  cmd_train->add_option("--loss", tr.loss, "training loss")
      ->check(CLI::IsMember({"glob", "mcl"}))
      ->capture_default_str();
  cmd_train->add_option("--batch", tr.batch, "batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_train->add_option("--lr", tr.lr, "Adam learning rate")
      ->capture_default_str();
  cmd_train->add_option("--epochs", tr.epochs, "epochs (when --steps is 0)")
      ->capture_default_str();
  cmd_train->add_option("--steps", tr.steps, "total optimizer steps (overrides --epochs)")
      ->capture_default_str();
  cmd_train->add_option("--seed", tr.seed, "master seed")->capture_default_str();

  InferArgs inf;
  auto* cmd_infer = app.add_subcommand("infer", "translate a CBCT volume");
  add_common(cmd_infer, common);
  cmd_infer->add_option("--ckpt", inf.ckpt, "model checkpoint")->required();
  cmd_infer->add_option("--in", inf.in, "input CBCT volume (.gvol)")->required();
  cmd_infer->add_option("--out", inf.out, "output volume (.gvol)")->required();
  add_model_flags(cmd_infer, inf.model);

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "score a prediction against a reference");
  add_common(cmd_eval, common);
  cmd_eval->add_option("--pred", ev.pred, "predicted volume")->required();
  cmd_eval->add_option("--ref", ev.ref, "reference volume")->required();
  cmd_eval->add_option("--report", ev.report, "write the text table here");
  cmd_eval->add_option("--metrics", ev.metrics, "write key=value metrics here");
  cmd_eval->add_option("--label", ev.label, "row label in the table")
      ->capture_default_str();

  struct {
    std::string op;
    std::size_t trials = 20;
    std::uint64_t seed = 1;
    bool list = false;
  } gc;
  auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(cmd_gc, common);
  cmd_gc->add_option("--op", gc.op, "check one op (default: all)");
  cmd_gc->add_option("--trials", gc.trials, "random trials per op")
      ->capture_default_str();
  cmd_gc->add_option("--seed", gc.seed, "master seed")->capture_default_str();
  cmd_gc->add_flag("--list", gc.list, "print op names and exit");

  struct {
    std::uint64_t seed = 1;
  } st;
  auto* cmd_st = app.add_subcommand("selftest", "full verification suite");
  add_common(cmd_st, common);
  cmd_st->add_option("--seed", st.seed, "master seed")->capture_default_str();

  try {
    auto tokens = merge_config_tokens(argc, argv);
    std::reverse(tokens.begin(), tokens.end());  // CLI11 consumes back-to-front
    app.parse(tokens);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  try {
    blas::set_threads(common.threads);
    if (app.got_subcommand(cmd_gen)) return run_gen(gen);
    if (app.got_subcommand(cmd_train)) return run_train(tr);
    if (app.got_subcommand(cmd_infer)) return run_infer(inf);
    if (app.got_subcommand(cmd_eval)) return run_eval(ev);
    if (app.got_subcommand(cmd_gc)) {
      if (gc.list) {
        for (const auto& n : verify::gradcheck_names()) std::puts(n.c_str());
        return 0;
      }
      if (!gc.op.empty())
        return report_and_code({verify::gradcheck_op(gc.op, gc.trials, gc.seed)});
      auto rs = verify::gradcheck_all(gc.trials, gc.seed);
      rs.push_back(verify::fault_injection_check(gc.seed));
      return report_and_code(rs);
    }
    if (app.got_subcommand(cmd_st))
      return report_and_code(verify::selftest(st.seed));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());  // what() carries the offset
    return 3;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const EvalError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
