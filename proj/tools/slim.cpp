#include <chrono>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "slim/error.hpp"
#include "slim/pipeline/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kMissing = 3, kNumeric = 4, kOther = 5 };

struct Options {
  std::string config;
  std::string work_dir;
  std::optional<std::uint64_t> seed;
  std::string backend;
  bool force = false;
  bool quiet = false;
};

slim::pipeline::PipelineConfig resolve(const Options& o) {
  using slim::pipeline::parse_config;
  nlohmann::json j = o.config.empty() ? nlohmann::json::object() : slim::pipeline::to_json(slim::pipeline::load_config(o.config));
  if (!o.backend.empty()) j["backend"] = o.backend;
  if (o.seed) j["seed"] = *o.seed;
  if (!o.work_dir.empty()) j["work_dir"] = o.work_dir;
  return parse_config(j);
}

int run(const Options& o, const std::string& stage_name) {
  const auto cfg = resolve(o);
  const slim::pipeline::Log log = [&](const std::string& line) {
    if (!o.quiet) std::cout << line << '\n' << std::flush;
  };
  const auto t0 = std::chrono::steady_clock::now();
  if (stage_name == "all") {
    slim::pipeline::run_all(cfg, o.force, log);
  } else {
    slim::pipeline::run_stage(cfg, *slim::pipeline::stage_from_name(stage_name), o.force, log);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.quiet) std::cout << stage_name << " finished in " << secs << " s (work dir " << cfg.work_dir.string() << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-autoencoder steering of molecular editors"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("-c,--config", o.config, "pipeline config (JSON)")->envname("SLIM_CONFIG");
  app.add_option("-w,--work-dir", o.work_dir, "artifact directory (overrides the config)")->envname("SLIM_WORK_DIR");
  app.add_option("-s,--seed", o.seed, "global seed (overrides the config)")->envname("SLIM_SEED");
  app.add_option("-b,--backend", o.backend, "synthetic | tiny-transformer (overrides the config)")
      ->envname("SLIM_BACKEND");
  app.add_flag("-f,--force", o.force, "rerun even if the stage is up to date")->envname("SLIM_FORCE");
  app.add_flag("-q,--quiet", o.quiet, "no progress output")->envname("SLIM_QUIET");

  std::string chosen;
  for (auto s : slim::pipeline::all_stages()) {
    const std::string n(slim::pipeline::name(s));
    app.add_subcommand(n, "run the " + n + " stage")->callback([&chosen, n] { chosen = n; });
  }
  app.add_subcommand("all", "run every stage in order")->callback([&chosen] { chosen = "all"; });
  app.add_subcommand("config", "print the resolved config with defaults filled in")->callback([&chosen] {
    chosen = "config";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (chosen == "config") {
      std::cout << slim::pipeline::to_json(resolve(o)).dump(2) << '\n';
      return kOk;
    }
    return run(o, chosen);
  } catch (const slim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const slim::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return kMissing;
  } catch (const slim::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
