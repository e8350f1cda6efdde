// Command-line front end: one subcommand per pipeline stage plus query and
// serve. Every command reads the same JSON config.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "lens/app.hpp"
#include "lens/error.hpp"

namespace {

using namespace lens;

int serve(const app::PipelineConfig& cfg, const std::string& bind_text) {
  // Block the shutdown signals before any thread starts so only the watcher
  // receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  app::Pipeline pipeline(cfg);
  app::QueryService service(pipeline);
  app::ApiServer server(service, cfg.web_root);
  const auto addr = app::parse_bind(bind_text);
  const int port = server.bind(addr);
  std::cerr << "serving " << service.index_size() << " chunks on http://" << addr.host << ":" << port << "\n";

  std::atomic<bool> done{false};
  std::jthread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    if (done) return;
    std::cerr << "shutting down\n";
    // stop() only takes effect once listen() is running; repeat until it has.
    while (!done) {
      server.stop();
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
  server.listen();
  done = true;
  pthread_kill(watcher.native_handle(), SIGTERM);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"lens: topic discovery and semantic retrieval"};
  cli.require_subcommand(1);

  std::string config_path;
  bool force = false;
  std::size_t k = 0;
  std::string text;
  std::string bind = "127.0.0.1:8080";

  const std::pair<const char*, app::Stage> stage_cmds[] = {
      {"ingest", app::Stage::ingest}, {"embed", app::Stage::embed}, {"topics", app::Stage::topics},
      {"label", app::Stage::label},   {"eval", app::Stage::eval}};
  const char* stage_help[] = {"clean and chunk the corpus", "embed chunks and build the index",
                              "reduce, cluster and extract topic keywords", "generate topic labels",
                              "score labels and write the report"};
  std::vector<std::pair<CLI::App*, app::Stage>> stage_apps;
  for (std::size_t i = 0; i < std::size(stage_cmds); ++i) {
    auto* sub = cli.add_subcommand(stage_cmds[i].first, stage_help[i]);
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
    sub->add_flag("--force", force, "rerun even if inputs are unchanged");
    stage_apps.emplace_back(sub, stage_cmds[i].second);
  }
  auto* query = cli.add_subcommand("query", "top-k retrieval for a label or free text");
  query->add_option("--config", config_path, "pipeline config (JSON)")->required();
  query->add_option("--text", text, "query text")->required();
  query->add_option("--k", k, "number of hits (default from config)");
  auto* serve_cmd = cli.add_subcommand("serve", "HTTP API and static web UI");
  serve_cmd->add_option("--config", config_path, "pipeline config (JSON)")->required();
  serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();

  CLI11_PARSE(cli, argc, argv);

  try {
    const auto cfg = app::load_config(config_path);
    for (const auto& [sub, stage] : stage_apps) {
      if (sub->parsed()) {
        app::Pipeline pipeline(cfg);
        std::cout << pipeline.run(stage, force).line() << std::endl;
        return 0;
      }
    }
    if (query->parsed()) {
      if (query->count("--k") && k == 0) throw UsageError("k must be >= 1");
      app::Pipeline pipeline(cfg);
      app::QueryService service(pipeline);
      std::cout << app::format_hits(service.query(text, k == 0 ? cfg.default_k : k));
      return 0;
    }
    if (serve_cmd->parsed()) return serve(cfg, bind);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const PrerequisiteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
