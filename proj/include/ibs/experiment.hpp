#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ibs/baselines.hpp"
#include "ibs/config.hpp"
#include "ibs/errors.hpp"
#include "ibs/metrics.hpp"
#include "ibs/random.hpp"
#include "ibs/simcore.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#ifndef IBS_VERSION
#define IBS_VERSION "dev"
#endif

namespace ibs {

namespace fs = std::filesystem;

// Seed scheme: every random stream is derive_seed(master, stream, density, index).
// Agent initialisation is shared by sac and sac-base so the two learners differ
// only in the reward they train on.
inline std::uint64_t train_episode_seed(std::uint64_t master, int density, int episode) {
  return derive_seed(master, seed_stream::kTrainEpisode, static_cast<std::uint64_t>(density),
                     static_cast<std::uint64_t>(episode));
}
inline std::uint64_t eval_episode_seed(std::uint64_t master, int density, int episode) {
  return derive_seed(master, seed_stream::kEvalEpisode, static_cast<std::uint64_t>(density),
                     static_cast<std::uint64_t>(episode));
}
inline std::uint64_t agent_init_seed(std::uint64_t master, int density) {
  return derive_seed(master, seed_stream::kAgentInit, static_cast<std::uint64_t>(density), 0);
}

/// Batch-sized temporaries are allocated and freed every update; keeping them
/// on the heap instead of fresh mappings avoids page-fault churn.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes via a temporary sibling and renames, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    os << content;
    if (!os) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline fs::path cell_dir(const fs::path& out, AgentKind agent, int density) {
  return out / to_string(agent) / ("N" + std::to_string(density));
}

inline SimConfig sim_for_density(const ExperimentConfig& cfg, int density) {
  SimConfig s = cfg.sim;
  s.n_ibs = density;
  return s;
}

// ---- run manifest ----

struct ManifestCell {
  AgentKind agent = AgentKind::sac;
  int density = 0;
  std::uint64_t agent_seed = 0;
  std::vector<std::uint64_t> train_seeds;
  std::vector<std::uint64_t> eval_seeds;
  bool trained = false;
  bool evaluated = false;
  std::string trained_utc;
  std::string evaluated_utc;
};

struct RunManifest {
  Json config;
  std::string preset;
  std::string version = IBS_VERSION;
  std::string created_utc;
  std::vector<ManifestCell> cells;

  static constexpr const char* kFileName = "manifest.json";

  /// Keys that select cells or tune execution; they may differ between runs sharing an output directory.
  static Json identity(Json config) {
    for (const char* k : {"agents", "densities", "workers"}) config.erase(k);
    return config;
  }

  ManifestCell* find(AgentKind agent, int density) {
    for (auto& c : cells)
      if (c.agent == agent && c.density == density) return &c;
    return nullptr;
  }

  ManifestCell& ensure(const ExperimentConfig& cfg, AgentKind agent, int density) {
    if (ManifestCell* c = find(agent, density)) return *c;
    ManifestCell c;
    c.agent = agent;
    c.density = density;
    c.agent_seed = agent_init_seed(cfg.master_seed, density);
    if (is_learning(agent))
      for (int e = 0; e < cfg.train_episodes; ++e) c.train_seeds.push_back(train_episode_seed(cfg.master_seed, density, e));
    for (int e = 0; e < cfg.eval_episodes; ++e) c.eval_seeds.push_back(eval_episode_seed(cfg.master_seed, density, e));
    cells.push_back(std::move(c));
    return cells.back();
  }

  /// Evaluated cells in report order: density, then agent kind.
  std::vector<ManifestCell> evaluated_cells() const {
    std::vector<ManifestCell> out;
    for (const auto& c : cells)
      if (c.evaluated) out.push_back(c);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.density != b.density ? a.density < b.density : static_cast<int>(a.agent) < static_cast<int>(b.agent);
    });
    return out;
  }

  Json to_json() const {
    Json j;
    j["tool"] = "slice-sim";
    j["version"] = version;
    j["preset"] = preset;
    j["created_utc"] = created_utc;
    j["seed_scheme"] =
        "derive_seed(master_seed, stream, density, index); stream 1 train episode, 2 eval episode, 3 agent init";
    j["config"] = config;
    Json cs = Json::array();
    for (const auto& c : cells) {
      Json cj;
      cj["agent"] = to_string(c.agent);
      cj["density"] = c.density;
      cj["agent_seed"] = c.agent_seed;
      cj["train_seeds"] = c.train_seeds;
      cj["eval_seeds"] = c.eval_seeds;
      cj["trained"] = c.trained;
      cj["evaluated"] = c.evaluated;
      cj["trained_utc"] = c.trained_utc;
      cj["evaluated_utc"] = c.evaluated_utc;
      cs.push_back(cj);
    }
    j["cells"] = cs;
    return j;
  }

  static RunManifest from_json(const Json& j) {
    try {
      RunManifest m;
      m.config = j.at("config");
      m.preset = j.at("preset").get<std::string>();
      m.version = j.at("version").get<std::string>();
      m.created_utc = j.at("created_utc").get<std::string>();
      for (const auto& cj : j.at("cells")) {
        ManifestCell c;
        c.agent = parse_agent_kind(cj.at("agent").get<std::string>());
        c.density = cj.at("density").get<int>();
        c.agent_seed = cj.at("agent_seed").get<std::uint64_t>();
        c.train_seeds = cj.at("train_seeds").get<std::vector<std::uint64_t>>();
        c.eval_seeds = cj.at("eval_seeds").get<std::vector<std::uint64_t>>();
        c.trained = cj.at("trained").get<bool>();
        c.evaluated = cj.at("evaluated").get<bool>();
        c.trained_utc = cj.at("trained_utc").get<std::string>();
        c.evaluated_utc = cj.at("evaluated_utc").get<std::string>();
        m.cells.push_back(std::move(c));
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("manifest: ") + e.what());
    }
  }

  void save(const fs::path& out) const { write_file_atomic(out / kFileName, to_json().dump(2) + "\n"); }

  static std::optional<RunManifest> load(const fs::path& out) {
    const fs::path p = out / kFileName;
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json(parse_config_text(ss.str(), p.string()));
  }
};

/// Loads the manifest in `out` (it must belong to the same configuration) or
/// starts a new one, registers the configured cells and saves it.
inline RunManifest open_manifest(const fs::path& out, const ExperimentConfig& cfg) {
  const Json snapshot = config_to_json(cfg);
  RunManifest m;
  if (auto existing = RunManifest::load(out)) {
    if (RunManifest::identity(existing->config) != RunManifest::identity(snapshot) || existing->preset != cfg.preset) {
      throw ConfigError("output directory '" + out.string() +
                        "' holds a run with a different configuration; choose a fresh --out");
    }
    m = std::move(*existing);
  } else {
    m.config = snapshot;
    m.preset = cfg.preset;
    m.created_utc = utc_now();
  }
  for (AgentKind a : cfg.agents)
    for (int d : cfg.densities) m.ensure(cfg, a, d);
  m.save(out);
  return m;
}

// ---- cells ----

using LogSink = std::function<void(const std::string&)>;

inline void log_stderr(const std::string& msg) { std::cerr << msg << '\n'; }

inline std::string train_log_csv(const std::vector<TrainStats>& rows) {
  std::ostringstream os;
  os << "step,reward_mean,critic1_loss,critic2_loss,actor_loss,lambda,entropy\n";
  for (const auto& r : rows) {
    os << r.step << ',' << fmt(r.reward_mean) << ',' << fmt(r.critic1_loss) << ',' << fmt(r.critic2_loss) << ','
       << fmt(r.actor_loss) << ',' << fmt(r.lambda) << ',' << fmt(r.entropy) << '\n';
  }
  return os.str();
}

inline RewardKind reward_kind_of(AgentKind k) { return k == AgentKind::sac_base ? RewardKind::base_standin : RewardKind::full; }

/// Trains a learning agent for one density; writes checkpoint.txt and train_log.csv.
inline void train_cell(const ExperimentConfig& cfg, AgentKind agent, int density, const fs::path& dir,
                       const LogSink& log = log_stderr) {
  if (!is_learning(agent)) return;
  Environment env(sim_for_density(cfg, density));
  SacSlicingAgent learner(cfg.resolved_sac(), agent_init_seed(cfg.master_seed, density), reward_kind_of(agent),
                          cfg.schedule);
  EpisodeOptions opts;
  opts.log_every = cfg.log_every;
  std::vector<TrainStats> rows;
  for (int e = 0; e < cfg.train_episodes; ++e) {
    EpisodeRecord rec = run_episode(env, learner, RunMode::train, train_episode_seed(cfg.master_seed, density, e), e, opts);
    rows.insert(rows.end(), rec.train_log.begin(), rec.train_log.end());
    std::ostringstream msg;
    msg << "[train] " << to_string(agent) << " N=" << density << " episode " << (e + 1) << '/' << cfg.train_episodes
        << " mean_reward=" << fmt(rec.mean_raw_reward, 6) << " lambda=" << fmt(learner.sac().lambda(), 4);
    log(msg.str());
  }
  std::ostringstream ck;
  learner.sac().save_policy(ck);
  write_file_atomic(dir / "train_log.csv", train_log_csv(rows));
  write_file_atomic(dir / "checkpoint.txt", ck.str());
}

template <SlicingAgent A>
std::string eval_episodes_csv(const ExperimentConfig& cfg, A& agent, int density, std::string* reward_log) {
  Environment env(sim_for_density(cfg, density));
  std::ostringstream os;
  write_episode_header(os);
  std::ostringstream rl;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    EpisodeOptions opts;
    if (reward_log && e == 0) {
      rl << "t,R_rate_xr,R_rate_embb,R_loss,R_sync,R_haptic,R_total\n";
      opts.on_step = [&](const Environment& en, const StepOutcome& out) {
        const auto& b = out.breakdown;
        rl << en.step_index() << ',' << fmt(b.rate_xr) << ',' << fmt(b.rate_embb) << ',' << fmt(b.loss) << ','
           << fmt(b.sync) << ',' << fmt(b.haptic) << ',' << fmt(b.total) << '\n';
      };
    }
    const EpisodeRecord rec = run_episode(env, agent, RunMode::eval, eval_episode_seed(cfg.master_seed, density, e), e, opts);
    for (const auto& r : rec.users) write_episode_row(os, r);
  }
  if (reward_log) *reward_log = rl.str();
  return os.str();
}

/// Evaluates one cell with a frozen policy and writes episodes.csv.
inline void eval_cell(const ExperimentConfig& cfg, AgentKind agent, int density, const fs::path& dir,
                      const std::optional<fs::path>& checkpoint = std::nullopt, const LogSink& log = log_stderr) {
  std::string reward_log;
  std::string* rl = cfg.reward_log ? &reward_log : nullptr;
  std::string csv;
  switch (agent) {
    case AgentKind::sac:
    case AgentKind::sac_base: {
      const fs::path ck = checkpoint.value_or(dir / "checkpoint.txt");
      if (!fs::exists(ck)) {
        throw CheckpointError("no checkpoint for " + std::string(to_string(agent)) + " N=" + std::to_string(density) +
                              " at '" + ck.string() + "'; run train first");
      }
      SacSlicingAgent learner(cfg.resolved_sac(), agent_init_seed(cfg.master_seed, density), reward_kind_of(agent),
                              cfg.schedule);
      learner.sac().load_policy(ck.string());
      csv = eval_episodes_csv(cfg, learner, density, rl);
      break;
    }
    case AgentKind::equal: {
      EqualSplitAgent a;
      csv = eval_episodes_csv(cfg, a, density, rl);
      break;
    }
    case AgentKind::demand: {
      DemandProportionalAgent a;
      csv = eval_episodes_csv(cfg, a, density, rl);
      break;
    }
  }
  write_file_atomic(dir / "episodes.csv", csv);
  if (rl) write_file_atomic(dir / "reward_components.csv", reward_log);
  log("[eval] " + std::string(to_string(agent)) + " N=" + std::to_string(density) + " done");
}

inline std::vector<UserEpisodeRecord> load_cell_records(const fs::path& dir) {
  const fs::path p = dir / "episodes.csv";
  std::ifstream is(p);
  if (!is) throw std::runtime_error("missing '" + p.string() + "'");
  try {
    return read_episode_rows(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

// ---- reports ----

struct CellRecords {
  AgentKind agent;
  int density;
  std::vector<UserEpisodeRecord> records;
};

inline std::string relative_improvement_str(double sac, double base) {
  if (base == 0.0) return sac == 0.0 ? "nan" : "inf";
  return fmt((sac - base) / base);
}

/// Writes satisfaction, sync-gap CDF, eMBB throughput and relative improvement CSVs.
inline void write_reports(const fs::path& out, const std::vector<CellRecords>& cells) {
  std::ostringstream sat, cdf, thr, imp;
  sat << "density,agent,ratio,wilson_lo,wilson_hi,n\n";
  cdf << "density,agent,sync_gap_ms,cdf\n";
  thr << "density,agent,mean_mbps\n";
  imp << "density,baseline,sac_ratio,baseline_ratio,relative_improvement\n";
  std::map<std::pair<int, AgentKind>, double> ratios;
  for (const auto& c : cells) {
    const std::string prefix = std::to_string(c.density) + ',' + to_string(c.agent) + ',';
    if (!c.records.empty()) {
      const SatisfactionReport rep = satisfaction_report(c.records);
      sat << prefix << fmt(rep.ratio) << ',' << fmt(rep.wilson.lo) << ',' << fmt(rep.wilson.hi) << ',' << rep.n << '\n';
      ratios[{c.density, c.agent}] = rep.ratio;
    }
    const std::vector<double> gaps = xr_sync_gaps(c.records);
    if (!gaps.empty())
      for (const auto& [v, p] : empirical_cdf(gaps)) cdf << prefix << fmt(v * 1e3) << ',' << fmt(p) << '\n';
    const auto t = throughput_report({{c.density, c.records}});
    if (auto it = t.find(c.density); it != t.end()) thr << prefix << fmt(it->second / 1e6) << '\n';
  }
  for (const auto& c : cells) {
    if (c.agent == AgentKind::sac) continue;
    auto s = ratios.find({c.density, AgentKind::sac});
    auto b = ratios.find({c.density, c.agent});
    if (s == ratios.end() || b == ratios.end()) continue;
    imp << c.density << ',' << to_string(c.agent) << ',' << fmt(s->second) << ',' << fmt(b->second) << ','
        << relative_improvement_str(s->second, b->second) << '\n';
  }
  write_file_atomic(out / "satisfaction.csv", sat.str());
  write_file_atomic(out / "cdf_sync.csv", cdf.str());
  write_file_atomic(out / "embb_throughput.csv", thr.str());
  write_file_atomic(out / "improvement.csv", imp.str());
}

inline void write_reports_from_manifest(const fs::path& out, const RunManifest& m) {
  std::vector<CellRecords> cells;
  for (const auto& c : m.evaluated_cells())
    cells.push_back({c.agent, c.density, load_cell_records(cell_dir(out, c.agent, c.density))});
  if (cells.empty()) throw ConfigError("report: no evaluated cells in '" + out.string() + "'");
  write_reports(out, cells);
}

// ---- commands ----

/// Runs `job(i)` for i in [0, n) on up to `workers` threads. The first failure
/// in index order is rethrown after all workers stop.
inline void run_bounded(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (k <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct CommandOptions {
  fs::path out = "out";
  std::optional<fs::path> checkpoint;  // eval only, single learning cell
};

inline std::vector<std::pair<AgentKind, int>> configured_cells(const ExperimentConfig& cfg) {
  std::vector<std::pair<AgentKind, int>> cells;
  for (AgentKind a : cfg.agents)
    for (int d : cfg.densities) cells.emplace_back(a, d);
  return cells;
}

class Runner {
 public:
  Runner(ExperimentConfig cfg, CommandOptions opts, LogSink log = log_stderr)
      : cfg_(std::move(cfg)), opts_(std::move(opts)), log_(std::move(log)) {
    cfg_.validate();
  }

  void train() {
    manifest_ = open_manifest(opts_.out, cfg_);
    const auto cells = configured_cells(cfg_);
    run_bounded(cells.size(), cfg_.workers, [&](std::size_t i) { do_train(cells[i].first, cells[i].second); });
  }

  void eval() {
    manifest_ = open_manifest(opts_.out, cfg_);
    const auto cells = configured_cells(cfg_);
    if (opts_.checkpoint && cells.size() != 1) throw ConfigError("--checkpoint needs exactly one agent and one density");
    run_bounded(cells.size(), cfg_.workers, [&](std::size_t i) { do_eval(cells[i].first, cells[i].second); });
    write_reports_from_manifest(opts_.out, manifest_);
  }

  /// Trains and evaluates every cell, skipping stages the manifest records as done.
  void sweep() {
    manifest_ = open_manifest(opts_.out, cfg_);
    const auto cells = configured_cells(cfg_);
    run_bounded(cells.size(), cfg_.workers, [&](std::size_t i) {
      const auto [agent, density] = cells[i];
      bool trained = false;
      bool evaluated = false;
      {
        std::lock_guard lock(mu_);
        const ManifestCell* c = manifest_.find(agent, density);
        trained = c->trained;
        evaluated = c->evaluated;
      }
      if (evaluated) {
        log_("[sweep] " + std::string(to_string(agent)) + " N=" + std::to_string(density) + " already done, skipping");
        return;
      }
      if (!trained) do_train(agent, density);
      do_eval(agent, density);
    });
    write_reports_from_manifest(opts_.out, manifest_);
  }

  void report() {
    auto m = RunManifest::load(opts_.out);
    if (!m) throw ConfigError("report: no manifest in '" + opts_.out.string() + "'");
    write_reports_from_manifest(opts_.out, *m);
  }

  const RunManifest& manifest() const { return manifest_; }

 private:
  void do_train(AgentKind agent, int density) {
    const fs::path dir = cell_dir(opts_.out, agent, density);
    if (is_learning(agent)) {
      train_cell(cfg_, agent, density, dir, log_);
    } else {
      log_("[train] " + std::string(to_string(agent)) + " has no parameters; nothing to train");
    }
    mark(agent, density, [](ManifestCell& c) {
      c.trained = true;
      c.trained_utc = utc_now();
    });
  }

  void do_eval(AgentKind agent, int density) {
    eval_cell(cfg_, agent, density, cell_dir(opts_.out, agent, density), opts_.checkpoint, log_);
    mark(agent, density, [](ManifestCell& c) {
      c.evaluated = true;
      c.evaluated_utc = utc_now();
    });
  }

  template <class F>
  void mark(AgentKind agent, int density, F&& f) {
    std::lock_guard lock(mu_);
    f(*manifest_.find(agent, density));
    manifest_.save(opts_.out);
  }

  ExperimentConfig cfg_;
  CommandOptions opts_;
  LogSink log_;
  RunManifest manifest_;
  std::mutex mu_;
};

}  // namespace ibs
