#include "etomo/pipeline/benchmark.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>

#include "etomo/core/random.hpp"
#include "etomo/deep/checkpoint.hpp"

namespace etomo::pipeline {
namespace {

namespace fs = std::filesystem;
using io::Json;

std::string item_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", i);
  return buf;
}

struct Task {
  std::string name;
  std::vector<std::size_t> deps;
  std::function<bool()> run;  // returns false when the product was already current
};

// Runs tasks on up to `jobs` threads. A worker always takes the first
// pending task whose dependencies are done, so jobs = 1 runs in list order.
void execute(std::vector<Task>& tasks, int jobs, const std::function<void(const std::string&)>& log,
             int& ran, int& cached) {
  std::mutex mu;
  std::condition_variable cv;
  std::vector<int> state(tasks.size(), 0);  // 0 pending, 1 running, 2 done
  std::size_t pending = tasks.size();
  std::exception_ptr error;
  std::string failed;

  auto ready = [&](std::size_t i) {
    for (auto d : tasks[i].deps) {
      if (state[d] != 2) return false;
    }
    return true;
  };
  auto next = [&]() -> long {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (state[i] == 0 && ready(i)) return static_cast<long>(i);
    }
    return -1;
  };

  auto worker = [&] {
    std::unique_lock lock(mu);
    for (;;) {
      long i = -1;
      cv.wait(lock, [&] { return error || pending == 0 || (i = next()) >= 0; });
      if (error || pending == 0) return;
      state[i] = 1;
      --pending;
      lock.unlock();
      const auto t0 = std::chrono::steady_clock::now();
      bool did = false;
      std::exception_ptr e;
      try {
        did = tasks[i].run();
      } catch (...) {
        e = std::current_exception();
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      lock.lock();
      if (e) {
        if (!error) {
          error = e;
          failed = tasks[i].name;
        }
      } else {
        state[i] = 2;
        (did ? ran : cached) += 1;
        if (log) {
          char buf[32];
          std::snprintf(buf, sizeof buf, " (%.1fs)", secs);
          log(tasks[i].name + (did ? std::string(" done") + buf : std::string(" cached")));
        }
      }
      cv.notify_all();
    }
  };

  const int n = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& ex) {
      throw StageError(failed, ex.what());
    }
  }
}

fs::path key_path(const fs::path& product) { return product.string() + ".key"; }

bool is_current(const fs::path& product, const std::string& key) {
  return fs::exists(product) && fs::exists(key_path(product)) && io::read_file(key_path(product)) == key;
}

void seal(const fs::path& product, const std::string& key) {
  io::write_file_atomic(key_path(product), key);
}

void ensure_parent(const fs::path& p) { fs::create_directories(p.parent_path()); }

// Dataset on disk, loaded once its generating task has finished.
struct DatasetSlot {
  fs::path dir;
  phantom::Dataset ds;
};

}  // namespace

std::string method_label(const std::string& id) {
  if (id == "sirt") return "SIRT";
  if (id == "cstv") return "CS-TV";
  if (id == "unet") return "SIRT+U-Net";
  if (id == "dip-tv") return "DIP-TV";
  return id;
}

const CellSummary& Summary::at(const std::string& method, const std::string& scenario) const {
  for (std::size_t m = 0; m < methods.size(); ++m) {
    if (methods[m] != method) continue;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      if (scenarios[s].name == scenario) return cells[m][s];
    }
  }
  throw std::out_of_range("summary has no cell " + method + "/" + scenario);
}

std::string Summary::to_csv() const {
  std::string out = "method";
  for (const auto& s : scenarios) {
    for (const char* q : {"ssim", "psnr", "f1", "count", "mean_size", "mean_shape"}) {
      out += "," + s.name + "_" + q;
    }
  }
  out += "\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out += method_label(methods[m]);
    for (const auto& c : cells[m]) {
      out += "," + fmt(c.ssim, 4) + "," + fmt(c.psnr, 2) + "," + fmt(c.f1, 4) + "," +
             std::to_string(c.count) + "," + fmt(c.mean_size, 2) + "," + fmt(c.mean_shape, 4);
    }
    out += "\n";
  }
  return out;
}

CellSummary aggregate(const std::vector<Metrics>& per_phantom) {
  CellSummary c;
  if (per_phantom.empty()) return c;
  double size = 0.0, shape = 0.0;
  for (const auto& m : per_phantom) {
    c.ssim += m.ssim;
    c.psnr += m.psnr;
    c.f1 += m.f1;
    c.count += m.particles.count();
    for (const auto& p : m.particles.particles) {
      size += p.size;
      shape += p.shape;
    }
  }
  const auto n = static_cast<double>(per_phantom.size());
  c.ssim /= n;
  c.psnr /= n;
  c.f1 /= n;
  if (c.count > 0) {
    c.mean_size = size / static_cast<double>(c.count);
    c.mean_shape = shape / static_cast<double>(c.count);
  }
  return c;
}

std::vector<OrderingCheck> ordering_checks(const Summary& s) {
  std::vector<OrderingCheck> out;
  auto add = [&](const std::string& id, const proj::Scenario& sc, const std::string& lhs,
                 const std::string& rhs, double margin) {
    const double a = s.at(lhs, sc.name).ssim;
    const double b = s.at(rhs, sc.name).ssim;
    OrderingCheck c;
    c.id = id;
    c.scenario = sc.name;
    c.pass = a >= b + margin;
    c.detail = method_label(lhs) + " " + fmt(a, 4) + " >= " + method_label(rhs) + " " + fmt(b, 4) +
               (margin > 0.0 ? " + " + fmt(margin, 2) : std::string());
    out.push_back(c);
  };
  for (const auto& sc : s.scenarios) add("a", sc, "cstv", "sirt", 0.0);
  for (const auto& sc : s.scenarios) add("b", sc, "dip-tv", "sirt", 0.03);
  for (const auto& sc : s.scenarios) {
    const bool sparse = sc.start_deg == -60.0 && sc.step_deg == 10.0 && sc.stop_deg == 60.0;
    const bool narrow = sc.start_deg == -30.0 && sc.step_deg == 2.0 && sc.stop_deg == 30.0;
    if (sparse || narrow) add("c", sc, "dip-tv", "cstv", 0.0);
  }
  for (const auto& sc : s.scenarios) add("d", sc, "unet", "sirt", 0.03);
  return out;
}

std::string ordering_report(const std::vector<OrderingCheck>& checks) {
  std::string out;
  bool all = true;
  for (const auto& c : checks) {
    out += "(" + c.id + ") " + c.scenario + ": " + c.detail + "  " + (c.pass ? "PASS" : "FAIL") + "\n";
    all = all && c.pass;
  }
  out += std::string("overall: ") + (all ? "PASS" : "FAIL") + "\n";
  return out;
}

std::string training_log_csv(const std::vector<deep::EpochLog>& log) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + fmt(e.train_loss, 8) + "," + fmt(e.val_loss, 8) + "\n";
  }
  return out;
}

std::vector<deep::TrainingPair> training_pairs(const phantom::Dataset& ds,
                                               const std::string& scenario,
                                               const recon::SirtConfig& sirt) {
  const std::size_t si = ds.scenario_index(scenario);
  const std::size_t ri = ds.scenarios.size();
  std::vector<deep::TrainingPair> pairs;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto y = io::read_sinogram(ds.sinogram_path(i, si));
    const auto r = io::read_sinogram(ds.sinogram_path(i, ri));
    pairs.push_back({recon::sirt_reconstruct(y, y.geometry, sirt),
                     recon::sirt_reconstruct(r, r.geometry, sirt), scenario});
  }
  return pairs;
}

BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkOptions& opt) {
  cfg.validate();
  const fs::path root = opt.out_dir;
  fs::create_directories(root);
  const Json cj = config_to_json(cfg);
  io::write_file_atomic(root / "config.json", cj.dump(2) + "\n");

  std::vector<proj::Scenario> scen;
  for (const auto& s : cfg.scenarios) scen.push_back(s.scenario);
  const std::size_t n_scen = scen.size();
  const int n_bench = cfg.benchmark_phantoms;
  const int n_train = cfg.train_phantoms;

  std::vector<Task> tasks;
  auto push = [&](Task t) {
    tasks.push_back(std::move(t));
    return tasks.size() - 1;
  };

  // Ensembles.
  auto bench = std::make_shared<DatasetSlot>();
  auto train = std::make_shared<DatasetSlot>();
  bench->dir = root / "bench" / "data";
  train->dir = root / "train" / "data";
  auto dataset_task = [&](std::shared_ptr<DatasetSlot> slot, int n, std::uint64_t seed,
                          const std::string& name) {
    phantom::DatasetOptions o;
    o.n = n;
    o.master_seed = seed;
    o.spec = cfg.phantom;
    o.scenarios = scen;
    o.reference = cfg.reference;
    o.noise_sigma = cfg.noise_sigma;
    Json sj = Json::array();
    for (const auto& s : scen) sj.push_back(io::scenario_to_json(s));
    const std::string key = json_hash({{"stage", "dataset"},
                                       {"phantom", cj["phantom"]},
                                       {"scenarios", sj},
                                       {"reference", cj["reference"]},
                                       {"noise_sigma", cfg.noise_sigma},
                                       {"n", n},
                                       {"seed", seed}});
    return push({name, {}, [slot, o, key] {
                   const fs::path manifest = slot->dir / "manifest.json";
                   const bool current = is_current(manifest, key);
                   if (!current) {
                     phantom::generate_dataset(o, slot->dir);
                     seal(manifest, key);
                   }
                   slot->ds = phantom::load_dataset(manifest);
                   return !current;
                 }});
  };
  const std::size_t t_bench = dataset_task(bench, n_bench, cfg.master_seed, "dataset/bench");
  const std::size_t t_train =
      dataset_task(train, n_train, derive_seed(cfg.master_seed, "train-set"), "dataset/train");

  // SIRT of one sinogram. `si == n_scen` selects the reference.
  auto sirt_task = [&](std::shared_ptr<DatasetSlot> slot, std::size_t dep, int i, std::size_t si,
                       const fs::path& out, const std::string& name) {
    return push({name, {dep}, [&cfg, &cj, slot, i, si, out] {
                   const fs::path in = slot->ds.sinogram_path(static_cast<std::size_t>(i), si);
                   const std::string key = json_hash(
                       {{"stage", "sirt"}, {"input", io::file_hash(in)}, {"sirt", cj["sirt"]}});
                   if (is_current(out, key)) return false;
                   const auto y = io::read_sinogram(in);
                   const auto x = recon::sirt_reconstruct(y, y.geometry, cfg.sirt);
                   ensure_parent(out);
                   io::write_image(out, x, {{"method", "sirt"}, {"input", in.filename().string()}, {"key", key}});
                   seal(out, key);
                   return true;
                 }});
  };

  auto recon_path = [&](const std::string& method, const std::string& scenario, int i) {
    return root / "bench" / "recon" / method / scenario / (item_name(i) + ".etaf");
  };
  auto metrics_path = [&](const std::string& method, const std::string& scenario, int i) {
    return root / "bench" / "metrics" / method / scenario / (item_name(i) + ".json");
  };
  auto model_path = [&](const std::string& scenario) {
    return root / "models" / ("unet_" + scenario + ".etck");
  };

  // DIP cells first: they dominate the run time, so parallel workers start
  // on them early.
  std::vector<std::vector<std::size_t>> t_recon(method_ids().size(),
                                                std::vector<std::size_t>(n_scen * n_bench));
  auto cell = [&](std::size_t s, int i) { return s * static_cast<std::size_t>(n_bench) + i; };
  for (std::size_t s = 0; s < n_scen; ++s) {
    for (int i = 0; i < n_bench; ++i) {
      const auto& sc = cfg.scenarios[s];
      const fs::path out = recon_path("dip-tv", sc.scenario.name, i);
      t_recon[3][cell(s, i)] = push(
          {"dip-tv/" + sc.scenario.name + "/" + item_name(i), {t_bench},
           [&cfg, &cj, bench, s, i, sc, out] {
             deep::DipConfig d = cfg.dip;
             d.lambda_tv = sc.dip_lambda;
             d.seed = derive_seed(cfg.master_seed, "dip:" + sc.scenario.name,
                                  static_cast<std::uint64_t>(i));
             const fs::path in = bench->ds.sinogram_path(static_cast<std::size_t>(i), s);
             const std::string key = json_hash({{"stage", "dip-tv"},
                                                {"input", io::file_hash(in)},
                                                {"dip", cj["dip"]},
                                                {"unet", cj["unet"]},
                                                {"lambda", d.lambda_tv},
                                                {"seed", d.seed}});
             if (is_current(out, key)) return false;
             const auto y = io::read_sinogram(in);
             const auto r = deep::dip_reconstruct(y, y.geometry, d, cfg.unet);
             ensure_parent(out);
             io::write_image(out, r.image,
                             {{"method", "dip-tv"},
                              {"lambda", d.lambda_tv},
                              {"seed", d.seed},
                              {"best_iteration", r.best_iteration},
                              {"best_loss", r.best_loss},
                              {"key", key}});
             seal(out, key);
             return true;
           }});
    }
  }

  // Reference reconstructions of the benchmark phantoms.
  std::vector<std::size_t> t_ref(n_bench);
  for (int i = 0; i < n_bench; ++i) {
    t_ref[i] = sirt_task(bench, t_bench, i, n_scen, recon_path("sirt", cfg.reference.name, i),
                         "sirt/" + cfg.reference.name + "/" + item_name(i));
  }
  for (std::size_t s = 0; s < n_scen; ++s) {
    const auto& sc = cfg.scenarios[s];
    for (int i = 0; i < n_bench; ++i) {
      t_recon[0][cell(s, i)] = sirt_task(bench, t_bench, i, s, recon_path("sirt", sc.scenario.name, i),
                                         "sirt/" + sc.scenario.name + "/" + item_name(i));
      const fs::path out = recon_path("cstv", sc.scenario.name, i);
      t_recon[1][cell(s, i)] = push(
          {"cstv/" + sc.scenario.name + "/" + item_name(i), {t_bench},
           [&cfg, &cj, bench, s, i, sc, out] {
             recon::CsTvConfig c = cfg.cstv;
             c.lambda = sc.cstv_lambda;
             const fs::path in = bench->ds.sinogram_path(static_cast<std::size_t>(i), s);
             const std::string key = json_hash({{"stage", "cstv"},
                                                {"input", io::file_hash(in)},
                                                {"cstv", cj["cstv"]},
                                                {"lambda", c.lambda}});
             if (is_current(out, key)) return false;
             const auto y = io::read_sinogram(in);
             const auto x = recon::cstv_reconstruct(y, y.geometry, c);
             ensure_parent(out);
             io::write_image(out, x, {{"method", "cstv"}, {"lambda", c.lambda}, {"key", key}});
             seal(out, key);
             return true;
           }});
    }
  }

  // Training pairs and one restorer per scenario.
  auto train_sirt_path = [&](const std::string& scenario, int i) {
    return root / "train" / "recon" / scenario / (item_name(i) + ".etaf");
  };
  std::vector<std::size_t> t_train_ref(n_train);
  for (int i = 0; i < n_train; ++i) {
    t_train_ref[i] = sirt_task(train, t_train, i, n_scen, train_sirt_path(cfg.reference.name, i),
                               "train-sirt/" + cfg.reference.name + "/" + item_name(i));
  }
  std::vector<std::size_t> t_model(n_scen);
  for (std::size_t s = 0; s < n_scen; ++s) {
    const std::string name = cfg.scenarios[s].scenario.name;
    std::vector<std::size_t> deps = t_train_ref;
    for (int i = 0; i < n_train; ++i) {
      deps.push_back(sirt_task(train, t_train, i, s, train_sirt_path(name, i),
                               "train-sirt/" + name + "/" + item_name(i)));
    }
    const fs::path out = model_path(name);
    t_model[s] = push({"train/" + name, deps, [&cfg, &cj, &train_sirt_path, n_train, name, out] {
                         const std::uint64_t seed = derive_seed(cfg.master_seed, "train:" + name);
                         Json hashes = Json::array();
                         for (int i = 0; i < n_train; ++i) {
                           hashes.push_back(io::file_hash(train_sirt_path(name, i)));
                           hashes.push_back(io::file_hash(train_sirt_path(cfg.reference.name, i)));
                         }
                         const std::string key = json_hash({{"stage", "train"},
                                                            {"pairs", hashes},
                                                            {"train", cj["train"]},
                                                            {"unet", cj["unet"]},
                                                            {"seed", seed}});
                         if (is_current(out, key)) return false;
                         std::vector<deep::TrainingPair> pairs;
                         for (int i = 0; i < n_train; ++i) {
                           pairs.push_back({io::read_image(train_sirt_path(name, i)),
                                            io::read_image(train_sirt_path(cfg.reference.name, i)),
                                            name});
                         }
                         deep::TrainConfig tc = cfg.train;
                         tc.seed = seed;
                         const auto r = deep::train_restorer(pairs, tc, cfg.unet);
                         ensure_parent(out);
                         io::write_file_atomic(out.parent_path() / ("unet_" + name + "_log.csv"),
                                               training_log_csv(r.log));
                         deep::write_checkpoint(out, r.model,
                                                {{"scenario", name},
                                                 {"seed", seed},
                                                 {"train", cj["train"]},
                                                 {"best_epoch", r.best_epoch},
                                                 {"best_val_loss", r.best_val_loss},
                                                 {"key", key}});
                         seal(out, key);
                         return true;
                       }});
  }

  for (std::size_t s = 0; s < n_scen; ++s) {
    const std::string name = cfg.scenarios[s].scenario.name;
    for (int i = 0; i < n_bench; ++i) {
      const fs::path in = recon_path("sirt", name, i);
      const fs::path model = model_path(name);
      const fs::path out = recon_path("unet", name, i);
      t_recon[2][cell(s, i)] =
          push({"unet/" + name + "/" + item_name(i), {t_recon[0][cell(s, i)], t_model[s]},
                [in, model, out] {
                  const std::string key = json_hash({{"stage", "unet"},
                                                     {"input", io::file_hash(in)},
                                                     {"model", io::file_hash(model)}});
                  if (is_current(out, key)) return false;
                  const auto ck = deep::read_checkpoint(model);
                  const auto x = deep::restore(ck.model, io::read_image(in));
                  ensure_parent(out);
                  io::write_image(out, x, {{"method", "unet"}, {"key", key}});
                  seal(out, key);
                  return true;
                }});
    }
  }

  // Metrics for every cell against the reference reconstruction.
  for (std::size_t m = 0; m < method_ids().size(); ++m) {
    const std::string method = method_ids()[m];
    for (std::size_t s = 0; s < n_scen; ++s) {
      const std::string name = cfg.scenarios[s].scenario.name;
      for (int i = 0; i < n_bench; ++i) {
        const fs::path rec = recon_path(method, name, i);
        const fs::path ref = recon_path("sirt", cfg.reference.name, i);
        const fs::path out = metrics_path(method, name, i);
        push({"metrics/" + method + "/" + name + "/" + item_name(i),
              {t_recon[m][cell(s, i)], t_ref[i]}, [rec, ref, out] {
                const std::string key = json_hash(
                    {{"stage", "metrics"}, {"recon", io::file_hash(rec)}, {"reference", io::file_hash(ref)}});
                if (is_current(out, key)) return false;
                const auto metrics = evaluate(io::read_image(rec), io::read_image(ref));
                ensure_parent(out);
                io::write_file_atomic(out, metrics_to_json(metrics).dump() + "\n");
                seal(out, key);
                return true;
              }});
      }
    }
  }

  BenchmarkResult result;
  execute(tasks, opt.jobs, opt.log, result.stages_run, result.stages_cached);

  // Sequential aggregation.
  Summary& sum = result.summary;
  sum.methods = method_ids();
  sum.scenarios = scen;
  std::vector<std::pair<std::string, analysis::ParticleStats>> hist;
  for (const auto& method : sum.methods) {
    std::vector<CellSummary> row;
    for (const auto& sc : scen) {
      std::vector<Metrics> ms;
      analysis::ParticleStats pooled;
      for (int i = 0; i < n_bench; ++i) {
        ms.push_back(metrics_from_json(Json::parse(io::read_file(metrics_path(method, sc.name, i)))));
        for (const auto& p : ms.back().particles.particles) pooled.particles.push_back(p);
      }
      row.push_back(aggregate(ms));
      hist.emplace_back(method_label(method) + " " + sc.name, pooled);
    }
    sum.cells.push_back(row);
  }

  std::string gt = "source,count,mean_size,mean_diameter,mean_shape,records\n";
  analysis::ParticleStats phantoms, refs;
  std::size_t records = 0;
  for (int i = 0; i < n_bench; ++i) {
    for (const auto& p : morphometry(io::read_image(bench->ds.phantom_path(i))).particles) {
      phantoms.particles.push_back(p);
    }
    for (const auto& p : morphometry(io::read_image(recon_path("sirt", cfg.reference.name, i))).particles) {
      refs.particles.push_back(p);
    }
    records += bench->ds.items[i].particles.size();
  }
  for (const auto& [label, st] : {std::pair<std::string, const analysis::ParticleStats&>{"phantom", phantoms},
                                  {"reference", refs}}) {
    gt += label + "," + std::to_string(st.count()) + "," + fmt(st.mean_size(), 2) + "," +
          fmt(st.mean_diameter(), 3) + "," + fmt(st.mean_shape(), 4) + "," +
          std::to_string(records) + "\n";
  }
  hist.emplace_back("ground truth", phantoms);
  hist.emplace_back("reference", refs);

  result.checks = ordering_checks(sum);
  io::write_file_atomic(root / "summary.csv", sum.to_csv());
  io::write_file_atomic(root / "ground_truth.csv", gt);
  io::write_file_atomic(root / "histograms.csv", analysis::histogram_report(hist));
  io::write_file_atomic(root / "ordering_report.txt", ordering_report(result.checks));
  return result;
}

}  // namespace etomo::pipeline
