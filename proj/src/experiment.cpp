#include "unln/experiment.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "unln/attacks.hpp"
#include "unln/data.hpp"
#include "unln/dfr.hpp"
#include "unln/error.hpp"
#include "unln/hash.hpp"
#include "unln/poisons.hpp"
#include "unln/probes.hpp"
#include "unln/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace unln {

namespace {

// ---------------------------------------------------------------------------
// Config parsing (strict: unknown keys rejected, paths validated up front)
// ---------------------------------------------------------------------------

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: " + section + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("config: unknown key \"" + item.key() + "\" in " + section);
  }
}

Schedule schedule_from_string(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "step-decay") return Schedule::StepDecay;
  if (s == "cosine") return Schedule::Cosine;
  throw ConfigError("config: unknown schedule \"" + s + "\"");
}

std::string schedule_to_string(Schedule s) {
  switch (s) {
    case Schedule::Constant: return "constant";
    case Schedule::StepDecay: return "step-decay";
    case Schedule::Cosine: return "cosine";
  }
  return "constant";
}

SgdConfig parse_sgd(const json& j, SgdConfig base, const std::string& section) {
  check_keys(j, section,
             {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
              "schedule", "milestones", "decay_factor"});
  if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<int>();
  if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("momentum")) base.momentum = j["momentum"].get<double>();
  if (j.contains("weight_decay")) base.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("schedule")) base.schedule = schedule_from_string(j["schedule"].get<std::string>());
  if (j.contains("milestones")) base.milestones = j["milestones"].get<std::vector<double>>();
  if (j.contains("decay_factor")) base.decay_factor = j["decay_factor"].get<double>();
  base.validate();
  return base;
}

json sgd_to_json(const SgdConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["schedule"] = schedule_to_string(c.schedule);
  if (c.schedule == Schedule::StepDecay) {
    j["milestones"] = c.milestones;
    j["decay_factor"] = c.decay_factor;
  }
  return j;
}

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + origin + ": " + e.what());
  }
  check_keys(j, "config root",
             {"seed", "scale", "output", "data", "poison", "victim", "attack", "probes", "dfr"});

  ExperimentConfig cfg;
  cfg.victim = desk_victim_config();
  cfg.attack.linear = ortho_proj_linear_config();

  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("scale")) cfg.scale = j["scale"].get<std::string>();
  if (cfg.scale != "desk" && cfg.scale != "full")
    throw ConfigError("config: scale must be \"desk\" or \"full\"");
  if (j.contains("output")) cfg.output = j["output"].get<std::string>();

  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data", {"generator", "classes", "per_class", "height", "width", "dir"});
    if (d.contains("generator")) cfg.data.generator = d["generator"].get<std::string>();
    if (d.contains("classes")) cfg.data.classes = d["classes"].get<int>();
    if (d.contains("per_class")) cfg.data.per_class = d["per_class"].get<int>();
    if (d.contains("height")) cfg.data.height = d["height"].get<int>();
    if (d.contains("width")) cfg.data.width = d["width"].get<int>();
    if (d.contains("dir")) cfg.data.dir = d["dir"].get<std::string>();
    if (cfg.data.generator != "synthetic" && cfg.data.generator != "cifar10")
      throw ConfigError("config: data.generator must be \"synthetic\" or \"cifar10\"");
    if (cfg.data.generator == "cifar10") {
      if (cfg.data.dir.empty()) throw ConfigError("config: data.dir required for cifar10");
      if (!fs::is_directory(cfg.data.dir))
        throw ConfigError("config: data.dir does not exist: " + cfg.data.dir);
      for (const std::string name :
           {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
            "data_batch_5.bin", "test_batch.bin"})
        if (!fs::exists(fs::path(cfg.data.dir) / name))
          throw ConfigError("config: data.dir is missing " + name);
    }
  }

  if (j.contains("poison")) {
    const json& p = j["poison"];
    check_keys(p, "poison", {"variant", "epsilon", "patches", "norm", "steps", "step_size"});
    if (p.contains("variant")) cfg.poison.variant = p["variant"].get<std::string>();
    if (p.contains("epsilon")) cfg.poison.epsilon = p["epsilon"].get<double>();
    if (p.contains("patches")) cfg.poison.patches = p["patches"].get<int>();
    if (p.contains("norm")) cfg.poison.norm = p["norm"].get<std::string>();
    if (p.contains("steps")) cfg.poison.steps = p["steps"].get<int>();
    if (p.contains("step_size")) cfg.poison.step_size = p["step_size"].get<double>();
    static const char* variants[] = {"none",      "classwise-random-noise",
                                     "classwise-regions", "one-pixel",
                                     "samplewise-random", "adversarial"};
    bool ok = false;
    for (const char* v : variants) ok = ok || cfg.poison.variant == v;
    if (!ok) throw ConfigError("config: unknown poison.variant \"" + cfg.poison.variant + "\"");
    if (cfg.poison.norm != "linf" && cfg.poison.norm != "l2")
      throw ConfigError("config: poison.norm must be \"linf\" or \"l2\"");
  }

  if (j.contains("victim")) cfg.victim = parse_sgd(j["victim"], cfg.victim, "victim");

  if (j.contains("attack")) {
    const json& a = j["attack"];
    check_keys(a, "attack", {"method", "epsilon", "steps", "step_size", "linear", "victim"});
    if (a.contains("method")) cfg.attack.method = a["method"].get<std::string>();
    if (a.contains("epsilon")) cfg.attack.epsilon = a["epsilon"].get<double>();
    if (a.contains("steps")) cfg.attack.steps = a["steps"].get<int>();
    if (a.contains("step_size")) cfg.attack.step_size = a["step_size"].get<double>();
    if (a.contains("linear")) cfg.attack.linear = parse_sgd(a["linear"], cfg.attack.linear, "attack.linear");
    if (a.contains("victim")) {
      SgdConfig base = cfg.attack.method == "adv-train" ? adv_training_config() : cfg.victim;
      cfg.attack.victim = parse_sgd(a["victim"], base, "attack.victim");
    }
    static const char* methods[] = {"none", "ortho-proj", "adv-train", "class-avg-sub"};
    bool ok = false;
    for (const char* m : methods) ok = ok || cfg.attack.method == m;
    if (!ok) throw ConfigError("config: unknown attack.method \"" + cfg.attack.method + "\"");
  }

  if (j.contains("probes")) {
    const json& p = j["probes"];
    check_keys(p, "probes", {"perturbations", "images", "weight_viz", "class_averages"});
    if (p.contains("perturbations")) cfg.probes.perturbations = p["perturbations"].get<bool>();
    if (p.contains("images")) cfg.probes.images = p["images"].get<bool>();
    if (p.contains("weight_viz")) cfg.probes.weight_viz = p["weight_viz"].get<bool>();
    if (p.contains("class_averages")) cfg.probes.class_averages = p["class_averages"].get<bool>();
  }
  if (cfg.probes.perturbations && cfg.poison.variant == "none")
    throw ConfigError("config: probes.perturbations requires a poison variant");

  if (j.contains("dfr")) {
    const json& d = j["dfr"];
    check_keys(d, "dfr", {"enabled", "subset_fraction"});
    if (d.contains("enabled")) cfg.dfr.enabled = d["enabled"].get<bool>();
    if (d.contains("subset_fraction")) cfg.dfr.subset_fraction = d["subset_fraction"].get<double>();
    if (cfg.dfr.subset_fraction <= 0.0 || cfg.dfr.subset_fraction > 1.0)
      throw ConfigError("config: dfr.subset_fraction must be in (0,1]");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str(), path);
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["seed"] = seed;
  j["scale"] = scale;
  j["data"] = {{"generator", data.generator}};
  if (data.generator == "synthetic") {
    j["data"]["classes"] = data.classes;
    j["data"]["per_class"] = data.per_class;
    j["data"]["height"] = data.height;
    j["data"]["width"] = data.width;
  } else {
    j["data"]["dir"] = data.dir;
  }
  j["poison"] = {{"variant", poison.variant}};
  if (poison.variant != "none" && poison.variant != "one-pixel")
    j["poison"]["epsilon"] = poison.epsilon;
  if (poison.variant == "classwise-regions") j["poison"]["patches"] = poison.patches;
  if (poison.variant == "samplewise-random") j["poison"]["norm"] = poison.norm;
  if (poison.variant == "adversarial") {
    j["poison"]["steps"] = poison.steps;
    j["poison"]["step_size"] = poison.step_size;
  }
  j["victim"] = sgd_to_json(victim);
  j["attack"] = {{"method", attack.method}};
  if (attack.method == "adv-train") {
    j["attack"]["epsilon"] = attack.epsilon;
    j["attack"]["steps"] = attack.steps;
    j["attack"]["step_size"] = attack.step_size;
  }
  if (attack.method == "ortho-proj") j["attack"]["linear"] = sgd_to_json(attack.linear);
  if (attack.victim) j["attack"]["victim"] = sgd_to_json(*attack.victim);
  j["probes"] = {{"perturbations", probes.perturbations},
                 {"images", probes.images},
                 {"weight_viz", probes.weight_viz},
                 {"class_averages", probes.class_averages}};
  j["dfr"] = {{"enabled", dfr.enabled}, {"subset_fraction", dfr.subset_fraction}};
  return j.dump(2);
}

StageSet StageSet::for_command(const std::string& command) {
  StageSet s;
  if (command == "gen-data") {
    s.gen_data = true;
  } else if (command == "gen-poison") {
    s.gen_poison = true;
  } else if (command == "probe") {
    s.probe = true;
  } else if (command == "train") {
    s.train = true;
  } else if (command == "attack") {
    s.attack = true;
    s.clean_baseline = true;
  } else if (command == "dfr") {
    s.train = true;
    s.dfr = true;
  } else if (command == "run") {
    s.train = true;  // the rest is resolved from the config
  } else {
    throw ConfigError("unknown command \"" + command + "\"");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

void write_metrics_csv(const std::string& path, const std::string& attack,
                       const std::string& poison, const std::vector<MetricRecord>& m) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << "attack,poison,epoch,train_acc,test_acc,train_loss,test_loss\n";
  for (const MetricRecord& r : m)
    f << attack << ',' << poison << ',' << r.epoch << ',' << fmt_g(r.train_acc) << ','
      << fmt_g(r.test_acc) << ',' << fmt_g(r.train_loss) << ',' << fmt_g(r.test_loss)
      << '\n';
}

double final_test_acc(const std::vector<MetricRecord>& m) {
  return m.empty() ? 0.0 : m.back().test_acc;
}

struct RunContext {
  fs::path dir;
  std::vector<std::string> artifacts;
  json hashes = json::object();

  std::string rel(const fs::path& p) const { return fs::relative(p, dir).string(); }
  void track(const fs::path& p, bool hash = false) {
    artifacts.push_back(rel(p));
    if (hash) hashes[rel(p)] = git_blob_sha1_file(p.string());
  }
};

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const StageSet& requested) {
  StageSet st = requested;
  const bool have_poison = cfg.poison.variant != "none";

  if (st.attack && cfg.attack.method == "none")
    throw ConfigError("attack stage requested but attack.method is \"none\"");
  if (st.dfr || st.train || st.attack || st.probe) st.gen_poison = true;
  if (st.gen_poison) st.gen_data = true;

  const std::string canon = cfg.canonical_json();
  const std::string run_id = git_blob_sha1(canon).substr(0, 12);
  RunContext ctx;
  ctx.dir = fs::path(cfg.output) / run_id;

  if (fs::exists(ctx.dir / "summary.json")) {
    std::fprintf(stderr, "unln: run %s already complete, not overwriting\n",
                 ctx.dir.string().c_str());
    return {ctx.dir.string(), true};
  }
  if (fs::exists(ctx.dir)) fs::remove_all(ctx.dir);  // failed or partial run
  fs::create_directories(ctx.dir);

  try {
    json metrics = json::object();
    ctx.hashes["config"] = git_blob_sha1(canon);

    // ---- data
    fs::create_directories(ctx.dir / "data");
    ImageDataset train_clean, test;
    if (cfg.data.generator == "synthetic") {
      auto pair = generate_synthetic_clean(cfg.data.classes, cfg.data.per_class,
                                           cfg.data.height, cfg.data.width,
                                           stage_seed(cfg.seed, "data"));
      train_clean = std::move(pair.first);
      test = std::move(pair.second);
    } else {
      auto pair = load_cifar10(cfg.data.dir);
      train_clean = std::move(pair.first);
      test = std::move(pair.second);
    }
    save_dataset(train_clean, (ctx.dir / "data" / "train.unld").string());
    ctx.track(ctx.dir / "data" / "train.unld", true);
    save_dataset(test, (ctx.dir / "data" / "test.unld").string());
    ctx.track(ctx.dir / "data" / "test.unld", true);

    // ---- poison
    ImageDataset train_ds = train_clean;
    if (st.gen_poison && have_poison) {
      fs::create_directories(ctx.dir / "poison");
      const std::uint64_t pseed = stage_seed(cfg.seed, "poison");
      const ImageShape shape = train_clean.shape();
      PerturbationSet perts;
      if (cfg.poison.variant == "classwise-random-noise") {
        perts = gen_classwise(ClasswiseVariant::RandomNoise, train_clean.classes, shape,
                              cfg.poison.epsilon, 0, pseed);
      } else if (cfg.poison.variant == "classwise-regions") {
        perts = gen_classwise(ClasswiseVariant::Regions, train_clean.classes, shape,
                              cfg.poison.epsilon, cfg.poison.patches, pseed);
      } else if (cfg.poison.variant == "one-pixel") {
        perts = gen_classwise(ClasswiseVariant::OnePixel, train_clean.classes, shape, 0.0,
                              0, pseed);
      } else if (cfg.poison.variant == "samplewise-random") {
        const NormConstraint c = cfg.poison.norm == "l2"
                                     ? NormConstraint::l2(cfg.poison.epsilon)
                                     : NormConstraint::linf(cfg.poison.epsilon);
        perts = gen_samplewise_random(train_clean.n, shape, c, pseed);
      } else {  // adversarial
        SgdConfig scfg = cfg.victim;
        scfg.seed = stage_seed(cfg.seed, "surrogate");
        TrainedVictim surrogate = standard_training(train_clean, nullptr, scfg);
        if (surrogate.result.diverged)
          throw NumericalError("surrogate training diverged: " +
                               surrogate.result.divergence_info);
        save_checkpoint((ctx.dir / "poison" / "surrogate.unlc").string(), surrogate.model);
        ctx.track(ctx.dir / "poison" / "surrogate.unlc");
        const double step =
            cfg.poison.step_size > 0 ? cfg.poison.step_size : cfg.poison.epsilon / 10.0;
        perts = gen_adversarial_poison(surrogate.model, train_clean, cfg.poison.epsilon,
                                       cfg.poison.steps, step, pseed);
      }
      save_perturbations(perts, (ctx.dir / "poison" / "perturbations.unlp").string());
      ctx.track(ctx.dir / "poison" / "perturbations.unlp", true);
      train_ds = apply_poison(train_clean, perts);
      save_dataset(train_ds, (ctx.dir / "poison" / "poisoned_train.unld").string());
      ctx.track(ctx.dir / "poison" / "poisoned_train.unld", true);
    }
    metrics["poison"] = cfg.poison.variant;

    // ---- probes
    if (st.probe && cfg.probes.any()) {
      fs::create_directories(ctx.dir / "probes");
      const LbfgsConfig probe_cfg{500, 0.5, 10};
      std::ofstream pf(ctx.dir / "probes" / "probes.csv");
      pf << "target,poison,train_accuracy,steps\n";
      if (cfg.probes.perturbations) {
        ProbeResult r =
            separability_probe(ProbeTarget::Perturbations, train_ds, &train_clean, probe_cfg);
        pf << "perturbations," << cfg.poison.variant << ',' << fmt_g(r.train_accuracy)
           << ',' << r.steps << '\n';
        metrics["probe_perturbations_acc"] = r.train_accuracy;
      }
      if (cfg.probes.images) {
        ProbeResult r = separability_probe(ProbeTarget::Images, train_ds, nullptr, probe_cfg);
        pf << "images," << cfg.poison.variant << ',' << fmt_g(r.train_accuracy) << ','
           << r.steps << '\n';
        metrics["probe_images_acc"] = r.train_accuracy;
      }
      pf.close();
      ctx.track(ctx.dir / "probes" / "probes.csv");
      if (cfg.probes.class_averages) {
        const auto means = class_average_images(train_ds);
        Matrix m(train_ds.dim(), train_ds.classes);
        for (int c = 0; c < train_ds.classes; ++c)
          for (int jdx = 0; jdx < train_ds.dim(); ++jdx) m(jdx, c) = means[c][jdx];
        for (const std::string& p : export_weight_visualization(
                 m, train_ds.shape(), (ctx.dir / "probes" / "class_avg").string()))
          ctx.track(p);
      }
    }

    // ---- standard training on the (possibly poisoned) train set
    TrainResult train_result;
    CheckpointSeries checkpoints;
    ConvNetArch arch;
    if (st.train) {
      fs::create_directories(ctx.dir / "train");
      SgdConfig vcfg = cfg.victim;
      vcfg.seed = stage_seed(cfg.seed, "victim");
      TrainedVictim tv = standard_training(train_ds, &test, vcfg, /*save_checkpoints=*/st.dfr);
      if (tv.result.diverged)
        throw NumericalError("training diverged: " + tv.result.divergence_info);
      arch = tv.model.arch();
      train_result = std::move(tv.result);
      checkpoints = std::move(train_result.checkpoints);

      write_metrics_csv((ctx.dir / "train" / "metrics.csv").string(), "none",
                        cfg.poison.variant, train_result.metrics);
      ctx.track(ctx.dir / "train" / "metrics.csv");
      save_checkpoint((ctx.dir / "train" / "model.unlc").string(), tv.model);
      ctx.track(ctx.dir / "train" / "model.unlc");
      if (st.dfr) {
        fs::create_directories(ctx.dir / "train" / "checkpoints");
        for (const Checkpoint& ck : checkpoints.snapshots) {
          char name[32];
          std::snprintf(name, sizeof name, "epoch%03d.unlc", ck.epoch);
          const fs::path p = ctx.dir / "train" / "checkpoints" / name;
          save_checkpoint(p.string(), tv.model.arch_descriptor(), tv.model.tensor_specs(),
                          ck.params);
          ctx.track(p);
        }
      }
      metrics["final_test_acc"] = final_test_acc(train_result.metrics);
      metrics["final_test_loss"] = train_result.metrics.back().test_loss;
      metrics["final_train_acc"] = train_result.metrics.back().train_acc;
    }

    // ---- clean baseline for attack comparisons
    if (st.clean_baseline && st.attack) {
      if (have_poison) {
        SgdConfig bcfg = cfg.victim;
        bcfg.seed = stage_seed(cfg.seed, "clean-baseline");
        TrainedVictim base = standard_training(train_clean, &test, bcfg);
        if (base.result.diverged)
          throw NumericalError("clean baseline diverged: " + base.result.divergence_info);
        fs::create_directories(ctx.dir / "attack");
        write_metrics_csv((ctx.dir / "attack" / "clean_baseline_metrics.csv").string(),
                          "none", "none", base.result.metrics);
        ctx.track(ctx.dir / "attack" / "clean_baseline_metrics.csv");
        metrics["clean_baseline_test_acc"] = final_test_acc(base.result.metrics);
      } else if (st.train) {
        metrics["clean_baseline_test_acc"] = metrics["final_test_acc"];
      }
    }

    // ---- attack
    if (st.attack) {
      fs::create_directories(ctx.dir / "attack");
      metrics["attack"] = cfg.attack.method;
      if (cfg.attack.method == "ortho-proj") {
        SgdConfig lin = cfg.attack.linear;
        lin.seed = stage_seed(cfg.seed, "attack-linear");
        SgdConfig vcfg = cfg.attack.victim.value_or(cfg.victim);
        vcfg.seed = stage_seed(cfg.seed, "attack-victim");
        OrthoProjResult res = orthogonal_projection_attack(train_ds, &test, lin, vcfg);
        write_metrics_csv((ctx.dir / "attack" / "linear_metrics.csv").string(),
                          "ortho-proj-linear", cfg.poison.variant, res.linear_metrics);
        ctx.track(ctx.dir / "attack" / "linear_metrics.csv");
        write_metrics_csv((ctx.dir / "attack" / "metrics.csv").string(), "ortho-proj",
                          cfg.poison.variant, res.victim_metrics);
        ctx.track(ctx.dir / "attack" / "metrics.csv");
        save_dataset(res.recovered, (ctx.dir / "attack" / "recovered_train.unld").string());
        ctx.track(ctx.dir / "attack" / "recovered_train.unld", true);
        if (cfg.probes.weight_viz) {
          for (const std::string& p : export_weight_visualization(
                   res.linear.weight_matrix(), train_ds.shape(),
                   (ctx.dir / "attack" / "weights").string()))
            ctx.track(p);
        }
        metrics["attack_test_acc"] = final_test_acc(res.victim_metrics);
      } else if (cfg.attack.method == "adv-train") {
        AdvTrainConfig atk{cfg.attack.epsilon, cfg.attack.steps, cfg.attack.step_size};
        SgdConfig vcfg = cfg.attack.victim.value_or(adv_training_config());
        vcfg.seed = stage_seed(cfg.seed, "attack-victim");
        AdvTrainResult res = adversarial_training(train_ds, &test, atk, vcfg);
        write_metrics_csv((ctx.dir / "attack" / "metrics.csv").string(), "adv-train",
                          cfg.poison.variant, res.metrics);
        ctx.track(ctx.dir / "attack" / "metrics.csv");
        metrics["attack_test_acc"] = final_test_acc(res.metrics);
      } else if (cfg.attack.method == "class-avg-sub") {
        SgdConfig vcfg = cfg.attack.victim.value_or(cfg.victim);
        vcfg.seed = stage_seed(cfg.seed, "attack-victim");
        ClassAvgSubResult res = class_average_subtraction(train_ds, &test, vcfg);
        write_metrics_csv((ctx.dir / "attack" / "metrics.csv").string(), "class-avg-sub",
                          cfg.poison.variant, res.metrics);
        ctx.track(ctx.dir / "attack" / "metrics.csv");
        save_dataset(res.adjusted, (ctx.dir / "attack" / "adjusted_train.unld").string());
        ctx.track(ctx.dir / "attack" / "adjusted_train.unld", true);
        metrics["attack_test_acc"] = final_test_acc(res.metrics);
      }
    } else {
      metrics["attack"] = "none";
    }

    // ---- DFR sweep over the training checkpoints
    if (st.dfr) {
      if (checkpoints.snapshots.empty())
        throw ConfigError("dfr: no checkpoints available (training stage required)");
      fs::create_directories(ctx.dir / "dfr");
      ImageDataset subset = subset_random_fraction(train_clean, cfg.dfr.subset_fraction,
                                                   stage_seed(cfg.seed, "dfr-subset"));
      DfrSweep sweep = dfr_sweep(checkpoints, arch, subset, test);

      std::ofstream sf(ctx.dir / "dfr" / "sweep.csv");
      sf << "epoch,dfr_test_acc,dfr_test_loss\n";
      for (const DfrSweepPoint& p : sweep.curve)
        sf << p.epoch << ',' << fmt_g(p.accuracy) << ',' << fmt_g(p.loss) << '\n';
      sf.close();
      ctx.track(ctx.dir / "dfr" / "sweep.csv");

      // Random-init baseline with the same initializer family.
      ConvNet rand_model(arch, stage_seed(cfg.seed, "dfr-random-init"));
      auto [embs, stats] = extract_normalized_embeddings(rand_model, subset, {&test});
      DfrResult brand = dfr_retrain(embs[0], subset.labels, embs[1], test.labels,
                                    subset.classes);

      std::ofstream yf(ctx.dir / "dfr" / "summary.csv");
      yf << "max_acc,argmax_epoch,min_loss,random_init_acc,random_init_loss\n";
      yf << fmt_g(sweep.max_accuracy) << ',' << sweep.argmax_epoch << ','
         << fmt_g(sweep.min_loss) << ',' << fmt_g(brand.test_accuracy) << ','
         << fmt_g(brand.test_loss) << '\n';
      yf.close();
      ctx.track(ctx.dir / "dfr" / "summary.csv");

      metrics["dfr_max_acc"] = sweep.max_accuracy;
      metrics["dfr_argmax_epoch"] = sweep.argmax_epoch;
      metrics["dfr_min_loss"] = sweep.min_loss;
      metrics["dfr_random_init_acc"] = brand.test_accuracy;
      metrics["dfr_random_init_loss"] = brand.test_loss;
    }

    // ---- summary
    json summary;
    summary["run_id"] = run_id;
    summary["seed"] = cfg.seed;
    summary["scale"] = cfg.scale;
    summary["poison"] = cfg.poison.variant;
    summary["attack"] = st.attack ? cfg.attack.method : "none";
    summary["config"] = json::parse(canon);
    summary["input_hashes"] = ctx.hashes;
    summary["metrics"] = metrics;
    ctx.artifacts.push_back("summary.json");
    summary["artifacts"] = ctx.artifacts;
    summary["status"] = "ok";
    std::ofstream sf(ctx.dir / "summary.json");
    sf << summary.dump(2) << '\n';
    sf.close();
  } catch (const std::exception& e) {
    std::ofstream ff(ctx.dir / "FAILED");
    ff << e.what() << '\n';
    throw;
  }
  return {ctx.dir.string(), false};
}

RunOutcome run_experiment_file(const std::string& config_path, const CliOverrides& overrides,
                               const std::string& command) {
  ExperimentConfig cfg = ExperimentConfig::from_json_file(config_path);
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.out) cfg.output = *overrides.out;
  if (overrides.scale) {
    cfg.scale = *overrides.scale;
    if (cfg.scale != "desk" && cfg.scale != "full")
      throw ConfigError("--scale must be desk or full");
  }

  StageSet st = StageSet::for_command(command);
  if (command == "run") {
    st.probe = cfg.probes.any();
    st.attack = cfg.attack.method != "none";
    st.clean_baseline = st.attack;
    st.dfr = cfg.dfr.enabled;
  }
  if (command == "probe" && !cfg.probes.any()) {
    if (cfg.poison.variant != "none")
      cfg.probes.perturbations = true;
    else
      cfg.probes.images = true;
  }
  if (command == "dfr") cfg.dfr.enabled = true;
  return run_experiment(cfg, st);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace {

struct ReportRow {
  std::string run, scale, poison, attack, final_acc, dfr_acc, probe_acc;
};

std::string cell(const json& metrics, const char* key) {
  if (!metrics.contains(key) || metrics[key].is_null()) return "—";  // em dash
  if (metrics[key].is_number()) return fmt_g(metrics[key].get<double>());
  return metrics[key].get<std::string>();
}

}  // namespace

int report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
           std::ostream& text_out) {
  std::vector<ReportRow> rows;
  for (const std::string& dir : run_dirs) {
    const fs::path p = fs::path(dir) / "summary.json";
    try {
      std::ifstream f(p);
      if (!f) throw FormatError("missing " + p.string());
      json s = json::parse(f);
      const json metrics = s.value("metrics", json::object());
      ReportRow r;
      r.run = s.value("run_id", fs::path(dir).filename().string());
      r.scale = s.value("scale", "—");
      r.poison = s.value("poison", "—");
      r.attack = s.value("attack", "—");
      r.final_acc = cell(metrics, "final_test_acc");
      r.dfr_acc = cell(metrics, "dfr_max_acc");
      if (metrics.contains("probe_perturbations_acc"))
        r.probe_acc = cell(metrics, "probe_perturbations_acc");
      else
        r.probe_acc = cell(metrics, "probe_images_acc");
      if (metrics.contains("attack_test_acc") && !metrics["attack_test_acc"].is_null() &&
          r.attack != "none")
        r.final_acc = cell(metrics, "attack_test_acc");
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "unln: warning: skipping %s: %s\n", dir.c_str(), e.what());
    }
  }

  const char* headers[] = {"run", "scale", "poison", "attack", "test_acc", "dfr_max_acc",
                           "probe_acc"};
  auto field = [](const ReportRow& r, int i) -> const std::string& {
    switch (i) {
      case 0: return r.run;
      case 1: return r.scale;
      case 2: return r.poison;
      case 3: return r.attack;
      case 4: return r.final_acc;
      case 5: return r.dfr_acc;
      default: return r.probe_acc;
    }
  };

  fs::create_directories(out_dir.empty() ? "." : out_dir);
  const fs::path base = out_dir.empty() ? "." : out_dir;

  std::ofstream csv(base / "report.csv");
  csv << "run,scale,poison,attack,test_acc,dfr_max_acc,probe_acc\n";
  for (const ReportRow& r : rows) {
    for (int i = 0; i < 7; ++i) csv << (i ? "," : "") << field(r, i);
    csv << '\n';
  }
  csv.close();

  // Fixed-width text table, mirroring the paper's table layout.
  std::size_t widths[7];
  for (int i = 0; i < 7; ++i) widths[i] = std::string(headers[i]).size();
  for (const ReportRow& r : rows)
    for (int i = 0; i < 7; ++i) widths[i] = std::max(widths[i], field(r, i).size());

  std::ostringstream table;
  for (int i = 0; i < 7; ++i)
    table << std::left << std::setw(static_cast<int>(widths[i]) + 2) << headers[i];
  table << '\n';
  for (int i = 0; i < 7; ++i) table << std::string(widths[i], '-') << "  ";
  table << '\n';
  for (const ReportRow& r : rows) {
    for (int i = 0; i < 7; ++i)
      table << std::left << std::setw(static_cast<int>(widths[i]) + 2) << field(r, i);
    table << '\n';
  }

  std::ofstream txt(base / "report.txt");
  txt << table.str();
  txt.close();
  text_out << table.str();
  return static_cast<int>(rows.size());
}

}  // namespace unln
