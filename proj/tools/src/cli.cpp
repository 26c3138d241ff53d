// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csa/affinity.hpp"
#include "csa/checkpoint.hpp"
#include "csa/diffusion.hpp"
#include "csa/encoder.hpp"
#include "csa/formats.hpp"
#include "csa/metrics.hpp"
#include "csa/parallel.hpp"
#include "csa/query_expansion.hpp"
#include "csa/rerank.hpp"
#include "csa/rng.hpp"
#include "csa/search.hpp"
#include "csa/synthetic.hpp"
#include "csa/trainer.hpp"
#include "report.hpp"

namespace csa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const CLI::Validator kNonEmpty(
    [](std::string& value) { return value.empty() ? std::string("empty path") : std::string(); },
    "PATH", "NonEmpty");

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  return fs::path(path.string() + suffix);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create directory " + dir.string());
  }
}

struct Parallelism {
  std::size_t threads = 0;
  bool deterministic = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--threads", threads, "Worker threads (0 = hardware count)");
    cmd->add_flag("--deterministic", deterministic, "Single-threaded, reproducible output");
  }
  std::size_t resolved() const { return resolve_threads(threads, deterministic); }
};

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string out;
  SyntheticDatasetSpec spec;
  std::size_t eval_queries = 100;
  std::size_t train_queries = 0;
  Parallelism par;
};

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
  const fs::path dir = o.out;
  ensure_dir(dir);
  const SyntheticDataset data = generate_synthetic(o.spec);

  const Rng root(o.spec.seed);
  const auto eval = sample_queries(data.clustered_ids, o.eval_queries, root.fork(100).next_u64());
  std::vector<std::string> rest;
  std::set_difference(data.clustered_ids.begin(), data.clustered_ids.end(), eval.begin(),
                      eval.end(), std::back_inserter(rest));
  const std::size_t n_train = o.train_queries == 0 ? rest.size() : o.train_queries;
  const auto train = sample_queries(rest, n_train, root.fork(101).next_u64());

  for (std::size_t v = 0; v < data.views.size(); ++v) {
    write_embeddings(dir / ("view" + std::to_string(v) + ".emb"), data.views[v]);
  }
  write_labels(dir / "labels.txt", data.labels);
  write_ground_truth(dir / "truth.txt", make_ground_truth(data.labels, data.views.front().ids(), eval));
  write_id_list(dir / "eval_queries.txt", eval);
  write_id_list(dir / "train_queries.txt", train);

  json report = {{"command", "generate"},
                 {"config",
                  {{"clusters", o.spec.cluster_count},
                   {"items", o.spec.items_per_cluster},
                   {"dim", o.spec.dim},
                   {"sigma", o.spec.noise_sigma},
                   {"views", o.spec.num_views},
                   {"distractors", o.spec.distractor_count},
                   {"seed", o.spec.seed},
                   {"eval_queries", o.eval_queries},
                   {"train_queries", o.train_queries}}},
                 {"database_size", data.views.front().size()},
                 {"eval_query_count", eval.size()},
                 {"train_query_count", train.size()}};
  write_json(dir / "dataset.json", report);

  TextTable t({"item", "value"});
  t.add_row({"database size", std::to_string(data.views.front().size())});
  t.add_row({"views", std::to_string(data.views.size())});
  t.add_row({"dimension", std::to_string(o.spec.dim)});
  t.add_row({"eval queries", std::to_string(eval.size())});
  t.add_row({"train queries", std::to_string(train.size())});
  t.render(out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// search

struct SearchOptions {
  std::string embeddings;
  std::string queries;
  std::string out;
  std::size_t k = 1024;
  Parallelism par;
};

int cmd_search(const SearchOptions& o, std::ostream& out) {
  const EmbeddingMatrix emb = read_embeddings(o.embeddings);
  const auto queries = read_id_list(o.queries);
  for (const auto& q : queries) {
    if (!emb.contains(q)) throw std::runtime_error("query id " + q + " is not in " + o.embeddings);
  }
  RankingSet set;
  set.method = "knn";
  set.lists.resize(queries.size());
  parallel_for(queries.size(), o.par.resolved(), [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) set.lists[i] = knn_search(emb, queries[i], o.k);
  });
  write_rankings(o.out, set);
  write_json(with_suffix(o.out, ".report.json"),
             {{"command", "search"},
              {"config",
               {{"embeddings", o.embeddings}, {"queries", o.queries}, {"K", o.k}}},
              {"query_count", queries.size()},
              {"database_size", emb.size()}});
  out << "searched " << queries.size() << " queries over " << emb.size() << " items (K=" << o.k
      << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::vector<std::string> embeddings;
  std::string labels;
  std::string queries;
  std::string out;
  std::string resume;
  EncoderConfig model;
  bool post_norm = false;
  std::string mse_reduction = "mean";
  LossConfig loss;
  OptimizerConfig optimizer;
  TrainRunConfig run;
  Parallelism par;
};

int cmd_train(TrainOptions o, std::ostream& out) {
  o.model.input_len = o.run.l;
  o.model.sublayer_style = o.post_norm ? SublayerStyle::kPostNorm : SublayerStyle::kResidualNorm;
  o.loss.mse_reduction = o.mse_reduction == "sum" ? MseReduction::kSum : MseReduction::kMean;
  o.model.validate();
  o.loss.validate();
  o.run.validate();
  o.run.threads = o.par.resolved();
  o.run.deterministic = o.par.deterministic;
  o.run.output_dir = o.out;

  std::optional<Checkpoint> resume;
  if (!o.resume.empty()) {
    resume = load_checkpoint(o.resume);
    if (!(resume->config == o.model)) {
      throw ConfigError("checkpoint model config differs from the flags given");
    }
  }
  ensure_dir(o.out);

  std::vector<EmbeddingMatrix> views;
  for (const auto& path : o.embeddings) views.push_back(read_embeddings(path));
  const LabelMap labels = read_labels(o.labels);
  auto queries = read_id_list(o.queries);

  Rng split = Rng(o.run.seed).fork(200);
  split.shuffle(std::span<std::string>(queries));
  const auto n_val = static_cast<std::size_t>(
      std::llround(o.run.validation_fraction * static_cast<double>(queries.size())));
  std::vector<std::string> val(queries.begin(), queries.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::string> tr(queries.begin() + static_cast<std::ptrdiff_t>(n_val), queries.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());

  SampleBuildReport built;
  const auto samples = build_training_samples(views, labels, tr, o.run.k_train, o.run.l, &built,
                                              o.run.threads);
  const auto val_samples =
      build_training_samples(views, labels, val, o.run.k_train, o.run.l, nullptr, o.run.threads);

  const TrainResult result =
      train(samples, val_samples, o.model, o.loss, o.optimizer, o.run, resume ? &*resume : nullptr);

  json epochs = json::array();
  TextTable t({"epoch", "L_C", "L_M", "total", "val mAP"});
  for (const auto& e : result.report.epochs) {
    epochs.push_back(e.to_json());
    t.add_row({std::to_string(e.epoch), fixed(e.contrastive, 4), fixed(e.mse, 4), fixed(e.total, 4),
               e.validation_map ? fixed(*e.validation_map, 4) : "-"});
  }
  json config = {{"model", o.model},
                 {"loss", o.loss},
                 {"optimizer", o.optimizer},
                 {"run", o.run},
                 {"embeddings", o.embeddings},
                 {"labels", o.labels},
                 {"queries", o.queries},
                 {"resume", o.resume}};
  write_json(fs::path(o.out) / "train_report.json",
             {{"command", "train"},
              {"config", config},
              {"train_queries", tr.size()},
              {"validation_queries", val.size()},
              {"samples_used", result.report.samples_used},
              {"samples_skipped_no_positive", result.report.samples_skipped},
              {"samples_skipped_missing_id", built.skipped_missing_id},
              {"dropped_steps", result.report.dropped_steps},
              {"steps", result.report.progress.step},
              {"total_steps", result.report.progress.total_steps},
              {"best_validation_map", result.report.progress.best_validation_map},
              {"epochs", epochs}});
  t.render(out);
  out << "samples used " << result.report.samples_used << ", skipped "
      << result.report.samples_skipped << "; steps " << result.report.progress.step << "/"
      << result.report.progress.total_steps << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// rerank

struct RerankOptions {
  std::string method;
  std::string rankings;
  std::string embeddings;
  std::string checkpoint;
  std::string out;
  std::size_t k = 512;
  std::size_t l = 0;  // 0: take the model's input length
  std::size_t nqe = 10;
  std::optional<double> alpha;
  std::size_t k_graph = 50;
  double cg_tol = 1e-8;
  std::size_t cg_max_iter = 100;
  std::vector<std::size_t> k_sweep;
  std::size_t repeats = 3;
  Parallelism par;
};

int cmd_rerank(const RerankOptions& o, std::ostream& out) {
  const EmbeddingMatrix emb = read_embeddings(o.embeddings);
  const RankingSet input = read_rankings(o.rankings);

  std::optional<Checkpoint> model;
  std::unique_ptr<DiffusionIndex> dfs;
  QeConfig qe;
  qe.nqe = o.nqe;
  json method_config;
  std::size_t l = o.l;
  double setup_ms = 0.0;
  if (o.method == "csa") {
    if (o.checkpoint.empty()) throw UsageError("method csa needs --checkpoint");
    model = load_checkpoint(o.checkpoint);
    if (l == 0) l = model->config.input_len;
    method_config = {{"checkpoint", o.checkpoint}, {"L", l}};
  } else if (o.method == "aqe" || o.method == "aqewd" || o.method == "alpha-qe") {
    qe.alpha = o.alpha.value_or(3.0);
    method_config = {{"nqe", qe.nqe}};
    if (o.method == "alpha-qe") method_config["alpha"] = qe.alpha;
  } else if (o.method == "dfs") {
    DiffusionConfig dc;
    dc.k_graph = o.k_graph;
    dc.alpha = o.alpha.value_or(0.99);
    dc.cg_tol = o.cg_tol;
    dc.cg_max_iter = o.cg_max_iter;
    const auto t0 = std::chrono::steady_clock::now();
    dfs = std::make_unique<DiffusionIndex>(emb, dc, o.par.resolved());
    setup_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    method_config = {{"k_graph", dc.k_graph},
                     {"alpha", dc.alpha},
                     {"cg_tol", dc.cg_tol},
                     {"cg_max_iter", dc.cg_max_iter}};
  } else {
    throw UsageError("unknown method '" + o.method + "' (csa, aqe, aqewd, alpha-qe, dfs)");
  }

  auto run_one = [&](const RankingList& r, std::size_t k) -> RerankResult {
    if (model) return csa_rerank(emb, r, model->params, model->config, k, l);
    if (dfs) return dfs->rerank(r, k);
    const QeMethod m = o.method == "aqe"     ? QeMethod::kAverage
                       : o.method == "aqewd" ? QeMethod::kWeightedDecay
                                             : QeMethod::kAlpha;
    return qe_rerank(m, emb, r, qe, k);
  };

  std::vector<RerankResult> results(input.lists.size());
  parallel_for(results.size(), o.par.resolved(), [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) results[i] = run_one(input.lists[i], o.k);
  });

  RankingSet output;
  output.method = input.method.empty() ? o.method : input.method + "+" + o.method;
  json latency = json::array();
  double latency_sum = 0.0;
  std::size_t not_converged = 0;
  for (auto& r : results) {
    latency.push_back({{"query", r.ranking.query_id}, {"ms", r.latency_ms}});
    latency_sum += r.latency_ms;
    if (!r.converged) ++not_converged;
    output.lists.push_back(std::move(r.ranking));
  }
  write_rankings(o.out, output);

  json config = {{"method", o.method},
                 {"rankings", o.rankings},
                 {"embeddings", o.embeddings},
                 {"K", o.k},
                 {"method_config", method_config}};
  write_json(with_suffix(o.out, ".report.json"), {{"command", "rerank"},
                                                   {"config", config},
                                                   {"query_count", results.size()},
                                                   {"not_converged", not_converged}});

  const double mean_ms = results.empty() ? 0.0 : latency_sum / static_cast<double>(results.size());
  json stats = {{"method", o.method},
                {"mean_ms", mean_ms},
                {"setup_ms", setup_ms},
                {"per_query", latency}};

  out << o.method << ": re-ranked " << results.size() << " queries, mean latency "
      << fixed(mean_ms, 3) << " ms\n";
  if (not_converged > 0) {
    out << "warning: conjugate gradient did not reach tolerance for " << not_converged
        << " queries\n";
  }

  if (!o.k_sweep.empty()) {
    TextTable t({"K", "mean ms"});
    json sweep = json::array();
    double previous = -1.0;
    bool monotone = true;
    for (std::size_t k : o.k_sweep) {
      std::vector<double> means;
      for (std::size_t rep = 0; rep < std::max<std::size_t>(o.repeats, 1); ++rep) {
        double sum = 0.0;
        for (const auto& r : input.lists) sum += run_one(r, k).latency_ms;
        means.push_back(input.lists.empty() ? 0.0 : sum / static_cast<double>(input.lists.size()));
      }
      std::sort(means.begin(), means.end());
      const double median = means[means.size() / 2];
      monotone = monotone && median >= previous;
      previous = median;
      sweep.push_back({{"K", k}, {"mean_ms", median}});
      t.add_row({std::to_string(k), fixed(median, 3)});
    }
    stats["k_sweep"] = sweep;
    stats["k_sweep_monotone"] = monotone;
    t.render(out);
    out << "latency non-decreasing in K: " << (monotone ? "yes" : "no") << "\n";
  }
  write_json(with_suffix(o.out, ".latency.json"), stats);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::vector<std::string> rankings;
  std::vector<std::string> latency;
  std::string truth;
  std::string out;
};

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  if (!o.latency.empty() && o.latency.size() != o.rankings.size()) {
    throw UsageError("--latency needs one file per --rankings file");
  }
  const GroundTruth truth = read_ground_truth(o.truth);
  json methods = json::array();
  TextTable t({"method", "mAP", "queries", "skipped", "latency ms"});
  std::string text;
  for (std::size_t i = 0; i < o.rankings.size(); ++i) {
    const RankingSet set = read_rankings(o.rankings[i]);
    EvalReport report = mean_average_precision(set.lists, truth, set.method);
    report.config = {{"rankings", o.rankings[i]}, {"truth", o.truth}};
    if (!o.latency.empty()) {
      std::ifstream in(o.latency[i]);
      if (!in) throw std::runtime_error("cannot open " + o.latency[i]);
      report.mean_latency_ms = json::parse(in).at("mean_ms").get<double>();
    }
    methods.push_back(report.to_json());
    t.add_row({report.method.empty() ? o.rankings[i] : report.method, fixed(report.map, 4),
               std::to_string(report.per_query.size()), std::to_string(report.skipped.size()),
               report.mean_latency_ms ? fixed(*report.mean_latency_ms, 3) : "-"});
  }
  std::ostringstream rendered;
  t.render(rendered);
  if (!o.out.empty()) {
    write_json(o.out, {{"command", "evaluate"},
                       {"config", {{"rankings", o.rankings}, {"truth", o.truth}}},
                       {"methods", methods}});
    write_text(with_suffix(o.out, ".txt"), rendered.str());
  }
  out << rendered.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectOptions {
  std::string checkpoint;
  bool as_json = false;
};

int cmd_inspect(const InspectOptions& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const json summary = checkpoint_summary(ckpt);
  if (o.as_json) {
    out << summary.dump(2) << '\n';
    return kExitOk;
  }
  out << "config: " << json(ckpt.config).dump() << '\n';
  out << "progress: epoch " << ckpt.progress.epoch << ", step " << ckpt.progress.step << "/"
      << ckpt.progress.total_steps << '\n';
  out << "parameters: " << ckpt.params.parameter_count() << " (analytic "
      << expected_parameter_count(ckpt.config) << ")\n";
  TextTable t({"tensor", "shape", "count"});
  ckpt.params.visit([&](const std::string& name, const MatrixF& m, TensorRole) {
    t.add_row({name, m.shape(), std::to_string(m.size())});
  });
  t.render(out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contextual similarity aggregation re-ranking toolkit", "csa"};
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic clustered dataset");
  g->add_option("--out", gen.out, "Output directory")->required()->check(kNonEmpty);
  g->add_option("--clusters", gen.spec.cluster_count)->capture_default_str();
  g->add_option("--items", gen.spec.items_per_cluster, "Items per cluster")->capture_default_str();
  g->add_option("--dim", gen.spec.dim)->capture_default_str();
  g->add_option("--sigma", gen.spec.noise_sigma, "Per-view noise level")->capture_default_str();
  g->add_option("--views", gen.spec.num_views)->capture_default_str();
  g->add_option("--distractors", gen.spec.distractor_count)->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();
  g->add_option("--eval-queries", gen.eval_queries)->capture_default_str();
  g->add_option("--train-queries", gen.train_queries, "0 = every non-evaluation item")
      ->capture_default_str();
  gen.par.add_to(g);

  SearchOptions search;
  auto* s = app.add_subcommand("search", "Exact kNN first-round retrieval");
  s->add_option("--embeddings", search.embeddings)->required()->check(kNonEmpty);
  s->add_option("--queries", search.queries, "Query id list")->required()->check(kNonEmpty);
  s->add_option("--out", search.out)->required()->check(kNonEmpty);
  s->add_option("--K", search.k, "Ranking depth")->capture_default_str()->check(CLI::PositiveNumber);
  search.par.add_to(s);

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train the re-ranking encoder");
  t->add_option("--embeddings", tr.embeddings, "One file per view")->required()->check(kNonEmpty);
  t->add_option("--labels", tr.labels)->required()->check(kNonEmpty);
  t->add_option("--queries", tr.queries, "Training query id list")->required()->check(kNonEmpty);
  t->add_option("--out", tr.out, "Output directory")->required()->check(kNonEmpty);
  t->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(kNonEmpty);
  t->add_option("--K", tr.run.k_train)->capture_default_str();
  t->add_option("--L", tr.run.l)->capture_default_str();
  t->add_option("--depth", tr.model.depth)->capture_default_str();
  t->add_option("--heads", tr.model.heads)->capture_default_str();
  t->add_option("--head-dim", tr.model.head_dim)->capture_default_str();
  t->add_option("--hidden", tr.model.hidden)->capture_default_str();
  t->add_option("--mse-hidden", tr.model.mse_head_hidden, "0 = --hidden")->capture_default_str();
  t->add_option("--ffn-mult", tr.model.ffn_mult)->capture_default_str();
  t->add_flag("--allow-hidden-mismatch", tr.model.allow_hidden_mismatch);
  t->add_flag("--post-norm", tr.post_norm, "LN(x + sublayer(x)) instead of x + LN(sublayer(x))");
  t->add_option("--tau", tr.loss.temperature)->capture_default_str();
  t->add_option("--lambda", tr.loss.lambda)->capture_default_str();
  t->add_option("--mse-reduction", tr.mse_reduction, "mean or sum over the K x L entries")
      ->check(CLI::IsMember({"mean", "sum"}))
      ->capture_default_str();
  t->add_option("--lr", tr.optimizer.learning_rate)->capture_default_str();
  t->add_option("--momentum", tr.optimizer.momentum)->capture_default_str();
  t->add_option("--weight-decay", tr.optimizer.weight_decay)->capture_default_str();
  t->add_option("--epochs", tr.run.epochs)->capture_default_str();
  t->add_option("--batch", tr.run.batch_size)->capture_default_str();
  t->add_option("--validation-fraction", tr.run.validation_fraction)->capture_default_str();
  t->add_option("--seed", tr.run.seed)->capture_default_str();
  tr.par.add_to(t);

  RerankOptions rr;
  auto* r = app.add_subcommand("rerank", "Re-rank a ranking file");
  r->add_option("--method", rr.method, "csa, aqe, aqewd, alpha-qe or dfs")->required();
  r->add_option("--rankings", rr.rankings)->required()->check(kNonEmpty);
  r->add_option("--embeddings", rr.embeddings)->required()->check(kNonEmpty);
  r->add_option("--out", rr.out)->required()->check(kNonEmpty);
  r->add_option("--checkpoint", rr.checkpoint)->check(kNonEmpty);
  r->add_option("--K", rr.k, "Re-ranked head length")->capture_default_str();
  r->add_option("--L", rr.l, "Anchors (default: the model's)");
  r->add_option("--nqe", rr.nqe)->capture_default_str();
  r->add_option("--alpha", rr.alpha, "alpha-qe exponent (3) or dfs damping (0.99)");
  r->add_option("--k-graph", rr.k_graph)->capture_default_str();
  r->add_option("--cg-tol", rr.cg_tol)->capture_default_str();
  r->add_option("--cg-max-iter", rr.cg_max_iter)->capture_default_str();
  r->add_option("--k-sweep", rr.k_sweep, "Also time these K values")->delimiter(',');
  r->add_option("--repeats", rr.repeats, "Timing repeats per swept K")->capture_default_str();
  rr.par.add_to(r);

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "mAP of one or more ranking files");
  e->add_option("--rankings", ev.rankings)->required()->check(kNonEmpty);
  e->add_option("--truth", ev.truth)->required()->check(kNonEmpty);
  e->add_option("--out", ev.out, "JSON report (a .txt table is written alongside)")
      ->check(kNonEmpty);
  e->add_option("--latency", ev.latency, "Latency files from rerank, one per ranking file")
      ->check(kNonEmpty);

  InspectOptions in;
  auto* i = app.add_subcommand("inspect", "Summarize a checkpoint");
  i->add_option("checkpoint", in.checkpoint)->required()->check(kNonEmpty);
  i->add_flag("--json", in.as_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*s) return cmd_search(search, out);
    if (*t) return cmd_train(tr, out);
    if (*r) return cmd_rerank(rr, out);
    if (*e) return cmd_evaluate(ev, out);
    if (*i) return cmd_inspect(in, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "invalid configuration: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"csa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace csa::cli
