// SPDX-License-Identifier: Apache-2.0
#include "csa/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "csa/parallel.hpp"
#include "csa/rng.hpp"

namespace csa {

void TrainRunConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (k_train < 2) throw ConfigError("train: K must be >= 2");
  if (l < 1) throw ConfigError("train: L must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation fraction must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const TrainRunConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"k_train", c.k_train},
       {"l", c.l},
       {"validation_fraction", c.validation_fraction},
       {"threads", c.threads},
       {"deterministic", c.deterministic}};
}

void from_json(const nlohmann::json& j, TrainRunConfig& c) {
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.k_train = j.at("k_train").get<std::size_t>();
  c.l = j.at("l").get<std::size_t>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.threads = j.value("threads", std::size_t{1});
  c.deterministic = j.value("deterministic", false);
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"temperature", c.temperature},
       {"lambda", c.lambda},
       {"mse_reduction", c.mse_reduction == MseReduction::kSum ? "sum" : "mean"}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  c.temperature = j.at("temperature").get<double>();
  c.lambda = j.at("lambda").get<double>();
  const auto reduction = j.value("mse_reduction", std::string("mean"));
  if (reduction != "sum" && reduction != "mean") {
    throw ConfigError("unknown mse_reduction '" + reduction + "'");
  }
  c.mse_reduction = reduction == "sum" ? MseReduction::kSum : MseReduction::kMean;
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"momentum", c.momentum}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.momentum = j.at("momentum").get<double>();
}

nlohmann::json LossRecord::to_json() const {
  return {{"type", "step"},      {"epoch", epoch}, {"step", step},   {"lr", lr},
          {"L_C", contrastive}, {"L_M", mse},     {"total", total}, {"applied", applied}};
}

nlohmann::json EpochSummary::to_json() const {
  nlohmann::json j = {{"type", "epoch"}, {"epoch", epoch}, {"L_C", contrastive},
                      {"L_M", mse},      {"total", total}};
  j["validation_map"] = validation_map ? nlohmann::json(*validation_map) : nlohmann::json();
  return j;
}

std::optional<LossBreakdown> sample_loss(const EncoderParams<float>& params,
                                         const EncoderConfig& config, const LossConfig& loss,
                                         const TrainingSample& sample, EncoderParams<float>* grads,
                                         double grad_scale) {
  const AffinitySequence& seq = sample.sequence;
  EncoderTape<float> pass(params, config);
  const MatrixF& refined = pass.forward(seq.values, seq.row_valid);
  auto lc = contrastive_loss(refined, sample.relevant, seq.row_valid, loss.temperature);
  if (!lc) return std::nullopt;
  const MatrixF& recon = pass.reconstruct();
  auto lm = mse_loss(seq.values, recon, seq.row_valid, loss.mse_reduction);

  LossBreakdown out;
  out.contrastive = lc->loss;
  out.mse = lm.loss;
  out.total = total_loss(lc->loss, lm.loss, loss.lambda);
  out.counted = 1;
  if (grads != nullptr) {
    MatrixF d_refined = scale(lc->gradient, static_cast<float>(grad_scale));
    MatrixF d_recon = scale(lm.gradient, static_cast<float>(grad_scale * loss.lambda));
    pass.backward(&d_refined, &d_recon);
    pass.accumulate_gradients(*grads);
  }
  return out;
}

LossBreakdown evaluate_loss(const EncoderParams<float>& params, const EncoderConfig& config,
                            const LossConfig& loss, std::span<const TrainingSample> samples) {
  LossBreakdown sum;
  for (const auto& s : samples) {
    if (auto l = sample_loss(params, config, loss, s)) {
      sum.contrastive += l->contrastive;
      sum.mse += l->mse;
      sum.total += l->total;
      ++sum.counted;
    }
  }
  if (sum.counted > 0) {
    const double n = static_cast<double>(sum.counted);
    sum.contrastive /= n;
    sum.mse /= n;
    sum.total /= n;
  }
  return sum;
}

double sample_average_precision(std::span<const double> scores, const TrainingSample& sample) {
  const auto& seq = sample.sequence;
  if (sample.total_positives == 0) return 0.0;
  std::vector<std::size_t> order;
  for (std::size_t i = 1; i < seq.valid_rows(); ++i) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (sample.relevant[order[r]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(sample.total_positives);
}

double validation_map(const EncoderParams<float>& params, const EncoderConfig& config,
                      std::span<const TrainingSample> samples) {
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& s : samples) {
    if (s.total_positives == 0) continue;
    EncoderTape<float> pass(params, config);
    const MatrixF& refined = pass.forward(s.sequence.values, s.sequence.row_valid);
    std::vector<double> scores(refined.rows(), 0.0);
    for (std::size_t i = 1; i < s.sequence.valid_rows(); ++i) scores[i] = row_cosine(refined, 0, i);
    sum += sample_average_precision(scores, s);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

namespace {

void add_into(EncoderParams<float>& dst, const EncoderParams<float>& src) {
  std::vector<const MatrixF*> parts;
  src.visit([&](const std::string&, const MatrixF& m, TensorRole) { parts.push_back(&m); });
  std::size_t i = 0;
  dst.visit([&](const std::string&, MatrixF& m, TensorRole) { add_inplace(m, *parts[i++]); });
}

class LossLog {
 public:
  LossLog(const std::filesystem::path& dir, bool append) {
    if (dir.empty()) return;
    out_.open(dir / "loss_log.ndjson", append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot write " + (dir / "loss_log.ndjson").string());
  }

  void write(const nlohmann::json& record) {
    if (!out_.is_open()) return;
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("failed writing loss log");
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainResult train(std::span<const TrainingSample> samples,
                  std::span<const TrainingSample> validation, const EncoderConfig& config,
                  const LossConfig& loss, const OptimizerConfig& optimizer,
                  const TrainRunConfig& run, const Checkpoint* resume) {
  config.validate();
  loss.validate();
  run.validate();
  if (config.input_len != run.l) {
    throw ConfigError("train: model input length " + std::to_string(config.input_len) +
                      " differs from L=" + std::to_string(run.l));
  }

  TrainResult result;
  TrainReport& report = result.report;
  std::vector<const TrainingSample*> usable;
  for (const auto& s : samples) {
    if (positives_after_query(s) > 0) {
      usable.push_back(&s);
    } else {
      ++report.samples_skipped;
    }
  }
  report.samples_used = usable.size();
  if (usable.empty()) {
    throw std::runtime_error("train: none of the " + std::to_string(samples.size()) +
                             " samples has a relevant candidate after the query; check labels "
                             "and K");
  }

  const std::size_t batches = (usable.size() + run.batch_size - 1) / run.batch_size;
  const std::uint64_t total_steps = static_cast<std::uint64_t>(run.epochs) * batches;
  const Rng root(run.seed);

  OptimizerState opt;
  std::uint64_t first_epoch = 0;
  if (resume != nullptr) {
    if (!(resume->config == config)) throw ConfigError("train: checkpoint config differs");
    result.params = resume->params;
    opt = make_optimizer_state(result.params, optimizer, total_steps);
    if (resume->momentum) opt.momentum_buffers = *resume->momentum;
    opt.step = resume->progress.step;
    first_epoch = resume->progress.epoch;
    report.progress = resume->progress;
  } else {
    Rng init = root.fork(0);
    result.params = init_params<float>(config, init);
    opt = make_optimizer_state(result.params, optimizer, total_steps);
  }
  report.progress.total_steps = total_steps;

  const std::size_t threads = resolve_threads(run.threads, run.deterministic);
  LossLog log(run.output_dir, resume != nullptr);
  nlohmann::json run_json = {{"run", run}, {"loss", loss}, {"optimizer", optimizer}};

  auto save = [&](const std::string& name) {
    if (run.output_dir.empty()) return;
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.params = result.params;
    ckpt.momentum = opt.momentum_buffers;
    ckpt.progress = report.progress;
    ckpt.run_config = run_json;
    save_checkpoint(run.output_dir / name, ckpt);
  };

  std::vector<std::size_t> order(usable.size());
  for (std::uint64_t epoch = first_epoch; epoch < run.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = root.fork(1 + epoch);
    shuffle.shuffle(std::span<std::size_t>(order));

    EpochSummary summary;
    summary.epoch = epoch + 1;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * run.batch_size;
      const std::size_t end = std::min(begin + run.batch_size, order.size());
      const std::size_t count = end - begin;
      const double scale = 1.0 / static_cast<double>(count);

      const std::size_t chunks = chunk_count(count, threads);
      std::vector<EncoderParams<float>> grads(chunks, result.params.zeros_like());
      std::vector<LossBreakdown> sums(chunks);
      parallel_for(count, threads, [&](std::size_t lo, std::size_t hi, std::size_t chunk) {
        for (std::size_t i = lo; i < hi; ++i) {
          const auto l = sample_loss(result.params, config, loss, *usable[order[begin + i]],
                                     &grads[chunk], scale);
          sums[chunk].contrastive += l->contrastive;
          sums[chunk].mse += l->mse;
          sums[chunk].total += l->total;
        }
      });
      for (std::size_t c = 1; c < chunks; ++c) {
        add_into(grads[0], grads[c]);
        sums[0].contrastive += sums[c].contrastive;
        sums[0].mse += sums[c].mse;
        sums[0].total += sums[c].total;
      }

      LossRecord rec;
      rec.epoch = epoch + 1;
      rec.step = opt.step + 1;
      rec.lr = cosine_lr(opt.step, total_steps, optimizer.learning_rate);
      rec.contrastive = sums[0].contrastive * scale;
      rec.mse = sums[0].mse * scale;
      rec.total = sums[0].total * scale;
      rec.applied = sgd_step(result.params, grads[0], opt, rec.lr);
      if (!rec.applied) {
        ++report.dropped_steps;
        ++opt.step;
      }
      summary.contrastive += sums[0].contrastive;
      summary.mse += sums[0].mse;
      summary.total += sums[0].total;
      log.write(rec.to_json());
      report.steps.push_back(rec);
    }
    const double n = static_cast<double>(usable.size());
    summary.contrastive /= n;
    summary.mse /= n;
    summary.total /= n;
    if (!validation.empty()) summary.validation_map = validation_map(result.params, config, validation);

    report.progress.epoch = epoch + 1;
    report.progress.step = opt.step;
    const bool improved =
        summary.validation_map && *summary.validation_map > report.progress.best_validation_map;
    if (improved) report.progress.best_validation_map = *summary.validation_map;
    log.write(summary.to_json());
    report.epochs.push_back(summary);
    save("last.ckpt");
    if (improved || (validation.empty() && epoch + 1 == run.epochs)) save("best.ckpt");
  }
  result.momentum = opt.momentum_buffers;
  return result;
}

}  // namespace csa
