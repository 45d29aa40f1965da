#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tmap/checkpoint.hpp"
#include "tmap/labeling.hpp"
#include "tmap/model.hpp"
#include "tmap/rng.hpp"

namespace tmap {

// Warmup-then-decay schedule: linear ramp over warmup_steps, then inverse
// square root of the step count, the whole thing scaled by d_model^-1/2.
inline double lr_schedule(uint64_t step, uint32_t d_model, uint32_t warmup_steps) {
  if (step == 0) throw ContractError("lr_schedule steps are 1-based");
  if (d_model == 0 || warmup_steps == 0) {
    throw ConfigError("lr_schedule needs d_model > 0 and warmup_steps > 0");
  }
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup_steps);
  return (1.0 / std::sqrt(static_cast<double>(d_model))) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

struct TrainConfig {
  uint32_t epochs = 30;
  uint32_t batch_size = 64;
  uint64_t seed = 1;
  uint32_t warmup_steps = 2000;
  double holdout_frac = 0.1;  // trailing fraction of the dataset, by position
  uint32_t eval_cap = 256;    // holdout samples scored per epoch
  std::string checkpoint_dir;  // empty disables per-epoch checkpoints
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 1.0;  // global gradient norm ceiling, 0 disables

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (holdout_frac < 0.0 || holdout_frac >= 1.0) {
      throw ConfigError("holdout fraction must lie in [0, 1)");
    }
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || epsilon <= 0) {
      throw ConfigError("invalid Adam constants");
    }
  }
};

struct EpochStats {
  uint32_t epoch = 0;  // 1-based
  double mean_loss = 0;
  std::optional<double> holdout_token_accuracy;
  double wall_seconds = 0;
  uint64_t optimizer_steps = 0;  // cumulative
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  size_t train_samples = 0;
  size_t holdout_samples = 0;
  uint64_t total_steps = 0;
};

// Adam with bias correction. Moment buffers are laid out parallel to the
// for_each_param enumeration, so "the i-th tensor" means the same thing to
// the optimizer, the gradient accumulators, and the checkpoint writer.
template <class S>
class Adam {
 public:
  Adam(double beta1, double beta2, double epsilon)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  uint64_t steps() const { return t_; }

  void step(const std::vector<Mat<S>*>& params, const std::vector<Mat<S>>& grads, double lr) {
    if (params.size() != grads.size()) {
      throw ContractError("Adam: parameter/gradient count mismatch");
    }
    if (m_.empty()) {
      for (const Mat<S>* p : params) {
        m_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
        v_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    S c1 = static_cast<S>(1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_))));
    S c2 = static_cast<S>(1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_))));
    S eps = static_cast<S>(epsilon_);
    S rate = static_cast<S>(lr);
    for (size_t i = 0; i < params.size(); ++i) {
      const Mat<S>& g = grads[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseProduct(g);
      params[i]->array() -=
          rate * (m_[i].array() * c1) / ((v_[i].array() * c2).sqrt() + eps);
    }
  }

 private:
  double beta1_, beta2_, epsilon_;
  uint64_t t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

// Decoder-side view of one label sequence under teacher forcing. All rows are
// padded to k_max + 1 so every sample presents the same shape; the mask keeps
// PAD rows out of the loss.
struct TeacherRows {
  std::vector<int> input;        // BEGIN, labels..., PAD...
  std::vector<int> targets;      // labels..., END, PAD...
  std::vector<uint8_t> mask;     // 1 for real rows
  size_t real_rows = 0;          // label count + 1 (the END row)
};

inline TeacherRows teacher_rows(const std::vector<uint32_t>& target_with_end,
                                const ModelConfig& cfg) {
  if (target_with_end.empty() || target_with_end.back() != cfg.end_id()) {
    throw ContractError("label sequence must end with the END sentinel");
  }
  size_t k = target_with_end.size() - 1;
  if (k > cfg.k_max) throw ContractError("label sequence longer than k_max");
  size_t rows = static_cast<size_t>(cfg.k_max) + 1;
  TeacherRows tr;
  tr.input.assign(rows, static_cast<int>(cfg.pad_id()));
  tr.targets.assign(rows, static_cast<int>(cfg.pad_id()));
  tr.mask.assign(rows, 0);
  tr.input[0] = static_cast<int>(cfg.begin_id());
  for (size_t i = 0; i < k; ++i) {
    tr.input[i + 1] = static_cast<int>(target_with_end[i]);
    tr.targets[i] = static_cast<int>(target_with_end[i]);
  }
  tr.targets[k] = static_cast<int>(cfg.end_id());
  for (size_t i = 0; i <= k; ++i) tr.mask[i] = 1;
  tr.real_rows = k + 1;
  return tr;
}

inline std::vector<int> to_int_tokens(const std::vector<uint8_t>& bits) {
  return std::vector<int>(bits.begin(), bits.end());
}

namespace detail {

// Teacher-forced argmax accuracy over unmasked target rows.
template <class S>
std::pair<uint64_t, uint64_t> count_token_hits(const ModelParams<S>& params,
                                               const ModelConfig& cfg, const Mat<S>& pe,
                                               const Sample& sample) {
  Tape<S> tape;
  BoundModel<S> bound = bind_params(tape, params);
  TeacherRows tr = teacher_rows(sample.target, cfg);
  std::vector<int> input = to_int_tokens(sample.input_bits);
  Var<S> logits = forward_logits(tape, bound, cfg, pe, input, tr.input);
  const Mat<S>& z = logits.value();
  uint64_t hits = 0, total = 0;
  for (size_t r = 0; r < tr.mask.size(); ++r) {
    if (!tr.mask[r]) continue;
    Eigen::Index best;
    z.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
    hits += static_cast<int>(best) == tr.targets[r] ? 1 : 0;
    ++total;
  }
  return {hits, total};
}

}  // namespace detail

// Called after each epoch with that epoch's stats and the live parameters;
// returning true stops training early (the finished epochs stay in the
// report). Lets callers run their own convergence checks without paying for
// the full epoch budget.
template <class S>
using EpochCallback = std::function<bool(const EpochStats&, const ModelParams<S>&)>;

// Trains a fresh model on the dataset. The trailing holdout_frac of samples
// (later trace positions) is held out and scored by teacher-forced token
// accuracy each epoch. Batches see the whole-batch mean loss over unmasked
// rows; gradients are clipped by global norm before each Adam step. Loss
// going non-finite raises DivergenceError naming the optimizer step.
template <class S>
std::pair<ModelParams<S>, TrainReport> train(const std::vector<Sample>& dataset,
                                             const ModelConfig& cfg, const AddressConfig& addr,
                                             uint32_t window, const TrainConfig& tc,
                                             std::ostream* log = nullptr,
                                             const EpochCallback<S>& on_epoch = {}) {
  cfg.validate();
  tc.validate();
  if (dataset.empty()) throw InputError("training dataset is empty");
  for (const Sample& s : dataset) {
    if (s.input_bits.size() != cfg.max_in_len) {
      throw InputError("sample input width " + std::to_string(s.input_bits.size()) +
                       " does not match model input length " + std::to_string(cfg.max_in_len));
    }
  }

  size_t n_hold = static_cast<size_t>(std::llround(tc.holdout_frac * dataset.size()));
  if (n_hold >= dataset.size()) n_hold = dataset.size() - 1;
  size_t n_train = dataset.size() - n_hold;

  Rng init_rng = Rng::substream(tc.seed, "init");
  Rng shuffle_rng = Rng::substream(tc.seed, "shuffle");
  ModelParams<S> params = init_params<S>(cfg, init_rng);

  TrainReport report;
  report.train_samples = n_train;
  report.holdout_samples = n_hold;
  if (tc.epochs == 0) return {std::move(params), report};

  Mat<S> pe = positional_encoding<S>(std::max(cfg.max_in_len, cfg.max_out_len), cfg.d_model);

  std::vector<Mat<S>*> param_ptrs;
  for_each_param(params, [&](const std::string&, Mat<S>& m) { param_ptrs.push_back(&m); });
  std::vector<Mat<S>> grads;
  for (Mat<S>* p : param_ptrs) grads.push_back(Mat<S>::Zero(p->rows(), p->cols()));

  Adam<S> adam(tc.beta1, tc.beta2, tc.epsilon);
  std::vector<size_t> order(n_train);
  for (size_t i = 0; i < n_train; ++i) order[i] = i;

  if (!tc.checkpoint_dir.empty()) {
    std::filesystem::create_directories(tc.checkpoint_dir);
  }

  for (uint32_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double epoch_loss_rows = 0;  // sum of per-row losses
    uint64_t epoch_rows = 0;

    for (size_t at = 0; at < n_train; at += tc.batch_size) {
      size_t batch_end = std::min(n_train, at + tc.batch_size);

      // Row counts are known without a forward pass; they weigh each sample's
      // mean loss so the batch optimizes the mean over all unmasked rows.
      uint64_t batch_rows = 0;
      for (size_t b = at; b < batch_end; ++b) {
        batch_rows += dataset[order[b]].target.size();
      }

      for (Mat<S>& g : grads) g.setZero();
      double batch_loss = 0;
      for (size_t b = at; b < batch_end; ++b) {
        const Sample& sample = dataset[order[b]];
        Tape<S> tape;
        BoundModel<S> bound = bind_params(tape, params);
        TeacherRows tr = teacher_rows(sample.target, cfg);
        std::vector<int> input = to_int_tokens(sample.input_bits);
        Var<S> logits = forward_logits(tape, bound, cfg, pe, input, tr.input);
        Var<S> loss = cross_entropy_rows(logits, tr.targets, tr.mask);
        double sample_loss = static_cast<double>(loss.value()(0, 0));
        batch_loss += sample_loss * static_cast<double>(tr.real_rows);
        tape.backward(loss, static_cast<S>(static_cast<double>(tr.real_rows) /
                                           static_cast<double>(batch_rows)));
        std::vector<const Var<S>*> leaves;
        for_each_param(bound, [&](const std::string&, const Var<S>& v) { leaves.push_back(&v); });
        for (size_t i = 0; i < leaves.size(); ++i) grads[i] += leaves[i]->grad();
      }

      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training diverged at optimizer step " +
                              std::to_string(adam.steps() + 1) + " (non-finite loss)");
      }
      epoch_loss_rows += batch_loss;
      epoch_rows += batch_rows;

      if (tc.clip_norm > 0) {
        double sq = 0;
        for (const Mat<S>& g : grads) sq += static_cast<double>(g.squaredNorm());
        double norm = std::sqrt(sq);
        if (norm > tc.clip_norm) {
          S f = static_cast<S>(tc.clip_norm / norm);
          for (Mat<S>& g : grads) g *= f;
        }
      }
      double lr = lr_schedule(adam.steps() + 1, cfg.d_model, tc.warmup_steps);
      adam.step(param_ptrs, grads, lr);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = epoch_rows ? epoch_loss_rows / static_cast<double>(epoch_rows) : 0.0;
    stats.optimizer_steps = adam.steps();

    if (n_hold > 0) {
      uint64_t hits = 0, total = 0;
      size_t evals = std::min<size_t>(n_hold, tc.eval_cap);
      for (size_t i = 0; i < evals; ++i) {
        auto [h, t] = detail::count_token_hits(params, cfg, pe, dataset[n_train + i]);
        hits += h;
        total += t;
      }
      stats.holdout_token_accuracy = total ? static_cast<double>(hits) / total : 0.0;
    }

    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(stats);
    report.total_steps = adam.steps();

    if (!tc.checkpoint_dir.empty()) {
      char name[32];
      snprintf(name, sizeof name, "epoch_%03u.ckpt", epoch);
      save_checkpoint(tc.checkpoint_dir + "/" + name, params, cfg, addr, window);
    }
    if (log) {
      *log << "epoch " << epoch << "/" << tc.epochs << "  loss " << stats.mean_loss;
      if (stats.holdout_token_accuracy) {
        *log << "  holdout-acc " << *stats.holdout_token_accuracy;
      }
      *log << "  (" << stats.wall_seconds << "s)\n";
    }
    if (on_epoch && on_epoch(stats, params)) break;
  }
  return {std::move(params), report};
}

}  // namespace tmap
