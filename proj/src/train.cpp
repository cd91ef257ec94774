#include "gateadapt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "gateadapt/errors.hpp"
#include "gateadapt/losses.hpp"
#include "gateadapt/rng.hpp"

namespace gateadapt {

namespace {

// fixed stream ids deriving phase rngs from the config seed
constexpr std::uint64_t kStreamShuffle = 1;
constexpr std::uint64_t kStreamAug = 2;
constexpr std::uint64_t kStreamTrainPairs = 3;
constexpr std::uint64_t kStreamValPairs = 4;
constexpr std::uint64_t kStreamRealBatch = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<SampleRef> all_refs(const std::vector<Sequence>& split) {
  std::vector<SampleRef> refs;
  for (int s = 0; s < static_cast<int>(split.size()); ++s)
    for (int i = 0; i < static_cast<int>(split[static_cast<std::size_t>(s)].samples.size()); ++i)
      refs.push_back({s, i});
  return refs;
}

void shuffle_refs(std::vector<SampleRef>& refs, Rng& rng) {
  for (std::size_t i = refs.size(); i > 1; --i)
    std::swap(refs[i - 1], refs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
}

// mean pose loss over a split in eval mode, batched
double eval_pose_loss(const ModelParams& params,
                      const std::vector<Sequence>& split, int batch_size) {
  const std::vector<SampleRef> refs = all_refs(split);
  if (refs.empty()) throw DataEmpty("empty validation split");
  double sum = 0.0;
  std::size_t done = 0;
  while (done < refs.size()) {
    const std::size_t nb = std::min<std::size_t>(
        static_cast<std::size_t>(batch_size), refs.size() - done);
    const std::vector<SampleRef> chunk(refs.begin() + static_cast<std::ptrdiff_t>(done),
                                       refs.begin() + static_cast<std::ptrdiff_t>(done + nb));
    const ForwardResult r = forward_eval(params, make_batch(split, chunk));
    sum += pose_loss(r.out, gt_of(split, chunk)).value * static_cast<double>(nb);
    done += nb;
  }
  return sum / static_cast<double>(refs.size());
}

Tensor rows_of(const Tensor& out, std::int64_t begin, std::int64_t count) {
  const std::int64_t width = out.dim(1);
  Tensor t({count, width});
  std::copy(out.data.begin() + begin * width,
            out.data.begin() + (begin + count) * width, t.data.begin());
  return t;
}

}  // namespace

TrainConfig TrainConfig::pretrain_defaults() {
  TrainConfig c;
  c.epochs = 100;
  c.lr = 1e-3;
  return c;
}
TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.epochs = 100;
  c.lr = 1e-6;
  return c;
}
TrainConfig TrainConfig::desk_pretrain() {
  TrainConfig c = pretrain_defaults();
  c.epochs = 20;
  return c;
}
TrainConfig TrainConfig::desk_finetune() {
  TrainConfig c = finetune_defaults();
  c.epochs = 30;
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigInvalid("epochs must be >= 1");
  if (batch_size < 1) throw ConfigInvalid("batch size must be >= 1");
  if (!(lr > 0.0)) throw ConfigInvalid("learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigInvalid("weight decay must be >= 0");
  if (checkpoint_every < 0) throw ConfigInvalid("checkpoint cadence must be >= 0");
}

void PairSamplerConfig::validate() const {
  if (pairs_per_epoch < 1) throw ConfigInvalid("pairs per epoch must be >= 1");
  if (strategy == Strategy::kMaxGapBounded && !(max_gap_s > 0.0))
    throw ConfigInvalid("max temporal gap must be positive");
}

std::vector<SamplePair> sample_pairs(const std::vector<Sequence>& split,
                                     const PairSamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  // sequences need two samples to form a pair; selection is weighted by length
  std::vector<int> eligible;
  std::vector<int> cumulative;  // running total of eligible sample counts
  int total = 0;
  for (int s = 0; s < static_cast<int>(split.size()); ++s) {
    const int n = static_cast<int>(split[static_cast<std::size_t>(s)].samples.size());
    if (n >= 2) {
      eligible.push_back(s);
      total += n;
      cumulative.push_back(total);
    }
  }
  if (total == 0) throw DataEmpty("no sequence offers a sample pair");

  std::vector<SamplePair> pairs;
  pairs.reserve(static_cast<std::size_t>(cfg.pairs_per_epoch));
  int failures = 0;
  while (static_cast<int>(pairs.size()) < cfg.pairs_per_epoch) {
    const int pick = rng.uniform_int(total);
    const std::size_t which = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
        cumulative.begin());
    const int s = eligible[which];
    const Sequence& seq = split[static_cast<std::size_t>(s)];
    const int n = static_cast<int>(seq.samples.size());
    const int i = rng.uniform_int(n);

    int j = -1;
    if (cfg.strategy == PairSamplerConfig::Strategy::kRandomInSequence) {
      j = rng.uniform_int(n - 1);
      if (j >= i) ++j;
    } else {
      // timestamps are sorted: binary-search the admissible window around i
      const double ti = seq.samples[static_cast<std::size_t>(i)].time;
      auto time_less = [](const Sample& a, double t) { return a.time < t; };
      const int lo = static_cast<int>(
          std::lower_bound(seq.samples.begin(), seq.samples.end(),
                           ti - cfg.max_gap_s, time_less) -
          seq.samples.begin());
      int hi = i;
      while (hi + 1 < n &&
             seq.samples[static_cast<std::size_t>(hi + 1)].time <= ti + cfg.max_gap_s)
        ++hi;
      const int window = hi - lo;  // candidates excluding i itself
      if (window < 1) {
        if (++failures >= 1000)
          throw DataEmpty("no sample pairs within the temporal gap");
        continue;
      }
      j = lo + rng.uniform_int(window + 1);
      if (j == i) continue;  // re-draw; keeps the distribution uniform
    }
    failures = 0;
    pairs.push_back({s, i, j});
  }
  return pairs;
}

Tensor make_batch(const std::vector<Sequence>& split,
                  const std::vector<SampleRef>& refs,
                  const DomainConfig* augment, Rng* rng) {
  if (refs.empty()) throw DataEmpty("empty batch request");
  if (augment != nullptr && rng == nullptr)
    throw ConfigInvalid("augmentation requires an rng");
  const Sequence& first = split.at(static_cast<std::size_t>(refs.front().seq));
  const int h = first.height, w = first.width;
  Tensor x({static_cast<std::int64_t>(refs.size()), 1, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const Sequence& seq = split.at(static_cast<std::size_t>(refs[r].seq));
    if (seq.width != w || seq.height != h)
      throw ShapeMismatch("mixed frame sizes in one batch");
    Image img = seq.image(static_cast<std::size_t>(refs[r].idx));
    if (augment != nullptr) img = apply_augmentations(img, *augment, *rng);
    std::copy(img.pixels.begin(), img.pixels.end(), x.data.begin() + static_cast<std::ptrdiff_t>(r * plane));
  }
  return x;
}

std::vector<Pose> gt_of(const std::vector<Sequence>& split,
                        const std::vector<SampleRef>& refs) {
  std::vector<Pose> gt;
  gt.reserve(refs.size());
  for (const SampleRef& r : refs) {
    const Sample& s = split.at(static_cast<std::size_t>(r.seq))
                          .samples.at(static_cast<std::size_t>(r.idx));
    if (!s.gt_gate) throw DataEmpty("sample carries no ground-truth label");
    gt.push_back(*s.gt_gate);
  }
  return gt;
}

std::vector<Pose> odom_of(const std::vector<Sequence>& split,
                          const std::vector<SampleRef>& refs) {
  std::vector<Pose> odom;
  odom.reserve(refs.size());
  for (const SampleRef& r : refs)
    odom.push_back(split.at(static_cast<std::size_t>(r.seq))
                       .samples.at(static_cast<std::size_t>(r.idx))
                       .odom);
  return odom;
}

TrainResult pretrain(const TrainConfig& cfg, const ModelParams& init,
                     const std::vector<Sequence>& sim_train,
                     const std::vector<Sequence>& sim_val,
                     const CheckpointHook& hook) {
  cfg.validate();
  std::vector<SampleRef> refs = all_refs(sim_train);
  if (refs.empty()) throw DataEmpty("empty pretraining split");
  if (all_refs(sim_val).empty()) throw DataEmpty("empty validation split");

  ModelParams params = init;
  const AdamWConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AdamWState opt;
  Rng shuffle_rng(splitmix64_at(cfg.seed, kStreamShuffle));
  Rng aug_rng(splitmix64_at(cfg.seed, kStreamAug));
  const DomainConfig aug = DomainConfig::half_strength(DomainConfig::real_domain());

  TrainResult result;
  result.best = params;
  double best_val = std::numeric_limits<double>::infinity();
  const auto t0 = Clock::now();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_refs(refs, shuffle_rng);
    double train_sum = 0.0;
    for (std::size_t done = 0; done < refs.size();) {
      const std::size_t nb = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), refs.size() - done);
      const std::vector<SampleRef> chunk(
          refs.begin() + static_cast<std::ptrdiff_t>(done),
          refs.begin() + static_cast<std::ptrdiff_t>(done + nb));
      ForwardResult r = forward(
          params,
          make_batch(sim_train, chunk, cfg.augment ? &aug : nullptr, &aug_rng),
          Mode::kTrain);
      const PoseLossResult pl = pose_loss(r.out, gt_of(sim_train, chunk));
      const std::vector<double> grad = backward(r.tape, pl.grad);
      adamw_step(params.values, grad, opt, acfg);
      train_sum += pl.value * static_cast<double>(nb);
      done += nb;
    }
    const double val = eval_pose_loss(params, sim_val, cfg.batch_size);
    result.curves.push_back({epoch, train_sum / static_cast<double>(refs.size()),
                             val, seconds_since(t0)});
    if (val < best_val) {
      best_val = val;
      result.best = params;
      result.best_epoch = epoch;
    }
    if (hook && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      hook(epoch, params);
  }
  return result;
}

namespace {

// pairs -> [first..., second...] refs, so one stacked forward serves both
void split_pair_refs(const std::vector<SamplePair>& pairs,
                     std::vector<SampleRef>& refs1, std::vector<SampleRef>& refs2,
                     std::vector<SampleRef>& stacked) {
  refs1.clear();
  refs2.clear();
  stacked.clear();
  for (const SamplePair& p : pairs) refs1.push_back({p.seq, p.first});
  for (const SamplePair& p : pairs) refs2.push_back({p.seq, p.second});
  stacked = refs1;
  stacked.insert(stacked.end(), refs2.begin(), refs2.end());
}

}  // namespace

TrainResult finetune_sc(const TrainConfig& cfg, const ModelParams& start,
                        const std::vector<Sequence>& real_train,
                        const std::vector<Sequence>& real_val,
                        const PairSamplerConfig& sampler,
                        const CheckpointHook& hook) {
  cfg.validate();
  sampler.validate();

  Rng pair_rng(splitmix64_at(cfg.seed, kStreamTrainPairs));
  Rng val_rng(splitmix64_at(cfg.seed, kStreamValPairs));
  // frozen validation pair set: per-epoch selection values stay comparable
  const std::vector<SamplePair> val_pairs = sample_pairs(real_val, sampler, val_rng);

  ModelParams params = start;
  const AdamWConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AdamWState opt;

  auto sc_value = [&](const ModelParams& p, const std::vector<SamplePair>& pairs) {
    double sum = 0.0;
    int used = 0;
    std::size_t done = 0;
    while (done < pairs.size()) {
      const std::size_t nb = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), pairs.size() - done);
      const std::vector<SamplePair> chunk(
          pairs.begin() + static_cast<std::ptrdiff_t>(done),
          pairs.begin() + static_cast<std::ptrdiff_t>(done + nb));
      std::vector<SampleRef> r1, r2, stacked;
      split_pair_refs(chunk, r1, r2, stacked);
      const ForwardResult fr = forward_eval(p, make_batch(real_val, stacked));
      const std::int64_t b = static_cast<std::int64_t>(nb);
      const ScBatchResult sc = state_consistency_loss(
          rows_of(fr.out, 0, b), rows_of(fr.out, b, b), odom_of(real_val, r1),
          odom_of(real_val, r2));
      sum += sc.value * sc.used_pairs;
      used += sc.used_pairs;
      done += nb;
    }
    if (used == 0)
      throw AllPairsDegenerate("every validation pair decoded degenerate");
    return sum / used;
  };

  TrainResult result;
  result.best = params;
  double best_val = std::numeric_limits<double>::infinity();
  const auto t0 = Clock::now();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<SamplePair> pairs = sample_pairs(real_train, sampler, pair_rng);
    double train_sum = 0.0;
    int train_used = 0;
    for (std::size_t done = 0; done < pairs.size();) {
      const std::size_t nb = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), pairs.size() - done);
      const std::vector<SamplePair> chunk(
          pairs.begin() + static_cast<std::ptrdiff_t>(done),
          pairs.begin() + static_cast<std::ptrdiff_t>(done + nb));
      std::vector<SampleRef> r1, r2, stacked;
      split_pair_refs(chunk, r1, r2, stacked);
      ForwardResult fr =
          forward(params, make_batch(real_train, stacked), Mode::kTrain);
      const std::int64_t b = static_cast<std::int64_t>(nb);
      const ScBatchResult sc = state_consistency_loss(
          rows_of(fr.out, 0, b), rows_of(fr.out, b, b), odom_of(real_train, r1),
          odom_of(real_train, r2));
      done += nb;
      if (sc.used_pairs == 0) continue;  // nothing to learn from this batch
      Tensor out_grad({2 * b, 9});
      std::copy(sc.grad1.data.begin(), sc.grad1.data.end(), out_grad.data.begin());
      std::copy(sc.grad2.data.begin(), sc.grad2.data.end(),
                out_grad.data.begin() + b * 9);
      const std::vector<double> grad = backward(fr.tape, out_grad);
      adamw_step(params.values, grad, opt, acfg);
      train_sum += sc.value * sc.used_pairs;
      train_used += sc.used_pairs;
    }
    if (train_used == 0)
      throw AllPairsDegenerate("every training pair decoded degenerate");
    const double val = sc_value(params, val_pairs);
    result.curves.push_back(
        {epoch, train_sum / train_used, val, seconds_since(t0)});
    if (val < best_val) {
      best_val = val;
      result.best = params;
      result.best_epoch = epoch;
    }
    if (hook && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      hook(epoch, params);
  }
  return result;
}

PoseVector9 mean_predictor(const std::vector<Pose>& labels) {
  if (labels.empty()) throw DataEmpty("mean predictor needs labels");
  Vec3 t = Vec3::Zero();
  Vec6 r = Vec6::Zero();
  for (const Pose& p : labels) {
    t += p.t;
    r += rot_to_6d(p.rot).v;
  }
  t /= static_cast<double>(labels.size());
  r /= static_cast<double>(labels.size());
  Rot6D mean_r6;
  mean_r6.v = r;
  const Rotation rot = rot_from_6d(mean_r6);  // chordal mean, re-orthonormalized
  PoseVector9 out;
  out.v.head<3>() = t;
  out.v.tail<6>() = rot_to_6d(rot).v;
  return out;
}

void DaConfig::validate() const {
  if (lambda_mmd < 0.0 || lambda_w < 0.0)
    throw ConfigInvalid("alignment weights must be >= 0");
  for (double b : bandwidths)
    if (!(b > 0.0)) throw ConfigInvalid("bandwidths must be positive");
}

DaResult train_da_baseline(const TrainConfig& cfg, const DaConfig& da,
                           const ModelParams& init,
                           const std::vector<Sequence>& sim_train,
                           const std::vector<Sequence>& real_train,
                           const ModelParams* pretrained_a) {
  cfg.validate();
  da.validate();
  if (all_refs(sim_train).empty()) throw DataEmpty("empty sim training split");
  if (all_refs(real_train).empty()) throw DataEmpty("empty real training split");

  const std::vector<SampleRef> real_refs = all_refs(real_train);
  const DomainConfig aug = DomainConfig::half_strength(DomainConfig::real_domain());
  const AdamWConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

  // Both streams replay the same derived rng streams, so with the alignment
  // terms disabled stream B walks exactly stream A's trajectory.
  auto run_stream = [&](const ModelParams* align_to,
                        std::vector<EpochStats>* curves) -> ModelParams {
    ModelParams p = init;
    AdamWState opt;
    std::vector<double> affine;  // [scales..., shifts...] for weight tying
    AdamWState affine_opt;
    if (align_to != nullptr) {
      const int layers = weight_layer_count(p.layout);
      affine.assign(2 * static_cast<std::size_t>(layers), 0.0);
      std::fill(affine.begin(), affine.begin() + layers, 1.0);
    }
    Rng shuffle_rng(splitmix64_at(cfg.seed, kStreamShuffle));
    Rng aug_rng(splitmix64_at(cfg.seed, kStreamAug));
    Rng real_rng(splitmix64_at(cfg.seed, kStreamRealBatch));
    std::vector<SampleRef> refs = all_refs(sim_train);
    const auto t0 = Clock::now();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      shuffle_refs(refs, shuffle_rng);
      double epoch_sum = 0.0;
      for (std::size_t done = 0; done < refs.size();) {
        const std::size_t nb = std::min<std::size_t>(
            static_cast<std::size_t>(cfg.batch_size), refs.size() - done);
        const std::vector<SampleRef> chunk(
            refs.begin() + static_cast<std::ptrdiff_t>(done),
            refs.begin() + static_cast<std::ptrdiff_t>(done + nb));
        done += nb;

        const Tensor x = make_batch(
            sim_train, chunk, cfg.augment ? &aug : nullptr, &aug_rng);
        ForwardResult fr = forward(p, x, Mode::kTrain);
        const PoseLossResult pl = pose_loss(fr.out, gt_of(sim_train, chunk));
        std::vector<double> grad = backward(fr.tape, pl.grad);
        double total = pl.value;

        if (align_to != nullptr && da.lambda_mmd != 0.0) {
          std::vector<SampleRef> rchunk(nb);
          for (SampleRef& r : rchunk)
            r = real_refs[static_cast<std::size_t>(
                real_rng.uniform_int(static_cast<int>(real_refs.size())))];
          ForwardResult fb = forward(p, make_batch(real_train, rchunk), Mode::kTrain);
          const ForwardResult fa = forward_eval(*align_to, x);
          const std::vector<double> bw =
              da.bandwidths.empty()
                  ? mmd_default_bandwidths(fb.hidden_features, fa.hidden_features)
                  : da.bandwidths;
          const MmdResult mmd =
              mmd_loss(fb.hidden_features, fa.hidden_features, bw);
          Tensor scaled = mmd.grad_src;
          for (double& g : scaled.data) g *= da.lambda_mmd;
          const Tensor zero({static_cast<std::int64_t>(nb), 9});
          const std::vector<double> gb = backward(fb.tape, zero, &scaled);
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gb[i];
          total += da.lambda_mmd * mmd.value;
        }

        if (align_to != nullptr && da.lambda_w != 0.0) {
          const int layers = weight_layer_count(p.layout);
          const std::vector<double> scales(affine.begin(), affine.begin() + layers);
          const std::vector<double> shifts(affine.begin() + layers, affine.end());
          const WeightDependenceResult wd =
              weight_dependence_loss(*align_to, p, scales, shifts);
          for (std::size_t i = 0; i < grad.size(); ++i)
            grad[i] += da.lambda_w * wd.grad_b[i];
          std::vector<double> agrad(affine.size());
          for (int l = 0; l < layers; ++l) {
            agrad[static_cast<std::size_t>(l)] = da.lambda_w * wd.grad_scale[static_cast<std::size_t>(l)];
            agrad[static_cast<std::size_t>(l + layers)] =
                da.lambda_w * wd.grad_shift[static_cast<std::size_t>(l)];
          }
          adamw_step(affine, agrad, affine_opt, acfg);
          total += da.lambda_w * wd.value;
        }

        adamw_step(p.values, grad, opt, acfg);
        epoch_sum += total * static_cast<double>(nb);
      }
      if (curves != nullptr)
        curves->push_back({epoch,
                           epoch_sum / static_cast<double>(refs.size()),
                           std::numeric_limits<double>::quiet_NaN(),
                           seconds_since(t0)});
    }
    return p;
  };

  DaResult result;
  result.stream_a =
      pretrained_a != nullptr ? *pretrained_a : run_stream(nullptr, nullptr);
  result.stream_b = run_stream(&result.stream_a, &result.curves);
  return result;
}

ModelParams run_zero_shot(const ModelParams& pretrained) { return pretrained; }

void write_curves_csv(const std::string& path,
                      const std::vector<EpochStats>& curves) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write curves: " + path);
  f << "epoch,train_loss,val_loss,wall_seconds\n";
  char buf[64];
  auto field = [&](double v) -> std::string {
    if (std::isnan(v)) return "";
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const EpochStats& s : curves)
    f << s.epoch << ',' << field(s.train_loss) << ',' << field(s.val_loss)
      << ',' << field(s.wall_seconds) << '\n';
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace gateadapt
