#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "toder/core/rng.hpp"
#include "toder/core/se3.hpp"
#include "toder/evaluation/metrics.hpp"
#include "toder/geometry/losses.hpp"
#include "toder/models/checkpoint.hpp"
#include "toder/models/networks.hpp"
#include "toder/models/optim.hpp"
#include "toder/reconstruction/fusion.hpp"
#include "toder/synthcolon/dataset.hpp"
#include "toder/training/config.hpp"
#include "toder/training/data.hpp"

namespace toder::train {

using nn::Tensor;
using nn::Var;
using geometry::Vec6;
using geometry::photometric_warp_loss;
using geometry::consistency_warp_loss;

/// The seven networks of the method.
struct Networks {
  nn::Generator g_s;          // source style -> target style
  nn::Generator g_t;          // target style -> source style
  nn::Discriminator disc_s;   // real vs generated source-style images
  nn::Discriminator disc_t;   // real vs generated target-style images
  nn::DepthNet d_s;           // depth from source-style images
  nn::DepthNet d_t;           // depth from target-style images
  nn::TNet tnet;

  static Networks build(const TrainConfig& cfg) {
    auto seed_for = [&](const char* name) { return keyed_rng(cfg.seed, "training", std::string("init/") + name)(); };
    const nn::TranslatorSpec ts{cfg.height, cfg.width, cfg.widths.translator, cfg.widths.residual_blocks};
    const nn::DepthNetSpec ds{cfg.height,           cfg.width,           cfg.widths.depth,
                              cfg.widths.min_depth, cfg.widths.max_depth, cfg.widths.initial_depth};
    const nn::TNetSpec ps{cfg.height, cfg.width, cfg.widths.tnet};
    return Networks{nn::Generator(ts, seed_for("g_s")),       nn::Generator(ts, seed_for("g_t")),
                    nn::Discriminator(ts, seed_for("disc_s")), nn::Discriminator(ts, seed_for("disc_t")),
                    nn::DepthNet(ds, seed_for("d_s")),         nn::DepthNet(ds, seed_for("d_t")),
                    nn::TNet(ps, seed_for("tnet"))};
  }

  std::vector<std::pair<std::string, nn::Module*>> named() {
    return {{"g_s", &g_s}, {"g_t", &g_t}, {"disc_s", &disc_s}, {"disc_t", &disc_t},
            {"d_s", &d_s}, {"d_t", &d_t}, {"tnet", &tnet}};
  }

  /// Combined hash of the translator and discriminator parameter values.
  [[nodiscard]] std::string translator_hash() const {
    return nn::hex64(fnv1a(g_s.value_hash() + g_t.value_hash() + disc_s.value_hash() + disc_t.value_hash()));
  }

  void freeze_all() {
    for (auto& [name, m] : named()) m->set_trainable(false);
  }
};

struct LossRecord {
  int stage = 0;
  long step = 0;
  std::string term;  // "total" for the stage objective
  double weight = 0;
  float value = 0;
};

struct TrainState {
  TrainConfig config;
  Networks nets;
  long step = 0;
  int completed_stage = 0;
  bool translators_frozen = false;
  std::vector<LossRecord> history;

  explicit TrainState(const TrainConfig& cfg) : config(cfg), nets(Networks::build(cfg)) {}
};

using LogFn = std::function<void(const std::string&)>;

namespace detail {

/// Collects one step's weighted terms, builds the objective and records everything.
class StepTerms {
 public:
  void add(const std::string& name, double weight, const Var& value) {
    names_.push_back(name);
    terms_.emplace_back(static_cast<float>(weight), value);
  }

  [[nodiscard]] bool empty() const { return terms_.empty(); }

  /// Adds another objective's terms for recording under one combined total.
  void append(const StepTerms& other) {
    names_.insert(names_.end(), other.names_.begin(), other.names_.end());
    terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
  }

  Var objective() const { return nn::weighted_sum(terms_); }

  void record(TrainState& st, int stage, float total) const {
    for (size_t i = 0; i < terms_.size(); ++i)
      st.history.push_back({stage, st.step, names_[i], terms_[i].first, terms_[i].second->value.item()});
    st.history.push_back({stage, st.step, "total", 1.0, total});
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::pair<float, Var>> terms_;
};

inline std::vector<std::vector<size_t>> shuffled_batches(size_t n, int batch, Rng rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<size_t>(rng() % i)]);
  std::vector<std::vector<size_t>> out;
  for (size_t b = 0; b < n; b += static_cast<size_t>(batch))
    out.emplace_back(idx.begin() + static_cast<long>(b), idx.begin() + static_cast<long>(std::min(n, b + batch)));
  return out;
}

inline Rng epoch_rng(const TrainConfig& cfg, int stage, int epoch, const char* domain) {
  return keyed_rng(cfg.seed, "training", "stage" + std::to_string(stage) + "/" + domain, static_cast<uint64_t>(epoch));
}

/// Generator outputs for every image, computed once for frozen translators.
inline std::vector<Tensor> translate_all(const nn::Generator& g, const std::vector<Tensor>& images) {
  nn::NoGradGuard guard;
  std::vector<Tensor> out;
  out.reserve(images.size());
  constexpr size_t kChunk = 8;
  for (size_t b = 0; b < images.size(); b += kChunk) {
    std::vector<Tensor> parts(images.begin() + static_cast<long>(b),
                              images.begin() + static_cast<long>(std::min(images.size(), b + kChunk)));
    const Tensor y = g(nn::constant(nn::stack(parts)))->value;
    for (int i = 0; i < y.shape.n; ++i) out.push_back(y.slice(i, i + 1));
  }
  return out;
}

inline Tensor pick(const std::vector<Tensor>& v, const std::vector<size_t>& idx, size_t offset = 0) {
  std::vector<Tensor> parts;
  parts.reserve(idx.size());
  for (size_t i : idx) parts.push_back(v.at(i + offset));
  return nn::stack(parts);
}

/// Ground-truth a-to-b motions of source pairs as a (N,6,1,1) target.
inline Tensor relative_motion_targets(const DomainData& d, const std::vector<size_t>& idx, int stride) {
  Tensor t(nn::Shape{static_cast<int>(idx.size()), 6, 1, 1});
  for (size_t n = 0; n < idx.size(); ++n) {
    const SixDof v = sixdof_from_pose(relative_pose(d.poses.at(idx[n]), d.poses.at(idx[n] + stride)));
    for (int i = 0; i < 3; ++i) {
      t.at(static_cast<int>(n), i, 0, 0) = static_cast<float>(v.axis_angle[i]);
      t.at(static_cast<int>(n), 3 + i, 0, 0) = static_cast<float>(v.translation[i]);
    }
  }
  return t;
}

inline Vec6<double> pose_params(const Tensor& t, int n) {
  Vec6<double> p;
  for (int i = 0; i < 6; ++i) p[i] = t.at(n, i, 0, 0);
  return p;
}

inline void add_plane(Tensor& t, int n, const Plane<double>& g, double scale) {
  float* dst = t.channel(n, 0);
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) *dst++ += static_cast<float>(scale * g(r, c));
}

inline void add_pose(Tensor& t, int n, const Vec6<double>& g, double scale) {
  for (int i = 0; i < 6; ++i) t.at(n, i, 0, 0) += static_cast<float>(scale * g[i]);
}

inline std::vector<Plane<double>> image_planes(const Tensor& t, int n) {
  return {plane_from_tensor(t, n, 0), plane_from_tensor(t, n, 1), plane_from_tensor(t, n, 2)};
}

}  // namespace detail

struct GeometricTerms {
  Var photo;  // photometric loss, both directions averaged, mean over usable pairs
  Var cons;   // depth consistency a->b, mean over usable pairs
};

/// Evaluates the photometric and depth-consistency losses on a batch of frame pairs and
/// wires their hand-written gradients into the graph.
inline GeometricTerms geometric_terms(const Var& depth_a, const Var& depth_b, const Var& pose_ab, const Var& pose_ba,
                                      const Tensor& image_a, const Tensor& image_b, const CameraIntrinsics& k,
                                      const LossWeights& w, ConsistencyMode mode) {
  const nn::Shape s = depth_a->shape();
  const Mask all = Mask::Constant(s.h, s.w, true);
  Tensor pda(s), pdb(s), ppab(pose_ab->shape()), ppba(pose_ba->shape());
  Tensor cda(s), cdb(s), cpab(pose_ab->shape());
  double photo = 0, cons = 0;
  int n_photo = 0, n_cons = 0;
  for (int n = 0; n < s.n; ++n) {
    const Plane<double> da = plane_from_tensor(depth_a->value, n, 0), db = plane_from_tensor(depth_b->value, n, 0);
    const auto ia = detail::image_planes(image_a, n), ib = detail::image_planes(image_b, n);
    const Vec6<double> pab = detail::pose_params(pose_ab->value, n), pba = detail::pose_params(pose_ba->value, n);

    const auto fwd = photometric_warp_loss<double>(ia, ib, da, all, pab, k, w.lambda_i, w.lambda_s);
    const auto bwd = photometric_warp_loss<double>(ib, ia, db, all, pba, k, w.lambda_i, w.lambda_s);
    const int dirs = (fwd.n_valid > 0) + (bwd.n_valid > 0);
    if (dirs > 0) {
      const double f = 1.0 / dirs;
      if (fwd.n_valid > 0) {
        photo += f * fwd.value;
        detail::add_plane(pda, n, fwd.d_depth_a, f);
        detail::add_pose(ppab, n, fwd.d_pose, f);
      }
      if (bwd.n_valid > 0) {
        photo += f * bwd.value;
        detail::add_plane(pdb, n, bwd.d_depth_a, f);
        detail::add_pose(ppba, n, bwd.d_pose, f);
      }
      ++n_photo;
    }

    const auto c = consistency_warp_loss<double>(da, all, db, all, pab, k, mode);
    if (c.n_valid > 0) {
      cons += c.value;
      detail::add_plane(cda, n, c.d_depth_a, 1.0);
      detail::add_plane(cdb, n, c.d_depth_b, 1.0);
      detail::add_pose(cpab, n, c.d_pose, 1.0);
      ++n_cons;
    }
  }
  auto finish = [](double total, int count, std::vector<Tensor> grads, const std::vector<Var>& inputs) {
    if (count == 0) return nn::custom_scalar(0.0f, inputs, std::vector<Tensor>(inputs.size()));
    for (auto& g : grads) nn::detail::vec(g) /= static_cast<float>(count);
    return nn::custom_scalar(static_cast<float>(total / count), inputs, std::move(grads));
  };
  return {finish(photo, n_photo, {pda, pdb, ppab, ppba}, {depth_a, depth_b, pose_ab, pose_ba}),
          finish(cons, n_cons, {cda, cdb, cpab}, {depth_a, depth_b, pose_ab})};
}

// ---------------------------------------------------------------- stage 1

inline void stage1_train(TrainState& st, const DomainData& src, const DomainData& tgt, const LogFn& log = {}) {
  const StageConfig& cfg = st.config.stages[0];
  require(src.size() > 0 && tgt.size() > 0, "stage 1: both datasets must be nonempty");
  if (src.style == tgt.style)
    throw ValidationError("stage 1: source and target datasets share style tag " + to_string(src.style) +
                          "; there is no domain gap to bridge");
  Networks& nets = st.nets;
  nets.freeze_all();
  nets.g_s.set_trainable(true);
  nets.g_t.set_trainable(true);
  nn::Adam gen_opt(nn::parameters_of({&nets.g_s, &nets.g_t}), nn::AdamConfig{cfg.lr});
  nn::Adam disc_opt(nn::parameters_of({&nets.disc_s, &nets.disc_t}), nn::AdamConfig{cfg.lr});
  const LossWeights& w = cfg.weights;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto sb = detail::shuffled_batches(src.size(), cfg.batch_size, detail::epoch_rng(st.config, 1, epoch, "source"));
    const auto tb = detail::shuffled_batches(tgt.size(), cfg.batch_size, detail::epoch_rng(st.config, 1, epoch, "target"));
    const size_t steps = std::max(sb.size(), tb.size());
    double epoch_total = 0;
    for (size_t k = 0; k < steps; ++k) {
      const Var xs = nn::constant(detail::pick(src.images, sb[k % sb.size()]));
      const Var xt = nn::constant(detail::pick(tgt.images, tb[k % tb.size()]));

      // Translators against frozen discriminators.
      nets.disc_s.set_trainable(false);
      nets.disc_t.set_trainable(false);
      const Var fake_t = nets.g_s(xs), fake_s = nets.g_t(xt);
      detail::StepTerms gen;
      gen.add("gan_s2t", w.w_gan, nn::mse_to(nets.disc_t(fake_t), 1.0f));
      gen.add("gan_t2s", w.w_gan, nn::mse_to(nets.disc_s(fake_s), 1.0f));
      gen.add("cycle_s", w.w_cycle, nn::l1_loss(nets.g_t(fake_t), xs));
      gen.add("cycle_t", w.w_cycle, nn::l1_loss(nets.g_s(fake_s), xt));
      const Var gen_total = gen.objective();
      nn::backward(gen_total);
      gen_opt.step();

      // Discriminators on real images and detached translations.
      nets.disc_s.set_trainable(true);
      nets.disc_t.set_trainable(true);
      const Var fake_t_d = nn::constant(fake_t->value), fake_s_d = nn::constant(fake_s->value);
      detail::StepTerms disc;
      disc.add("disc_t_real", 0.5 * w.w_gan, nn::mse_to(nets.disc_t(xt), 1.0f));
      disc.add("disc_t_fake", 0.5 * w.w_gan, nn::mse_to(nets.disc_t(fake_t_d), 0.0f));
      disc.add("disc_s_real", 0.5 * w.w_gan, nn::mse_to(nets.disc_s(xs), 1.0f));
      disc.add("disc_s_fake", 0.5 * w.w_gan, nn::mse_to(nets.disc_s(fake_s_d), 0.0f));
      const Var disc_total = disc.objective();
      nn::backward(disc_total);
      disc_opt.step();

      const float total = static_cast<float>(static_cast<double>(gen_total->value.item()) + disc_total->value.item());
      gen.append(disc);
      gen.record(st, 1, total);
      epoch_total += total;
      ++st.step;
    }
    if (log) log("stage 1 epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) + " mean total " +
                 std::to_string(epoch_total / static_cast<double>(steps)));
  }
  nets.freeze_all();
  st.translators_frozen = !st.config.refine_translators;
  st.completed_stage = 1;
}

namespace detail {

/// A translated batch: cached outputs for frozen translators, a live graph otherwise.
inline Var translated(const nn::Generator& g, const std::vector<Tensor>& images, const std::vector<Tensor>& cache,
                      const std::vector<size_t>& idx, size_t offset, bool live) {
  if (live) return g(nn::constant(pick(images, idx, offset)));
  return nn::constant(pick(cache, idx, offset));
}

struct ScheduledBatch {
  bool source = true;
  std::vector<size_t> indices;
};

/// Alternates source and target batches; whichever list is longer finishes the epoch alone.
inline std::vector<ScheduledBatch> interleave(const std::vector<std::vector<size_t>>& sb,
                                              const std::vector<std::vector<size_t>>& tb) {
  std::vector<ScheduledBatch> out;
  for (size_t k = 0; k < std::max(sb.size(), tb.size()); ++k) {
    if (k < sb.size()) out.push_back({true, sb[k]});
    if (k < tb.size()) out.push_back({false, tb[k]});
  }
  return out;
}

inline std::vector<Var> trainable_params(const std::vector<const nn::Module*>& modules) {
  std::vector<Var> out;
  for (const auto* m : modules)
    for (const auto& p : m->parameters()) out.push_back(p.var);
  return out;
}

inline void log_epoch(const LogFn& log, int stage, int epoch, int epochs, double total, size_t steps) {
  if (!log) return;
  char buf[128];
  std::snprintf(buf, sizeof buf, "stage %d epoch %d/%d mean total %.6f", stage, epoch + 1, epochs,
                steps ? total / static_cast<double>(steps) : 0.0);
  log(buf);
}

}  // namespace detail

// ---------------------------------------------------------------- stage 2

inline void stage2_train(TrainState& st, const DomainData& src, const DomainData& tgt, const LogFn& log = {}) {
  const StageConfig& cfg = st.config.stages[1];
  require(st.completed_stage >= 1, "stage 2: the stage-1 translators are missing");
  if (!src.has_depth()) throw ValidationError("stage 2: source dataset '" + src.name + "' has no ground-truth depth");
  require(tgt.size() > 0, "stage 2: target dataset is empty");
  const bool bidirect = st.config.variant != Variant::no_bidirect;
  const bool live = st.config.refine_translators;
  Networks& nets = st.nets;
  nets.freeze_all();
  std::vector<const nn::Module*> trained{&nets.d_t};
  if (bidirect) trained.push_back(&nets.d_s);
  if (live) {
    trained.push_back(&nets.g_s);
    trained.push_back(&nets.g_t);
  }
  for (const auto* m : trained) const_cast<nn::Module*>(m)->set_trainable(true);
  nn::Adam opt(detail::trainable_params(trained), nn::AdamConfig{cfg.lr});

  std::vector<Tensor> src_as_target, tgt_as_source;
  if (!live) {
    src_as_target = detail::translate_all(nets.g_s, src.images);
    if (bidirect) tgt_as_source = detail::translate_all(nets.g_t, tgt.images);
  }
  const LossWeights& w = cfg.weights;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto sb = detail::shuffled_batches(src.size(), cfg.batch_size, detail::epoch_rng(st.config, 2, epoch, "source"));
    const auto tb = bidirect ? detail::shuffled_batches(tgt.size(), cfg.batch_size,
                                                        detail::epoch_rng(st.config, 2, epoch, "target"))
                             : std::vector<std::vector<size_t>>{};
    const auto schedule = detail::interleave(sb, tb);
    double epoch_total = 0;
    for (const auto& item : schedule) {
      const auto& b = item.indices;
      detail::StepTerms terms;
      if (item.source) {
        const Var depth = nn::constant(detail::pick(src.depths, b));
        const Tensor mask = detail::pick(src.depth_masks, b);
        const Var x_t = detail::translated(nets.g_s, src.images, src_as_target, b, 0, live);
        terms.add("sup_t", w.w_sup, nn::l1_loss(nets.d_t(x_t), depth, &mask));
        if (bidirect) terms.add("sup_s", w.w_sup, nn::l1_loss(nets.d_s(nn::constant(detail::pick(src.images, b))), depth, &mask));
      } else {
        const Var x = nn::constant(detail::pick(tgt.images, b));
        const Var x_s = detail::translated(nets.g_t, tgt.images, tgt_as_source, b, 0, live);
        terms.add("self", w.w_self, nn::l1_loss(nets.d_t(x), nets.d_s(x_s)));
      }
      const Var objective = terms.objective();
      nn::backward(objective);
      opt.step();
      terms.record(st, 2, objective->value.item());
      epoch_total += objective->value.item();
      ++st.step;
    }
    detail::log_epoch(log, 2, epoch, cfg.epochs, epoch_total, schedule.size());
  }
  nets.freeze_all();
  st.completed_stage = 2;
}

// ---------------------------------------------------------------- stage 3

inline void stage3_train(TrainState& st, const DomainData& src, const DomainData& tgt, const LogFn& log = {}) {
  const StageConfig& cfg = st.config.stages[2];
  require(st.completed_stage >= 2, "stage 3: the stage-2 depth networks are missing");
  if (!src.has_depth()) throw ValidationError("stage 3: source dataset '" + src.name + "' has no ground-truth depth");
  const bool bidirect = st.config.variant != Variant::no_bidirect;
  const bool use_tnet = st.config.variant != Variant::no_tnet;
  const bool live = st.config.refine_translators;
  const int stride = st.config.pair_stride;
  const LossWeights& w = cfg.weights;
  const bool pose_supervision = use_tnet && w.w_pose > 0;
  if (use_tnet) {
    if (!tgt.temporally_ordered())
      throw ValidationError("stage 3: target dataset '" + tgt.name + "' lacks temporal ordering");
    require(tgt.size() > static_cast<size_t>(stride), "stage 3: target dataset needs more frames than the pair stride");
  }
  if (pose_supervision) {
    if (!src.has_poses() || !src.temporally_ordered())
      throw ValidationError("stage 3: source dataset '" + src.name + "' needs ordered ground-truth poses");
    require(src.size() > static_cast<size_t>(stride), "stage 3: source dataset needs more frames than the pair stride");
  }

  Networks& nets = st.nets;
  nets.freeze_all();
  std::vector<const nn::Module*> trained{&nets.d_t};
  if (bidirect) trained.push_back(&nets.d_s);
  if (use_tnet) trained.push_back(&nets.tnet);
  if (live) {
    trained.push_back(&nets.g_s);
    trained.push_back(&nets.g_t);
  }
  for (const auto* m : trained) const_cast<nn::Module*>(m)->set_trainable(true);
  nn::Adam opt(detail::trainable_params(trained), nn::AdamConfig{cfg.lr});

  std::vector<Tensor> src_as_target, tgt_as_source;
  if (!live) {
    src_as_target = detail::translate_all(nets.g_s, src.images);
    if (bidirect) tgt_as_source = detail::translate_all(nets.g_t, tgt.images);
  }
  const size_t src_starts = src.size() - (pose_supervision ? stride : 0);
  const size_t tgt_starts = tgt.size() - (use_tnet ? stride : 0);
  const bool target_steps = use_tnet || bidirect;
  const CameraIntrinsics& k = tgt.intrinsics;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto sb = detail::shuffled_batches(src_starts, cfg.batch_size, detail::epoch_rng(st.config, 3, epoch, "source"));
    const auto tb = target_steps ? detail::shuffled_batches(tgt_starts, cfg.batch_size,
                                                            detail::epoch_rng(st.config, 3, epoch, "target"))
                                 : std::vector<std::vector<size_t>>{};
    const auto schedule = detail::interleave(sb, tb);
    double epoch_total = 0;
    for (const auto& item : schedule) {
      const auto& b = item.indices;
      detail::StepTerms terms;
      if (item.source) {
        const Var depth = nn::constant(detail::pick(src.depths, b));
        const Tensor mask = detail::pick(src.depth_masks, b);
        const Var xa_t = detail::translated(nets.g_s, src.images, src_as_target, b, 0, live);
        terms.add("sup_t", w.w_sup, nn::l1_loss(nets.d_t(xa_t), depth, &mask));
        if (bidirect) terms.add("sup_s", w.w_sup, nn::l1_loss(nets.d_s(nn::constant(detail::pick(src.images, b))), depth, &mask));
        if (pose_supervision) {
          const Var xb_t = detail::translated(nets.g_s, src.images, src_as_target, b, stride, live);
          const Var motion = nn::constant(detail::relative_motion_targets(src, b, stride));
          terms.add("pose", w.w_pose, nn::l1_loss(nets.tnet(xa_t, xb_t), motion));
        }
      } else {
        const Tensor ia = detail::pick(tgt.images, b);
        const Var xa = nn::constant(ia);
        const Var depth_a = nets.d_t(xa);
        if (use_tnet) {
          const Tensor ib = detail::pick(tgt.images, b, stride);
          const Var xb = nn::constant(ib);
          const Var depth_b = nets.d_t(xb);
          const GeometricTerms g = geometric_terms(depth_a, depth_b, nets.tnet(xa, xb), nets.tnet(xb, xa), ia, ib, k, w,
                                                   st.config.cons_mode);
          terms.add("photo", w.w_photo, g.photo);
          terms.add("cons", w.w_cons, g.cons);
        }
        if (bidirect) {
          const Var xa_s = detail::translated(nets.g_t, tgt.images, tgt_as_source, b, 0, live);
          terms.add("self", w.w_self, nn::l1_loss(depth_a, nets.d_s(xa_s)));
        }
      }
      const Var objective = terms.objective();
      nn::backward(objective);
      opt.step();
      terms.record(st, 3, objective->value.item());
      epoch_total += objective->value.item();
      ++st.step;
    }
    detail::log_epoch(log, 3, epoch, cfg.epochs, epoch_total, schedule.size());
  }
  nets.freeze_all();
  st.completed_stage = 3;
}

// ---------------------------------------------------------------- persistence

inline constexpr const char* kCheckpointFile = "checkpoint";
inline constexpr const char* kLossesFile = "losses.csv";

inline void write_losses_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,stage,term,weight,value\n";
  char buf[160];
  for (const auto& r : history) {
    if (r.term == "total")
      std::snprintf(buf, sizeof buf, "%ld,%d,total,,%.9g\n", r.step, r.stage, static_cast<double>(r.value));
    else
      std::snprintf(buf, sizeof buf, "%ld,%d,%s,%.9g,%.9g\n", r.step, r.stage, r.term.c_str(), r.weight,
                    static_cast<double>(r.value));
    out << buf;
  }
}

inline std::vector<LossRecord> read_losses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<LossRecord> out;
  std::string line;
  size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string step, stage, term, weight, value;
    if (!std::getline(row, step, ',') || !std::getline(row, stage, ',') || !std::getline(row, term, ',') ||
        !std::getline(row, weight, ',') || !std::getline(row, value))
      throw ParseError(path.string() + ":" + std::to_string(n + 1) + ": malformed loss row");
    try {
      out.push_back({std::stoi(stage), std::stol(step), term, weight.empty() ? 1.0 : std::stod(weight), std::stof(value)});
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(n + 1) + ": malformed loss row");
    }
  }
  return out;
}

/// Writes every network plus the counters and the loss history so far into `dir`.
inline void save_state(TrainState& st, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::Checkpoint ck;
  ck.stage = "stage" + std::to_string(st.completed_stage);
  ck.seed = st.config.seed;
  ck.step = st.step;
  ck.extra = {{"completed_stage", st.completed_stage},
              {"translators_frozen", st.translators_frozen},
              {"variant", to_string(st.config.variant)}};
  for (auto& [name, m] : st.nets.named()) ck.add_module(name, *m);
  nn::write_checkpoint(ck, dir / kCheckpointFile);
  write_losses_csv(st.history, dir / kLossesFile);
}

/// Restores a state written by save_state. Network shapes must match `cfg`.
inline TrainState load_state(const TrainConfig& cfg, const std::filesystem::path& dir) {
  TrainState st(cfg);
  const nn::Checkpoint ck = nn::read_checkpoint(dir / kCheckpointFile);
  for (auto& [name, m] : st.nets.named()) ck.load_module(name, *m);
  st.step = ck.step;
  st.completed_stage = ck.extra.at("completed_stage").get<int>();
  st.translators_frozen = ck.extra.at("translators_frozen").get<bool>();
  st.history = read_losses_csv(dir / kLossesFile);
  return st;
}

// ---------------------------------------------------------------- inference

struct DepthPrediction {
  DepthMap target_style;  // target-domain net on the image itself
  DepthMap source_style;  // source-domain net on the translated image; empty for one-directional runs
  recon::FusedDepth fused;
};

inline DepthPrediction predict_depth(const Networks& nets, const RgbImage& rgb, bool bidirect,
                                     recon::FuseMode mode = recon::FuseMode::average) {
  nn::NoGradGuard guard;
  const Var x = nn::constant(tensor_from_rgb(rgb));
  DepthPrediction p;
  p.target_style = depth_from_tensor(nets.d_t(x)->value);
  if (bidirect) {
    p.source_style = depth_from_tensor(nets.d_s(nets.g_t(x))->value);
    p.fused = recon::fuse_depths(p.target_style, p.source_style, mode);
  } else {
    p.fused.depth = p.target_style;
  }
  return p;
}

inline eval::DepthPredictor depth_predictor(const Networks& nets, Variant v,
                                            recon::FuseMode mode = recon::FuseMode::average) {
  const bool bidirect = v != Variant::no_bidirect;
  return [&nets, bidirect, mode](const Frame& f) { return predict_depth(nets, f.rgb, bidirect, mode).fused.depth; };
}

// ---------------------------------------------------------------- orchestration

inline nlohmann::json config_json(const TrainConfig& c) {
  nlohmann::json j{{"seed", c.seed},
                   {"height", c.height},
                   {"width", c.width},
                   {"variant", to_string(c.variant)},
                   {"cons_mode", to_string(c.cons_mode)},
                   {"refine_translators", c.refine_translators},
                   {"pair_stride", c.pair_stride},
                   {"widths",
                    {{"depth", c.widths.depth},
                     {"translator", c.widths.translator},
                     {"residual_blocks", c.widths.residual_blocks},
                     {"tnet", c.widths.tnet}}}};
  for (const auto& s : c.stages) {
    const auto& w = s.weights;
    j["stage" + std::to_string(s.stage)] = {
        {"epochs", s.epochs},
        {"lr", s.lr},
        {"batch_size", s.batch_size},
        {"weights",
         {{"lambda_i", w.lambda_i}, {"lambda_s", w.lambda_s}, {"w_photo", w.w_photo}, {"w_cons", w.w_cons},
          {"w_gan", w.w_gan}, {"w_cycle", w.w_cycle}, {"w_sup", w.w_sup}, {"w_self", w.w_self}, {"w_pose", w.w_pose}}}};
  }
  return j;
}

struct RunPaths {
  std::filesystem::path source;   // dataset directory (index + splits), labeled
  std::filesystem::path target;   // dataset directory, unlabeled for training; test splits evaluated
  std::filesystem::path run_dir;
};

struct RunOptions {
  /// Start after this stage using its checkpoint (0 trains from scratch).
  int resume_stage = 0;
  /// Run directory holding that checkpoint; defaults to the run's own directory.
  std::filesystem::path resume_dir;
  bool evaluate = true;
  eval::MetricOptions metrics;
  recon::FuseMode fuse = recon::FuseMode::average;
  LogFn log;
};

struct RunResult {
  TrainState state;
  nlohmann::json report;
};

inline std::filesystem::path stage_dir(const std::filesystem::path& run_dir, int stage) {
  return run_dir / ("stage" + std::to_string(stage));
}

/// Stages 1 to 3 with a checkpoint after each, losses.csv, and report.json with the
/// held-out evaluation on the target test splits.
inline RunResult run_all(const TrainConfig& config, const RunPaths& paths, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  TrainConfig cfg = config;
  cfg.sync();
  cfg.validate();
  require(opt.resume_stage >= 0 && opt.resume_stage <= 3, "resume stage must be 0..3");
  fs::create_directories(paths.run_dir);
  auto say = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };

  const auto src_splits = synthcolon::load_dataset_splits(paths.source);
  const auto tgt_splits = synthcolon::load_dataset_splits(paths.target);
  const DomainData src = load_domain(src_splits.front());
  const DomainData tgt = load_domain(tgt_splits.front(), LoadOptions{false, false});
  for (const DomainData* d : {&src, &tgt})
    if (d->intrinsics.height != cfg.height || d->intrinsics.width != cfg.width)
      throw ValidationError("dataset '" + d->name + "' is " + std::to_string(d->intrinsics.width) + "x" +
                            std::to_string(d->intrinsics.height) + " but the run expects " +
                            std::to_string(cfg.width) + "x" + std::to_string(cfg.height));

  std::optional<TrainState> state;
  if (opt.resume_stage > 0) {
    const fs::path from = stage_dir(opt.resume_dir.empty() ? paths.run_dir : opt.resume_dir, opt.resume_stage);
    state.emplace(load_state(cfg, from));
    require(state->completed_stage == opt.resume_stage,
            "checkpoint in " + from.string() + " does not close stage " + std::to_string(opt.resume_stage));
    say("resumed after stage " + std::to_string(opt.resume_stage) + " from " + from.string());
  } else {
    state.emplace(cfg);
  }
  TrainState& st = *state;

  nlohmann::json stages = nlohmann::json::array();
  using Stage = void (*)(TrainState&, const DomainData&, const DomainData&, const LogFn&);
  const Stage run_stage[3] = {stage1_train, stage2_train, stage3_train};
  for (int s = opt.resume_stage + 1; s <= 3; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string before = st.nets.translator_hash();
    try {
      run_stage[s - 1](st, src, tgt, opt.log);
    } catch (const ValidationError& e) {
      throw ValidationError("stage " + std::to_string(s) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("stage " + std::to_string(s) + ": " + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_state(st, stage_dir(paths.run_dir, s));
    write_losses_csv(st.history, paths.run_dir / kLossesFile);
    stages.push_back({{"stage", s},
                      {"seconds", seconds},
                      {"steps", st.step},
                      {"translators_before", before},
                      {"translators_after", st.nets.translator_hash()}});
    say("stage " + std::to_string(s) + " done in " + std::to_string(seconds) + " s");
  }

  nlohmann::json report{{"config", config_json(cfg)}, {"stages", stages}};
  report["variant"] = to_string(cfg.variant);
  report["seed"] = cfg.seed;
  if (opt.evaluate && tgt_splits.size() > 1) {
    const std::vector<DatasetManifest> tests(tgt_splits.begin() + 1, tgt_splits.end());
    const auto r = eval::evaluate_testsets(depth_predictor(st.nets, cfg.variant, opt.fuse), tests, opt.metrics);
    report["evaluation"] = eval::to_json(r);
    std::ofstream csv(paths.run_dir / "frame_metrics.csv");
    csv << eval::frames_csv(r);
    say("held-out abs_rel " + std::to_string(r.mean.abs_rel));
  }
  std::ofstream(paths.run_dir / "report.json") << report.dump(2) << '\n';
  return {std::move(st), std::move(report)};
}

}  // namespace toder::train
