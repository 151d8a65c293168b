#include "cmgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <numeric>

#include "cmgan/error.hpp"

namespace cmgan {

Vec MappingStack::apply(const Vec& x) const {
  Vec cur = x;
  for (const auto& m : maps) cur = forward(m, cur);
  return cur;
}

std::vector<Vec> MappingStack::apply(const std::vector<Vec>& xs) const {
  std::vector<Vec> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(apply(x));
  return out;
}

MappingStack MappingStack::prefix(std::size_t n) const {
  if (n > maps.size()) fail(ErrorKind::InvalidArgument, "stack prefix longer than the stack");
  return MappingStack{base, std::vector<Mlp2>(maps.begin(), maps.begin() + static_cast<std::ptrdiff_t>(n))};
}

void MappingStack::validate() const {
  for (std::size_t i = 0; i < maps.size(); ++i) {
    maps[i].validate();
    if (i > 0 && maps[i - 1].output_dim() != maps[i].input_dim()) {
      fail(ErrorKind::DimMismatch, "stack map " + std::to_string(i) + " does not chain with its predecessor");
    }
  }
}

std::string_view step_kind_name(StepKind k) noexcept { return k == StepKind::Supervised ? "sup" : "trans"; }

namespace {

constexpr std::uint64_t kStreamValidation = 1;
constexpr std::uint64_t kStreamSteps = 1000;
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamBatches = 2;

std::size_t infer_dim(const std::vector<Vec>& xs, std::string_view what) {
  if (xs.empty()) fail(ErrorKind::EmptySplit, std::string(what) + " is empty");
  return static_cast<std::size_t>(xs.front().size());
}

Mlp2 make_mapper(const NetsConfig& nets, std::size_t in, std::size_t out, Rng& rng) {
  Mlp2Spec spec;
  spec.input_dim = in;
  spec.output_dim = out;
  spec.hidden_dim = nets.mapper_hidden ? nets.mapper_hidden : 2 * in;
  spec.hidden_activation = nets.mapper_activation;
  spec.output_activation = Activation::Linear;
  spec.residual = nets.mapper_residual && in == out;
  spec.output_init_scale = spec.residual ? nets.mapper_output_init_scale : 1.0;
  return make_mlp2(spec, rng);
}

Mlp2 make_discriminator(const NetsConfig& nets, std::size_t in, Rng& rng) {
  Mlp2Spec spec;
  spec.input_dim = in;
  spec.output_dim = 1;
  spec.hidden_dim = nets.disc_hidden ? nets.disc_hidden : 2 * in;
  spec.hidden_activation = nets.disc_activation;
  spec.output_activation = Activation::Sigmoid;
  return make_mlp2(spec, rng);
}

bool better(double candidate, double incumbent, bool higher_is_better) {
  return higher_is_better ? candidate > incumbent : candidate < incumbent;
}

void retain(TrainState& state, StepRecord& rec, RetainSide side, Mlp2 image_map, Mlp2 label_map) {
  rec.retained = side;
  if (side == RetainSide::Image) {
    state.image_stack.maps.push_back(std::move(image_map));
    rec.companion = std::move(label_map);
  } else {
    state.label_stack.maps.push_back(std::move(label_map));
    rec.companion = std::move(image_map);
  }
  rec.image_stack_len = state.image_stack.size();
  rec.label_stack_len = state.label_stack.size();
}

Rng step_rng(const TrainState& state, std::size_t step) { return Rng(state.seed).split(kStreamSteps + step); }

}  // namespace

ValidationSplit make_validation_split(const SeenData& seen, double fraction, Rng rng) {
  const std::size_t n = seen.images.size();
  if (n == 0) fail(ErrorKind::EmptySplit, "no seen images");
  if (seen.image_class.size() != n) fail(ErrorKind::DimMismatch, "seen image classes are not aligned");
  if (seen.labels.size() < 2) fail(ErrorKind::EmptySplit, "need at least two seen classes for negatives");
  if (!(fraction > 0.0 && fraction < 1.0)) fail(ErrorKind::InvalidArgument, "val_fraction must lie in (0, 1)");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_hold = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * n)), 1, n - 1);

  ValidationSplit split;
  split.holdout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  std::sort(split.train.begin(), split.train.end());

  const bool multi_class = std::any_of(seen.image_class.begin(), seen.image_class.end(),
                                       [&](std::size_t c) { return c != seen.image_class.front(); });
  if (!multi_class) fail(ErrorKind::EmptySplit, "seen images cover a single class");
  for (std::size_t i : split.holdout) {
    const std::size_t c = seen.image_class[i];
    std::size_t neg = rng.below(seen.labels.size() - 1);
    if (neg >= c) ++neg;
    split.neg_label.push_back(neg);
    std::size_t img = 0;
    do {
      img = rng.below(n);
    } while (seen.image_class[img] == c);
    split.neg_image.push_back(img);
  }
  return split;
}

double seen_validation(const TrainState& state, const SeenData& seen, const ValidationSplit& split, Margin margin) {
  if (split.holdout.empty()) fail(ErrorKind::EmptySplit, "empty validation holdout");
  const auto labels = state.label_stack.apply(seen.labels);
  std::vector<std::optional<Vec>> cache(seen.images.size());
  auto image = [&](std::size_t i) -> const Vec& {
    if (!cache[i]) cache[i] = state.image_stack.apply(seen.images[i]);
    return *cache[i];
  };
  double sum = 0.0;
  for (std::size_t k = 0; k < split.holdout.size(); ++k) {
    const std::size_t i = split.holdout[k];
    const Vec& v = image(i);
    const Vec& t = labels[seen.image_class[i]];
    sum += triplet_loss(v, t, labels[split.neg_label[k]], v, t, image(split.neg_image[k]), margin).value;
  }
  return sum / static_cast<double>(split.holdout.size());
}

UnsupSlice make_unsup_slice(const UnseenPool& pool, double fraction, Rng rng) {
  auto pick = [&](std::size_t n) {
    if (n < 2) fail(ErrorKind::EmptySplit, "unsupervised pools need at least two items");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * n)), 1, n - 1);
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
  };
  UnsupSlice s;
  s.images = pick(pool.images.size());
  s.texts = pick(pool.labels.size());
  return s;
}

double unsup_validation(const TrainState& state, const UnseenPool& pool, const UnsupSlice& slice) {
  if (slice.images.empty() || slice.texts.empty()) fail(ErrorKind::EmptySplit, "empty unsupervised slice");
  const auto n_img = static_cast<Eigen::Index>(slice.images.size());
  const auto n_txt = static_cast<Eigen::Index>(slice.texts.size());
  Matrix img(n_img, 0), txt(n_txt, 0);
  auto unit_rows = [](Matrix& m, const std::vector<Vec>& xs, const char* what) {
    m.resize(static_cast<Eigen::Index>(xs.size()), xs.front().size());
    for (std::size_t r = 0; r < xs.size(); ++r) {
      const double n = xs[r].norm();
      if (n == 0.0) fail(ErrorKind::ZeroVector, std::string("zero ") + what + " representation");
      m.row(static_cast<Eigen::Index>(r)) = xs[r].transpose() / n;
    }
  };
  std::vector<Vec> xs;
  for (std::size_t i : slice.images) xs.push_back(state.image_stack.apply(pool.images[i]));
  unit_rows(img, xs, "image");
  xs.clear();
  for (std::size_t j : slice.texts) xs.push_back(state.label_stack.apply(pool.labels[j]));
  unit_rows(txt, xs, "text");
  if (img.cols() != txt.cols()) fail(ErrorKind::DimMismatch, "image and text representations differ in length");
  const Matrix cos = img * txt.transpose();

  // Cross-domain similarity local scaling: each similarity is discounted by
  // the mean similarity of both ends to their nearest neighbours on the
  // other side, so a map that raises every cosine at once gains nothing.
  auto mean_top = [](std::vector<double> xs, std::size_t k) {
    k = std::min(k, xs.size());
    std::partial_sort(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end(), std::greater<>());
    return std::accumulate(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
  };
  Vec image_density(n_img), text_density(n_txt);
  for (Eigen::Index i = 0; i < n_img; ++i) {
    const Vec row = cos.row(i).transpose();
    image_density[i] = mean_top(std::vector<double>(row.data(), row.data() + n_txt), kCslsNeighbors);
  }
  for (Eigen::Index j = 0; j < n_txt; ++j) {
    const Vec col = cos.col(j);
    text_density[j] = mean_top(std::vector<double>(col.data(), col.data() + n_img), kCslsNeighbors);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n_img; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n_txt; ++j) best = std::max(best, 2.0 * cos(i, j) - text_density[j]);
    sum += best - image_density[i];
  }
  return sum / static_cast<double>(n_img);
}

TrainContext make_context(const RunConfig& cfg, Criterion criterion) {
  return TrainContext{cfg.nets, cfg.losses, cfg.trainer, std::move(criterion), {}, {}};
}

StepPlan supervised_plan(const TrainerConfig& cfg) {
  StepPlan p;
  p.kind = StepKind::Supervised;
  p.epochs = cfg.sup_epochs;
  p.batch_size = cfg.batch_size;
  return p;
}

StepPlan transductive_plan(const TrainerConfig& cfg) {
  StepPlan p;
  p.kind = StepKind::Transductive;
  p.epochs = cfg.trans_epochs;
  p.lambda_c_grid = cfg.lambda_c_grid;
  p.batch_size = cfg.batch_size;
  p.use_gan = cfg.use_gan;
  p.use_cycle = cfg.use_cycle;
  return p;
}

std::string format_log_line(const StepRecord& rec) {
  char lambda[32] = "-";
  if (rec.lambda_c) std::snprintf(lambda, sizeof lambda, "%g", *rec.lambda_c);
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%zu kind=%s lambda_c=%s val=%.6f", rec.step,
                std::string(step_kind_name(rec.kind)).c_str(), lambda, rec.validation);
  return buf;
}

void supervised_step(TrainState& state, const SeenData& seen, const std::vector<std::size_t>& train_indices,
                     const StepPlan& plan, const TrainContext& ctx) {
  if (plan.kind != StepKind::Supervised) fail(ErrorKind::InvalidArgument, "supervised_step needs a supervised plan");
  if (train_indices.empty() || seen.labels.empty()) fail(ErrorKind::EmptySplit, "no seen training images");
  if (seen.labels.size() < 2) fail(ErrorKind::EmptySplit, "need at least two seen classes for negatives");
  if (plan.batch_size == 0) fail(ErrorKind::InvalidArgument, "batch size must be positive");

  const std::size_t step = state.step_index() + 1;
  Rng rng = step_rng(state, step);
  Rng init_rng = rng.split(kStreamInit);
  Rng batch_rng = rng.split(kStreamBatches);

  // frozen snapshots of the current representations
  const std::vector<Vec> images = state.image_stack.apply(seen.images);
  const std::vector<Vec> labels = state.label_stack.apply(seen.labels);
  const std::size_t d_img = infer_dim(images, "seen images");
  const std::size_t d_lab = infer_dim(labels, "seen labels");
  if (ctx.hooks.frozen_begin) ctx.hooks.frozen_begin(images, labels);

  Mlp2 image_map = make_mapper(ctx.nets, d_img, d_lab, init_rng);  // T_k
  Mlp2 label_map = make_mapper(ctx.nets, d_lab, d_img, init_rng);  // V_k
  OptimState image_opt = make_optim_state(image_map, ctx.nets.mapper_optim);
  OptimState label_opt = make_optim_state(label_map, ctx.nets.mapper_optim);
  const Margin margin{ctx.losses.margin};

  const bool multi_class =
      std::any_of(train_indices.begin(), train_indices.end(),
                  [&](std::size_t i) { return seen.image_class[i] != seen.image_class[train_indices.front()]; });
  if (!multi_class) fail(ErrorKind::EmptySplit, "seen training images cover a single class");

  StepRecord rec;
  rec.step = step;
  rec.kind = StepKind::Supervised;
  std::vector<std::size_t> order = train_indices;
  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    batch_rng.shuffle(order);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
      const std::size_t end = std::min(order.size(), start + plan.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      Mlp2Grad g_image = Mlp2Grad::zeros_like(image_map);
      Mlp2Grad g_label = Mlp2Grad::zeros_like(label_map);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const std::size_t c = seen.image_class[i];
        std::size_t neg_label = batch_rng.below(labels.size() - 1);
        if (neg_label >= c) ++neg_label;
        std::size_t neg_image = 0;
        do {
          neg_image = train_indices[batch_rng.below(train_indices.size())];
        } while (seen.image_class[neg_image] == c);

        const auto tr_img = forward_trace(image_map, images[i]);
        const auto tr_lab = forward_trace(label_map, labels[c]);
        const auto terms = triplet_loss(tr_img.output, labels[c], labels[neg_label], images[i], tr_lab.output,
                                        images[neg_image], margin);
        epoch_sum += terms.value;
        if (terms.image_hinge > 0.0) backward_into(image_map, tr_img, terms.grad_tv * scale, g_image);
        if (terms.label_hinge > 0.0) backward_into(label_map, tr_lab, terms.grad_vt * scale, g_label);
      }
      optim_step(image_map, g_image, image_opt);
      optim_step(label_map, g_label, label_opt);
    }
    EpochLoss el;
    el.triplet = epoch_sum / static_cast<double>(order.size());
    el.total = el.triplet;
    rec.epochs.push_back(el);
  }
  if (ctx.hooks.frozen_end) ctx.hooks.frozen_end(images, labels);

  retain(state, rec, ctx.trainer.sup_retain, std::move(image_map), std::move(label_map));
  rec.validation = ctx.criterion.value(state);
  state.history.push_back(std::move(rec));
  if (ctx.log) ctx.log(format_log_line(state.history.back()));
  if (ctx.hooks.step_done) ctx.hooks.step_done(state);
}

namespace {

struct CycleGanBranch {
  Mlp2 image_map;  // T_k: images -> label space
  Mlp2 label_map;  // V_k: labels -> image space
  std::vector<EpochLoss> epochs;
};

// root mean squared distance to the centroid
double pool_rms(const std::vector<Vec>& xs) {
  Vec mean = Vec::Zero(xs.front().size());
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (const auto& x : xs) ss += (x - mean).squaredNorm();
  const double rms = std::sqrt(ss / static_cast<double>(xs.size()));
  return rms > 0.0 ? rms : 1.0;
}

CycleGanBranch train_cyclegan(const std::vector<Vec>& images, const std::vector<Vec>& labels, double lambda_c,
                              const StepPlan& plan, const TrainContext& ctx, Rng init_rng, Rng batch_rng) {
  const std::size_t d_img = infer_dim(images, "unseen images");
  const std::size_t d_lab = infer_dim(labels, "unseen labels");

  CycleGanBranch out;
  out.image_map = make_mapper(ctx.nets, d_img, d_lab, init_rng);
  out.label_map = make_mapper(ctx.nets, d_lab, d_img, init_rng);
  Mlp2 disc_text = make_discriminator(ctx.nets, d_lab, init_rng);   // D_T
  Mlp2 disc_image = make_discriminator(ctx.nets, d_img, init_rng);  // D_V
  Mlp2& T = out.image_map;
  Mlp2& V = out.label_map;
  OptimState opt_T = make_optim_state(T, ctx.nets.mapper_optim);
  OptimState opt_V = make_optim_state(V, ctx.nets.mapper_optim);
  OptimState opt_DT = make_optim_state(disc_text, ctx.nets.disc_optim);
  OptimState opt_DV = make_optim_state(disc_image, ctx.nets.disc_optim);

  const bool use_cycle = plan.use_cycle && lambda_c > 0.0;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    batch_rng.shuffle(order);
    EpochLoss acc;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
      const std::size_t end = std::min(order.size(), start + plan.batch_size);
      const std::size_t bs = end - start;
      std::vector<Vec> img_batch, lab_batch;
      img_batch.reserve(bs);
      lab_batch.reserve(bs);
      for (std::size_t b = start; b < end; ++b) img_batch.push_back(images[order[b]]);
      for (std::size_t b = 0; b < bs; ++b) lab_batch.push_back(labels[batch_rng.below(labels.size())]);

      // generator forward passes
      std::vector<ForwardTrace> tr_T, tr_V;
      std::vector<Vec> fake_text, fake_image;
      tr_T.reserve(bs);
      tr_V.reserve(bs);
      for (std::size_t b = 0; b < bs; ++b) {
        tr_T.push_back(forward_trace(T, img_batch[b]));
        fake_text.push_back(tr_T.back().output);
        tr_V.push_back(forward_trace(V, lab_batch[b]));
        fake_image.push_back(tr_V.back().output);
      }
      std::vector<Vec> up_T(bs, Vec::Zero(static_cast<Eigen::Index>(d_lab)));
      std::vector<Vec> up_V(bs, Vec::Zero(static_cast<Eigen::Index>(d_img)));

      // L_gan^v lives in the text space (D_T), L_gan^t in the image space (D_V)
      if (plan.use_gan) {
        GanTerms gv = gan_loss(disc_text, lab_batch, fake_text);
        GanTerms gt = gan_loss(disc_image, img_batch, fake_image);
        acc.gan_v += gv.value;
        acc.gan_t += gt.value;
        for (std::size_t b = 0; b < bs; ++b) {
          up_T[b] += gv.fake_grads[b];
          up_V[b] += gt.fake_grads[b];
        }
        optim_step(disc_text, gv.disc_grad, opt_DT);
        optim_step(disc_image, gt.disc_grad, opt_DV);
      }

      // cycle terms: T(V(t)) against t and V(T(v)) against v
      std::vector<ForwardTrace> tr_TV, tr_VT;
      std::vector<Vec> rec_text, rec_image;
      for (std::size_t b = 0; b < bs; ++b) {
        tr_TV.push_back(forward_trace(T, fake_image[b]));
        rec_text.push_back(tr_TV.back().output);
        tr_VT.push_back(forward_trace(V, fake_text[b]));
        rec_image.push_back(tr_VT.back().output);
      }
      const CycleTerms cyc = cycle_loss(lab_batch, rec_text, img_batch, rec_image, ctx.losses.cycle_norm);
      acc.cycle += cyc.value;

      Mlp2Grad g_T = Mlp2Grad::zeros_like(T);
      Mlp2Grad g_V = Mlp2Grad::zeros_like(V);
      if (use_cycle) {
        for (std::size_t b = 0; b < bs; ++b) {
          // text cycle: grad flows through T (outer) then V (inner)
          up_V[b] += backward_into(T, tr_TV[b], lambda_c * cyc.grad_t_recon[b], g_T);
          up_T[b] += backward_into(V, tr_VT[b], lambda_c * cyc.grad_v_recon[b], g_V);
        }
      }
      for (std::size_t b = 0; b < bs; ++b) {
        backward_into(T, tr_T[b], up_T[b], g_T);
        backward_into(V, tr_V[b], up_V[b], g_V);
      }
      optim_step(T, g_T, opt_T);
      optim_step(V, g_V, opt_V);
      ++n_batches;
    }
    if (n_batches > 0) {
      const double inv = 1.0 / static_cast<double>(n_batches);
      acc.gan_v *= inv;
      acc.gan_t *= inv;
      acc.cycle *= inv;
    }
    acc.total = acc.gan_v + acc.gan_t + lambda_c * acc.cycle;
    out.epochs.push_back(acc);
  }
  return out;
}

}  // namespace

void transductive_step(TrainState& state, const UnseenPool& pool, const StepPlan& plan, const TrainContext& ctx) {
  if (plan.kind != StepKind::Transductive) fail(ErrorKind::InvalidArgument, "transductive_step needs a transductive plan");
  if (pool.images.empty() || pool.labels.empty()) fail(ErrorKind::EmptySplit, "empty unseen pool");
  if (plan.lambda_c_grid.empty()) fail(ErrorKind::InvalidArgument, "empty lambda_c grid");
  if (plan.batch_size == 0) fail(ErrorKind::InvalidArgument, "batch size must be positive");

  const std::size_t step = state.step_index() + 1;
  Rng rng = step_rng(state, step);

  std::vector<Vec> images = state.image_stack.apply(pool.images);
  std::vector<Vec> labels = state.label_stack.apply(pool.labels);
  // Both pools are brought to unit RMS norm around their centroid; the
  // retained maps carry the factor as their input scale.
  double image_scale = 1.0, label_scale = 1.0;
  if (ctx.trainer.trans_standardize) {
    image_scale = 1.0 / pool_rms(images);
    label_scale = 1.0 / pool_rms(labels);
    for (auto& x : images) x *= image_scale;
    for (auto& x : labels) x *= label_scale;
  }
  if (ctx.hooks.frozen_begin) ctx.hooks.frozen_begin(images, labels);

  // Every grid branch starts from the same initialization and batch stream,
  // so branches differ only by lambda_c and can run in any order.
  std::optional<TrainState> best;
  StepRecord best_rec;
  std::vector<double> grid_validation;
  for (double lambda_c : plan.lambda_c_grid) {
    CycleGanBranch branch =
        train_cyclegan(images, labels, lambda_c, plan, ctx, rng.split(kStreamInit), rng.split(kStreamBatches));
    branch.image_map.input_scale = image_scale;
    branch.label_map.input_scale = label_scale;
    TrainState candidate = state;
    StepRecord rec;
    rec.step = step;
    rec.kind = StepKind::Transductive;
    rec.lambda_c = lambda_c;
    rec.epochs = std::move(branch.epochs);
    retain(candidate, rec, ctx.trainer.trans_retain, std::move(branch.image_map), std::move(branch.label_map));
    rec.validation = ctx.criterion.value(candidate);
    grid_validation.push_back(rec.validation);
    if (!best || better(rec.validation, best_rec.validation, ctx.criterion.higher_is_better)) {
      best = std::move(candidate);
      best_rec = std::move(rec);
    }
  }
  if (ctx.hooks.frozen_end) ctx.hooks.frozen_end(images, labels);

  best_rec.grid_validation = std::move(grid_validation);
  best->history = std::move(state.history);
  state = std::move(*best);
  state.history.push_back(std::move(best_rec));
  if (ctx.log) ctx.log(format_log_line(state.history.back()));
  if (ctx.hooks.step_done) ctx.hooks.step_done(state);
}

TrainState train_full(const SeenData& seen, const UnseenPool& unseen, const RunConfig& cfg, const StepHooks& hooks,
                      std::function<void(std::string_view)> log) {
  const auto& tc = cfg.trainer;
  const ValidationSplit split = make_validation_split(seen, tc.val_fraction, Rng(cfg.seed).split(kStreamValidation));
  const Margin margin{cfg.losses.margin};
  Criterion crit{[&seen, &split, margin](const TrainState& s) { return seen_validation(s, seen, split, margin); },
                 false};
  TrainContext ctx = make_context(cfg, crit);
  ctx.hooks = hooks;
  ctx.log = std::move(log);

  TrainState state;
  state.seed = cfg.seed;
  state.initial_validation = crit.value(state);

  double pair_val = state.initial_validation;
  std::size_t keep_image = 0, keep_label = 0, keep_history = 0;
  for (std::size_t k = 1; k <= tc.max_steps; ++k) {
    const bool sup_slot = (k % 2) == 1;
    if (sup_slot && !tc.supervised) continue;
    if (!sup_slot && !tc.transductive) continue;

    if (sup_slot) {
      supervised_step(state, seen, split.train, supervised_plan(tc), ctx);
    } else {
      transductive_step(state, unseen, transductive_plan(tc), ctx);
    }

    const bool pair_end = !sup_slot || !tc.transductive || !tc.supervised;
    if (!pair_end) continue;
    const double val = state.history.back().validation;
    if (!(val < pair_val - tc.improve_eps)) {
      for (std::size_t h = keep_history; h < state.history.size(); ++h) state.history[h].accepted = false;
      state.image_stack.maps.resize(keep_image);
      state.label_stack.maps.resize(keep_label);
      break;
    }
    pair_val = val;
    keep_image = state.image_stack.size();
    keep_label = state.label_stack.size();
    keep_history = state.history.size();
  }
  return state;
}

TrainState train_transductive_once(const SeenData& seen, const UnseenPool& unseen, const RunConfig& cfg,
                                   const StepHooks& hooks, std::function<void(std::string_view)> log) {
  const ValidationSplit split =
      make_validation_split(seen, cfg.trainer.val_fraction, Rng(cfg.seed).split(kStreamValidation));
  const Margin margin{cfg.losses.margin};
  Criterion crit{[&seen, &split, margin](const TrainState& s) { return seen_validation(s, seen, split, margin); },
                 false};
  TrainContext ctx = make_context(cfg, crit);
  ctx.hooks = hooks;
  ctx.log = std::move(log);
  TrainState state;
  state.seed = cfg.seed;
  state.initial_validation = crit.value(state);
  transductive_step(state, unseen, transductive_plan(cfg.trainer), ctx);
  return state;
}

TrainState train_unsupervised(const UnseenPool& pool, const RunConfig& cfg, const StepHooks& hooks,
                              std::function<void(std::string_view)> log) {
  const UnsupSlice slice = make_unsup_slice(pool, cfg.trainer.val_fraction, Rng(cfg.seed).split(kStreamValidation));
  Criterion crit{[&pool, &slice](const TrainState& s) { return unsup_validation(s, pool, slice); }, true};
  TrainContext ctx = make_context(cfg, crit);
  ctx.hooks = hooks;
  ctx.log = std::move(log);

  // train on everything outside the held-out slice
  UnseenPool train_pool;
  std::vector<bool> held_img(pool.images.size(), false), held_txt(pool.labels.size(), false);
  for (std::size_t i : slice.images) held_img[i] = true;
  for (std::size_t j : slice.texts) held_txt[j] = true;
  for (std::size_t i = 0; i < pool.images.size(); ++i)
    if (!held_img[i]) train_pool.images.push_back(pool.images[i]);
  for (std::size_t j = 0; j < pool.labels.size(); ++j)
    if (!held_txt[j]) train_pool.labels.push_back(pool.labels[j]);

  TrainState state;
  state.seed = cfg.seed;
  state.initial_validation = crit.value(state);
  transductive_step(state, train_pool, transductive_plan(cfg.trainer), ctx);
  return state;
}

MappingStack supervised_label_stack(const TrainState& state) {
  for (auto it = state.history.rbegin(); it != state.history.rend(); ++it) {
    if (it->kind != StepKind::Supervised || !it->accepted) continue;
    if (it->retained == RetainSide::Label) return state.label_stack.prefix(it->label_stack_len);
    MappingStack s = state.label_stack.prefix(it->label_stack_len);
    s.maps.push_back(it->companion);
    return s;
  }
  fail(ErrorKind::EmptySplit, "no accepted supervised step in the training history");
}

}  // namespace cmgan
