#pragma once

#include "cmgan/data.hpp"

namespace testutil {

// Small synthetic zsl benchmark that trains in well under a second.
inline cmgan::RunConfig small_config() {
  cmgan::RunConfig cfg;
  cfg.seed = 3;
  cfg.synth.n_seen = 6;
  cfg.synth.n_unseen = 6;
  cfg.synth.d_text = 8;
  cfg.synth.d_vis = 8;
  cfg.synth.images_per_class = 12;
  cfg.conse.top_k = 4;
  cfg.trainer.sup_epochs = 5;
  cfg.trainer.trans_epochs = 3;
  cfg.trainer.batch_size = 16;
  cfg.trainer.lambda_c_grid = {1.0, 5.0};
  cfg.trainer.val_fraction = 0.2;
  return cfg;
}

struct Fixture {
  cmgan::RunConfig cfg = small_config();
  cmgan::Dataset ds;
  cmgan::BaseVectors base;
  cmgan::TrainingView view;

  Fixture() { reload(); }
  void reload() {
    ds = cmgan::gen_synthetic(cfg.synth, cfg.seed);
    base = cmgan::compute_base(ds, cfg.conse);
    view = cmgan::training_view(ds, base);
  }
};

}  // namespace testutil
