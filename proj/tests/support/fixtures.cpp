#include "fixtures.hpp"

namespace rawpc::testing {

RunConfig micro_config() {
  RunConfig c = toy_config();
  c.model.frontend.channels = 8;
  c.model.frontend.kernel_len = 32;
  c.model.input_length = 600;
  c.model.channels = 4;
  c.model.cells = 2;
  c.model.expand_positions = {1};
  c.model.gru_hidden = 8;
  c.model.embedding_dim = 8;
  c.model.max_masked_filters = 2;
  c.search.epochs = 3;
  c.search.warmup_epochs = 2;
  c.search.batch = 4;
  c.scratch.epochs = 3;
  c.scratch.batch = 4;
  return c;
}

SplitData synth_splits(const RunConfig& cfg, std::uint64_t seed, std::size_t train_per_class,
                       std::size_t dev_per_class, std::size_t eval_per_class) {
  SynthConfig sc;
  sc.sample_rate = cfg.model.frontend.sample_rate;
  sc.duration_s = static_cast<double>(cfg.model.input_length) / sc.sample_rate;
  Rng rng(seed);
  SplitData d;
  d.train = synth_task(rng, train_per_class, sc);
  d.dev = synth_task(rng, dev_per_class, sc);
  d.eval = synth_task(rng, eval_per_class, sc);
  return d;
}

}  // namespace rawpc::testing
