#include "exost/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace exost {

MetricsRecord compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
  if (y.empty()) throw std::invalid_argument("metrics: empty prediction set");
  if (y.size() != y_hat.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(y.size()) + " targets vs " +
                                std::to_string(y_hat.size()) + " predictions");
  }
  double abs_sum = 0.0, sq_sum = 0.0, y_abs = 0.0, pct = 0.0;
  std::size_t pct_n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = std::abs(y[i] - y_hat[i]);
    abs_sum += r;
    sq_sum += r * r;
    y_abs += std::abs(y[i]);
    if (std::abs(y[i]) >= kMapeFloor) {
      pct += r / std::abs(y[i]);
      ++pct_n;
    }
  }
  const double n = static_cast<double>(y.size());
  MetricsRecord m;
  m.count = y.size();
  m.mape_count = pct_n;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.mape = pct_n > 0 ? 100.0 * pct / static_cast<double>(pct_n) : 0.0;
  m.mre = y_abs > 0.0 ? 100.0 * abs_sum / y_abs : std::numeric_limits<double>::quiet_NaN();
  return m;
}

LossKind parse_loss(std::string_view tag) {
  if (tag == "mae" || tag == "l1") return LossKind::mae;
  if (tag == "mse" || tag == "l2") return LossKind::mse;
  throw std::invalid_argument("unknown loss '" + std::string(tag) + "'");
}

std::string_view to_string(LossKind kind) { return kind == LossKind::mae ? "mae" : "mse"; }

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (batch == 0) throw std::invalid_argument("train: batch size must be positive");
  if (!(lr_min < lr_max) || lr_min < 0.0) {
    throw std::invalid_argument("train: need 0 <= lr-min < lr-max");
  }
  if (patience == 0) throw std::invalid_argument("train: patience must be at least 1");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight decay must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},   {"batch", c.batch},
          {"lr_max", c.lr_max},   {"lr_min", c.lr_min},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},     {"beta2", c.beta2},
          {"eps", c.eps},         {"patience", c.patience},
          {"seed", c.seed},       {"loss", std::string(to_string(c.loss))}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch = j.at("batch").get<std::size_t>();
  c.lr_max = j.at("lr_max").get<double>();
  c.lr_min = j.at("lr_min").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.patience = j.at("patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss = parse_loss(j.at("loss").get<std::string>());
  return c;
}

double cosine_lr(std::size_t epoch, const TrainConfig& config) {
  if (config.epochs <= 1) return config.lr_max;
  const std::size_t last = config.epochs - 1;
  if (epoch >= last) return config.lr_min;
  if (epoch == 0) return config.lr_max;
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(last);
  return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + std::cos(phase));
}

void adamw_update(DTensor& p, Moments& state, std::size_t step, double lr, const AdamHyper& hp) {
  if (step == 0) throw std::invalid_argument("adamw: step counter starts at 1");
  const std::size_t n = p.values.size();
  if (p.grad.size() != n) p.grad.assign(n, 0.0);
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * hp.weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = p.grad[i];
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    p.values[i] = p.values[i] * decay - lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

void AdamW::step(ParamStore& params, double lr) {
  for (const auto& [name, p] : params) {
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in '" + name + "'");
    }
  }
  ++step_;
  for (auto& [name, p] : params) {
    adamw_update(p, state_[name], step_, lr, hp_);
    p.zero_grad();
  }
}

bool EarlyStopper::observe(std::size_t epoch, double score) {
  if (score < best_) {
    best_ = score;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

namespace {

// Copies steps [t0, t0 + len) of every node of `b` into `out`.
double* copy_steps(const Block& b, std::size_t t0, std::size_t len, double* out) {
  if (t0 + len > b.steps) throw std::out_of_range("window slice beyond block");
  for (std::size_t n = 0; n < b.nodes; ++n) {
    const double* src = &b.data[(n * b.steps + t0) * b.channels];
    out = std::copy(src, src + len * b.channels, out);
  }
  return out;
}

struct SampleGeometry {
  std::size_t nodes, steps_in, steps_out, past_steps, past_width, future_width;
};

SampleGeometry geometry(const WindowSample& s) {
  const std::size_t days = std::max<std::size_t>(s.days, 1);
  SampleGeometry g;
  g.nodes = s.x.nodes;
  g.steps_in = s.x.steps;
  g.steps_out = s.y.steps / days;
  g.past_steps = s.e_past.steps - (days - 1) * g.steps_out;
  g.past_width = s.e_past.channels;
  g.future_width = s.e_future.channels;
  return g;
}

}  // namespace

Batch collate(std::span<const WindowSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("collate: empty batch");
  const SampleGeometry g = geometry(samples[indices[0]]);
  const std::size_t b = indices.size();
  Batch out;
  out.x = DTensor({b, g.nodes, g.steps_in, 1});
  out.e_past = DTensor({b, g.nodes, g.past_steps, g.past_width});
  out.e_future = DTensor({b, g.nodes, g.steps_out, g.future_width});
  out.y = DTensor({b, g.nodes, g.steps_out, 1});
  double* px = out.x.values.data();
  double* pe = out.e_past.values.data();
  double* pf = out.e_future.values.data();
  double* py = out.y.values.data();
  for (std::size_t i : indices) {
    const WindowSample& s = samples[i];
    px = copy_steps(s.x, 0, g.steps_in, px);
    pe = copy_steps(s.e_past, 0, g.past_steps, pe);
    pf = copy_steps(s.e_future, 0, g.steps_out, pf);
    py = copy_steps(s.y, 0, g.steps_out, py);
  }
  return out;
}

Forecaster model_forecaster(const Model& model) {
  return [&model](const DTensor& x, const DTensor& e_past, const DTensor& e_future) {
    ad::Tape tape;
    ParamBinder bind(tape, model.params());
    ForwardResult r = exost_forward(bind, model, tape.constant(x), tape.constant(e_past),
                                    tape.constant(e_future), ForwardContext{});
    return DTensor(r.y_hat.shape(), std::vector<double>(r.y_hat.value().begin(),
                                                        r.y_hat.value().end()));
  };
}

TargetScale target_scale(const Scaler& scaler, const Panel& panel) {
  const std::size_t t = panel.target_index();
  return {scaler.mean.at(t), scaler.stddev.at(t)};
}

MetricsRecord evaluate(const Forecaster& forecaster, std::span<const WindowSample> samples,
                       const TargetScale& scale, std::size_t days, std::size_t chunk) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  if (days == 0) throw std::invalid_argument("evaluate: horizon must cover at least one day");
  for (const WindowSample& s : samples) {
    if (s.days < days) {
      throw std::invalid_argument("evaluate: samples carry " + std::to_string(s.days) +
                                  " day(s) of context, rollout needs " + std::to_string(days));
    }
  }
  const SampleGeometry g = geometry(samples[0]);
  const std::size_t horizon = days * g.steps_out;
  std::vector<double> truth, pred;
  truth.reserve(samples.size() * g.nodes * horizon);
  pred.reserve(truth.capacity());

  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t b = std::min(chunk, samples.size() - start);
    // Rolling target history and collected forecasts, [b, N, ·].
    std::vector<double> history(b * g.nodes * g.steps_in);
    std::vector<double> forecast(b * g.nodes * horizon);
    for (std::size_t i = 0; i < b; ++i) {
      copy_steps(samples[start + i].x, 0, g.steps_in, &history[i * g.nodes * g.steps_in]);
    }
    for (std::size_t d = 0; d < days; ++d) {
      DTensor x({b, g.nodes, g.steps_in, 1}, history);
      DTensor ep({b, g.nodes, g.past_steps, g.past_width});
      DTensor ef({b, g.nodes, g.steps_out, g.future_width});
      double* pe = ep.values.data();
      double* pf = ef.values.data();
      for (std::size_t i = 0; i < b; ++i) {
        const WindowSample& s = samples[start + i];
        pe = copy_steps(s.e_past, d * g.steps_out, g.past_steps, pe);
        pf = copy_steps(s.e_future, d * g.steps_out, g.steps_out, pf);
      }
      DTensor out = forecaster(x, ep, ef);
      if (out.shape != Shape{b, g.nodes, g.steps_out, 1}) {
        throw ShapeError("evaluate: forecaster returned " + to_string(out.shape));
      }
      for (std::size_t r = 0; r < b * g.nodes; ++r) {
        const double* step = &out.values[r * g.steps_out];
        std::copy(step, step + g.steps_out, &forecast[r * horizon + d * g.steps_out]);
        // New history: the last steps_in values of (history ++ forecast).
        double* h = &history[r * g.steps_in];
        std::vector<double> joined(h, h + g.steps_in);
        joined.insert(joined.end(), step, step + g.steps_out);
        std::copy(joined.end() - static_cast<std::ptrdiff_t>(g.steps_in), joined.end(), h);
      }
    }
    for (std::size_t i = 0; i < b; ++i) {
      const WindowSample& s = samples[start + i];
      for (std::size_t n = 0; n < g.nodes; ++n) {
        for (std::size_t t = 0; t < horizon; ++t) {
          truth.push_back(s.y.at(n, t, 0) * scale.stddev + scale.mean);
          pred.push_back(forecast[(i * g.nodes + n) * horizon + t] * scale.stddev + scale.mean);
        }
      }
    }
  }
  return compute_metrics(truth, pred);
}

MetricsRecord evaluate(const Model& model, std::span<const WindowSample> samples,
                       const TargetScale& scale, std::size_t days) {
  return evaluate(model_forecaster(model), samples, scale, days);
}

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"loss", r.loss},
          {"lr", r.lr},
          {"val_mae", r.val_mae},
          {"improved", r.improved}};
}

namespace {

ad::Var loss_of(ad::Var y_hat, ad::Var y, LossKind kind) {
  ad::Var diff = ad::sub(y_hat, y);
  return ad::mean_all(kind == LossKind::mae ? ad::abs(diff) : ad::mul(diff, diff));
}

}  // namespace

double dataset_loss(const Model& model, std::span<const WindowSample> samples, LossKind kind) {
  if (samples.empty()) throw std::invalid_argument("dataset_loss: no samples");
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch batch = collate(samples, idx);
    ad::Tape tape;
    ParamBinder bind(tape, model.params());
    ForwardResult r = exost_forward(bind, model, tape.constant(batch.x),
                                    tape.constant(batch.e_past), tape.constant(batch.e_future),
                                    ForwardContext{});
    total += loss_of(r.y_hat, tape.constant(batch.y), kind).value()[0] *
             static_cast<double>(idx.size());
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(Model& model, std::span<const WindowSample> train_set,
                  std::span<const WindowSample> val_set, const TargetScale& scale,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");

  const std::size_t n = train_set.size();
  const std::size_t batch = std::max<std::size_t>(1, std::min(config.batch, (n + 1) / 2));
  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  AdamW optimizer({config.beta1, config.beta2, config.eps, config.weight_decay});
  EarlyStopper stopper(config.patience);
  ParamStore best = model.params();

  TrainResult result;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (auto& [name, p] : model.params()) p.zero_grad();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = cosine_lr(epoch, config);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t end = std::min(n, start + batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Batch data = collate(train_set, idx);
      ad::Tape tape;
      ParamBinder bind(tape, model.params());
      ForwardResult r = exost_forward(bind, model, tape.constant(data.x),
                                      tape.constant(data.e_past), tape.constant(data.e_future),
                                      ForwardContext{true, &dropout_rng});
      ad::Var loss = loss_of(r.y_hat, tape.constant(data.y), config.loss);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      tape.backward(loss);
      try {
        optimizer.step(model.params(), lr);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      }
      loss_sum += value * static_cast<double>(idx.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.lr = lr;
    rec.val_mae = evaluate(model, val_set, scale, 1).mae;
    if (hooks.validation) rec.val_mae = hooks.validation(epoch, rec.val_mae);
    rec.improved = stopper.observe(epoch, rec.val_mae);
    if (rec.improved) best = model.params();
    result.history.push_back(rec);
    result.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.should_stop()) {
      result.stopped_early = epoch + 1 < config.epochs;
      break;
    }
  }

  model.params() = std::move(best);
  for (auto& [name, p] : model.params()) p.zero_grad();
  result.best_epoch = stopper.best_epoch();
  result.best_val_mae = stopper.best_score();
  return result;
}

}  // namespace exost
