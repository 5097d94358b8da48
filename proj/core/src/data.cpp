#include "exost/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>

namespace exost {

namespace {

int parse_field(std::string_view text, std::size_t pos, std::size_t len) {
  int value = 0;
  if (pos + len > text.size()) throw DataError("bad timestamp: '" + std::string(text) + "'");
  const char* first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc() || ptr != first + len) {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

VariableRole parse_role(std::string_view tag) {
  if (tag == "target") return VariableRole::target;
  if (tag == "past" || tag == "past-exogenous") return VariableRole::past_exogenous;
  if (tag == "future" || tag == "future-exogenous") return VariableRole::future_exogenous;
  if (tag == "date" || tag == "date-exogenous") return VariableRole::date_exogenous;
  throw DataError("unknown variable role '" + std::string(tag) + "'");
}

std::string_view to_string(VariableRole role) {
  switch (role) {
    case VariableRole::target: return "target";
    case VariableRole::past_exogenous: return "past";
    case VariableRole::future_exogenous: return "future";
    case VariableRole::date_exogenous: return "date";
  }
  return "?";
}

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  while (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() < 16 || text[4] != '-' || text[7] != '-' ||
      (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
  const int y = parse_field(text, 0, 4);
  const int mo = parse_field(text, 5, 2);
  const int d = parse_field(text, 8, 2);
  const int h = parse_field(text, 11, 2);
  const int mi = parse_field(text, 14, 2);
  int s = 0;
  if (text.size() > 16) {
    if (text.size() != 19 || text[16] != ':') {
      throw DataError("bad timestamp: '" + std::string(text) + "'");
    }
    s = parse_field(text, 17, 2);
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss<seconds> hms{ts - day_point};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                int(hms.minutes().count()), int(hms.seconds().count()));
  return buf;
}

std::size_t Panel::target_index() const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].role == VariableRole::target) return i;
  }
  throw DataError("panel has no target variable");
}

std::vector<std::size_t> Panel::channels(VariableRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].role == role) out.push_back(i);
  }
  return out;
}

void Panel::validate() const {
  const auto targets = channels(VariableRole::target);
  if (targets.size() != 1) {
    throw DataError("panel needs exactly one target variable, found " +
                    std::to_string(targets.size()));
  }
  if (!channels(VariableRole::date_exogenous).empty()) {
    throw DataError("date channels are synthesized from timestamps and cannot be ingested");
  }
  for (std::size_t t = 1; t < timestamps.size(); ++t) {
    if (timestamps[t] <= timestamps[t - 1]) {
      throw DataError("timestamps not strictly increasing at " +
                      format_timestamp(timestamps[t]));
    }
  }
  const std::size_t expected = num_nodes() * num_steps() * num_variables();
  if (data.size() != expected || (!missing.empty() && missing.size() != expected)) {
    throw DataError("panel data size does not match its dimensions");
  }
}

Panel Panel::segment(std::size_t begin, std::size_t length) const {
  if (begin + length > num_steps()) throw DataError("segment exceeds panel length");
  Panel out;
  out.nodes = nodes;
  out.variables = variables;
  out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                        timestamps.begin() + static_cast<std::ptrdiff_t>(begin + length));
  const std::size_t f = num_variables();
  out.data.resize(num_nodes() * length * f);
  if (!missing.empty()) out.missing.resize(out.data.size());
  for (std::size_t n = 0; n < num_nodes(); ++n) {
    const std::size_t src = index(n, begin, 0);
    const std::size_t dst = n * length * f;
    std::copy_n(data.begin() + src, length * f, out.data.begin() + dst);
    if (!missing.empty()) std::copy_n(missing.begin() + src, length * f, out.missing.begin() + dst);
  }
  return out;
}

void fill_missing(Panel& panel) {
  if (panel.missing.empty()) return;
  for (std::size_t n = 0; n < panel.num_nodes(); ++n) {
    for (std::size_t v = 0; v < panel.num_variables(); ++v) {
      double last = 0.0;
      for (std::size_t t = 0; t < panel.num_steps(); ++t) {
        const std::size_t i = panel.index(n, t, v);
        if (panel.missing[i]) {
          panel.data[i] = last;
        } else {
          last = panel.data[i];
        }
      }
    }
  }
}

DateFeatures encode_time(Timestamp ts) {
  using namespace std::chrono;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const auto day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss<seconds> hms{ts - day_point};
  const double hour = static_cast<double>(hms.hours().count());
  const double month = static_cast<double>(unsigned(ymd.month()) - 1);
  // c_encoding: Sunday = 0; shift so Monday = 0.
  const unsigned weekday_index = (weekday{day_point}.c_encoding() + 6) % 7;

  DateFeatures f{};
  f[0] = std::sin(two_pi * hour / 24.0);
  f[1] = std::cos(two_pi * hour / 24.0);
  f[2] = std::sin(two_pi * month / 12.0);
  f[3] = std::cos(two_pi * month / 12.0);
  f[4 + weekday_index] = 1.0;
  return f;
}

std::vector<DateFeatures> encode_time(const std::vector<Timestamp>& timestamps) {
  std::vector<DateFeatures> out;
  out.reserve(timestamps.size());
  for (Timestamp ts : timestamps) out.push_back(encode_time(ts));
  return out;
}

std::array<std::size_t, 3> split_lengths(std::size_t steps, const SplitRatios& r) {
  if (!(r.train > 0 && r.val > 0 && r.test > 0) ||
      std::fabs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be positive and sum to 1");
  }
  // The epsilon absorbs representation error such as 0.7 * 10 = 6.999...
  const auto take = [steps](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(steps) * ratio + 1e-9));
  };
  const std::size_t train = take(r.train);
  const std::size_t val = take(r.val);
  return {train, val, steps - train - val};
}

PanelSplits chronological_split(const Panel& panel, const SplitRatios& ratios,
                                std::size_t min_segment) {
  const auto lengths = split_lengths(panel.num_steps(), ratios);
  for (std::size_t len : lengths) {
    if (len < min_segment) {
      throw DataError("split segment of " + std::to_string(len) +
                      " steps is shorter than the required " + std::to_string(min_segment));
    }
  }
  return {panel.segment(0, lengths[0]), panel.segment(lengths[0], lengths[1]),
          panel.segment(lengths[0] + lengths[1], lengths[2])};
}

Scaler fit_scaler(const Panel& train) {
  const std::size_t f = train.num_variables();
  Scaler s{std::vector<double>(f, 0.0), std::vector<double>(f, 1.0)};
  for (std::size_t v = 0; v < f; ++v) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < train.num_nodes(); ++n) {
      for (std::size_t t = 0; t < train.num_steps(); ++t) {
        const std::size_t i = train.index(n, t, v);
        if (!train.missing.empty() && train.missing[i]) continue;
        sum += train.data[i];
        ++count;
      }
    }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    double sq = 0.0;
    for (std::size_t n = 0; n < train.num_nodes(); ++n) {
      for (std::size_t t = 0; t < train.num_steps(); ++t) {
        const std::size_t i = train.index(n, t, v);
        if (!train.missing.empty() && train.missing[i]) continue;
        sq += (train.data[i] - mean) * (train.data[i] - mean);
      }
    }
    s.mean[v] = mean;
    s.stddev[v] = std::max(count ? std::sqrt(sq / static_cast<double>(count)) : 0.0, kStdFloor);
  }
  return s;
}

Panel apply_scaler(const Panel& panel, const Scaler& scaler, ScaleDirection direction) {
  if (scaler.mean.size() != panel.num_variables()) {
    throw DataError("scaler fitted on a different variable set");
  }
  Panel out = panel;
  const std::size_t f = panel.num_variables();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const std::size_t v = i % f;
    out.data[i] = direction == ScaleDirection::forward ? scaler.normalize(v, out.data[i])
                                                       : scaler.denormalize(v, out.data[i]);
  }
  return out;
}

WindowLayout window_layout(const Panel& panel, std::size_t steps_in, std::size_t steps_out,
                           const ChannelSelection& selection) {
  WindowLayout layout;
  layout.steps_in = steps_in;
  layout.steps_out = steps_out;
  layout.past_exo = selection.use_past ? panel.channels(VariableRole::past_exogenous).size() : 0;
  layout.future_exo =
      selection.use_future ? panel.channels(VariableRole::future_exogenous).size() : 0;
  layout.date = selection.use_date ? kDateChannels : 0;
  return layout;
}

std::size_t window_count(std::size_t length, std::size_t steps_in, std::size_t steps_out,
                         std::size_t stride, std::size_t days) {
  const std::size_t need = steps_in + days * steps_out;
  if (stride == 0 || length < need) return 0;
  return (length - need) / stride + 1;
}

std::vector<WindowSample> make_windows(const Panel& segment, const WindowLayout& layout,
                                       const ChannelSelection& selection, std::size_t stride,
                                       std::size_t days) {
  const std::size_t tin = layout.steps_in;
  const std::size_t tout = layout.steps_out;
  const std::size_t count = window_count(segment.num_steps(), tin, tout, stride, days);
  if (count == 0) {
    throw DataError("segment of " + std::to_string(segment.num_steps()) +
                    " steps is too short for " + std::to_string(tin) + "->" +
                    std::to_string(days * tout) + " windows");
  }
  const std::size_t target = segment.target_index();
  const auto past = selection.use_past ? segment.channels(VariableRole::past_exogenous)
                                       : std::vector<std::size_t>{};
  const auto future = selection.use_future ? segment.channels(VariableRole::future_exogenous)
                                           : std::vector<std::size_t>{};
  const auto dates = encode_time(segment.timestamps);
  const std::size_t n_nodes = segment.num_nodes();
  const std::size_t past_steps = tin + (days - 1) * tout;
  const std::size_t future_steps = days * tout;

  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t o = w * stride;
    WindowSample s;
    s.offset = o;
    s.days = days;
    s.x = Block(n_nodes, tin, 1);
    s.e_past = Block(n_nodes, past_steps, layout.past_width());
    s.e_future = Block(n_nodes, future_steps, layout.future_width());
    s.y = Block(n_nodes, future_steps, 1);
    for (std::size_t n = 0; n < n_nodes; ++n) {
      for (std::size_t t = 0; t < tin; ++t) s.x.at(n, t, 0) = segment.at(n, o + t, target);
      for (std::size_t t = 0; t < past_steps; ++t) {
        const std::size_t step = o + t;
        for (std::size_t c = 0; c < past.size(); ++c) s.e_past.at(n, t, c) = segment.at(n, step, past[c]);
        for (std::size_t c = 0; c < layout.date; ++c) s.e_past.at(n, t, past.size() + c) = dates[step][c];
      }
      for (std::size_t t = 0; t < future_steps; ++t) {
        const std::size_t step = o + tin + t;
        for (std::size_t c = 0; c < future.size(); ++c) {
          s.e_future.at(n, t, c) = segment.at(n, step, future[c]);
        }
        for (std::size_t c = 0; c < layout.date; ++c) {
          s.e_future.at(n, t, future.size() + c) = dates[step][c];
        }
        s.y.at(n, t, 0) = segment.at(n, step, target);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

CorruptionStrategy parse_corruption(std::string_view tag) {
  if (tag == "zero") return CorruptionStrategy::zero;
  if (tag == "random" || tag == "random-normal") return CorruptionStrategy::random_normal;
  throw std::invalid_argument("unknown corruption strategy '" + std::string(tag) + "'");
}

std::string_view to_string(CorruptionStrategy strategy) {
  return strategy == CorruptionStrategy::zero ? "zero" : "random";
}

namespace {

template <class Visit>
void for_each_exogenous(WindowSample& s, const WindowLayout& layout, bool include_date,
                        Visit&& visit) {
  const std::size_t past_limit = include_date ? layout.past_width() : layout.past_exo;
  const std::size_t future_limit = include_date ? layout.future_width() : layout.future_exo;
  for (std::size_t n = 0; n < s.e_past.nodes; ++n) {
    for (std::size_t t = 0; t < s.e_past.steps; ++t) {
      for (std::size_t c = 0; c < past_limit; ++c) visit(s.e_past.at(n, t, c));
    }
  }
  for (std::size_t n = 0; n < s.e_future.nodes; ++n) {
    for (std::size_t t = 0; t < s.e_future.steps; ++t) {
      for (std::size_t c = 0; c < future_limit; ++c) visit(s.e_future.at(n, t, c));
    }
  }
}

}  // namespace

std::vector<WindowSample> corrupt_exogenous(std::vector<WindowSample> samples,
                                            const WindowLayout& layout,
                                            CorruptionStrategy strategy, double ratio,
                                            std::uint64_t seed, bool include_date) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("corruption ratio must lie in [0, 1]");
  }
  if (ratio == 0.0) return samples;
  // Separate streams keep the mask independent of the replacement strategy.
  std::mt19937_64 mask_rng(seed);
  std::mt19937_64 value_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& s : samples) {
    for_each_exogenous(s, layout, include_date, [&](double& v) {
      const double u = uniform(mask_rng);
      if (ratio == 1.0 || u < ratio) {
        v = strategy == CorruptionStrategy::zero ? 0.0 : normal(value_rng);
      }
    });
  }
  return samples;
}

std::vector<WindowSample> zero_exogenous(std::vector<WindowSample> samples,
                                         const WindowLayout& layout) {
  for (auto& s : samples) for_each_exogenous(s, layout, false, [](double& v) { v = 0.0; });
  return samples;
}

}  // namespace exost
