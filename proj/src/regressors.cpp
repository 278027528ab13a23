#include "profmon/regressors.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <string>

#include "profmon/error.hpp"
#include "profmon/rng.hpp"

namespace profmon {

// --- FitConfig --------------------------------------------------------------

FitConfig FitConfig::tree_defaults() { return FitConfig{}; }

FitConfig FitConfig::forest_defaults() {
  FitConfig c;
  c.regressor_kind = RegressorKind::forest;
  // randomForest only splits nodes holding more than `nodesize` (5) rows and
  // places no bound on child size or deviance.
  c.min_split_size = 6;
  c.min_leaf_size = 1;
  c.min_deviance_fraction = 0.0;
  return c;
}

int FitConfig::resolved_mtry(std::size_t p) const noexcept {
  if (forest_mtry > 0) return forest_mtry;
  return std::max(static_cast<int>(p / 3), 1);
}

void FitConfig::validate(std::size_t p) const {
  require(min_leaf_size >= 1, ErrorKind::invalid_input, "min_leaf_size must be >= 1");
  require(min_split_size >= 2 * min_leaf_size, ErrorKind::invalid_input,
          "min_split_size must be >= 2 * min_leaf_size");
  require(min_deviance_fraction >= 0.0 && std::isfinite(min_deviance_fraction),
          ErrorKind::invalid_input, "min_deviance_fraction must be finite and >= 0");
  require(max_depth >= 0, ErrorKind::invalid_input, "max_depth must be >= 0");
  if (regressor_kind == RegressorKind::forest) {
    require(forest_num_trees >= 1, ErrorKind::invalid_input, "forest_num_trees must be >= 1");
    const int mtry = resolved_mtry(p);
    require(mtry >= 1 && static_cast<std::size_t>(mtry) <= p, ErrorKind::invalid_input,
            "forest_mtry must lie in [1, p]");
  }
}

// --- RegressionTree ---------------------------------------------------------

RegressionTree::RegressionTree(std::size_t p, std::vector<Node> nodes,
                               std::vector<std::int32_t> leaf_counts)
    : p_(p), nodes_(std::move(nodes)), counts_(std::move(leaf_counts)) {
  require(!nodes_.empty(), ErrorKind::invalid_input, "tree without nodes");
  require(counts_.size() == nodes_.size(), ErrorKind::invalid_input, "tree count table mismatch");
  const auto size = static_cast<std::int32_t>(nodes_.size());
  for (std::int32_t i = 0; i < size; ++i) {
    const Node& nd = nodes_[static_cast<std::size_t>(i)];
    if (nd.feature < 0) continue;
    require(static_cast<std::size_t>(nd.feature) < p_, ErrorKind::invalid_input,
            "split feature out of range");
    require(nd.left > i && nd.left + 1 < size, ErrorKind::invalid_input, "bad child index");
  }
  std::vector<std::size_t> d(nodes_.size(), 0);
  hops_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    depth_ = std::max(depth_, d[i]);
    if (nd.feature >= 0) {
      const auto l = static_cast<std::size_t>(nd.left);
      d[l] = d[l + 1] = d[i] + 1;
      hops_[i] = {nd.value, nd.feature, nd.left};
    } else {
      hops_[i] = {-std::numeric_limits<double>::infinity(), 0, static_cast<std::int32_t>(i) - 1};
    }
  }
}

std::size_t RegressionTree::num_leaves() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

double RegressionTree::predict(std::span<const double> x) const {
  require(x.size() == p_, ErrorKind::invalid_input, "predictor dimension mismatch");
  return predict_unchecked(x);
}

void RegressionTree::accumulate(std::span<const double> rows, std::span<double> out,
                                double scale) const noexcept {
  // Rows descend in blocks for a fixed depth_ hops; a row that reached its
  // leaf keeps hopping onto itself, so the inner loop has no branches.
  constexpr std::size_t lanes = 32;
  const std::size_t n = out.size();
  const Hop* hop = hops_.data();
  const double* base = rows.data();
  std::size_t i = 0;
  for (; i + lanes <= n; i += lanes) {
    std::int32_t idx[lanes] = {};
    const double* r = base + i * p_;
    for (std::size_t d = 0; d < depth_; ++d) {
      for (std::size_t l = 0; l < lanes; ++l) {
        const Hop& h = hop[idx[l]];
        idx[l] = h.next + (r[l * p_ + static_cast<std::size_t>(h.feature)] < h.threshold ? 0 : 1);
      }
      if ((d & 3) == 3) {
        bool settled = true;
        for (std::size_t l = 0; l < lanes; ++l) settled &= hop[idx[l]].next + 1 == idx[l];
        if (settled) break;
      }
    }
    for (std::size_t l = 0; l < lanes; ++l) out[i + l] += scale * nodes_[static_cast<std::size_t>(idx[l])].value;
  }
  for (; i < n; ++i) out[i] += scale * predict_unchecked(rows.subspan(i * p_, p_));
}

// --- CART growth ------------------------------------------------------------

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const ObservationBatch& batch, std::span<const std::size_t> sample,
              const FitConfig& config, int mtry, Rng* rng)
      : config_(config), p_(batch.p()), ns_(sample.size()), mtry_(mtry), rng_(rng) {
    xs_.resize(p_ * ns_);
    ys_.resize(ns_);
    for (std::size_t s = 0; s < ns_; ++s) {
      auto row = batch.row(sample[s]);
      for (std::size_t f = 0; f < p_; ++f) xs_[f * ns_ + s] = row[f];
      ys_[s] = batch.responses()[sample[s]];
    }
    order_.assign(p_, std::vector<std::int32_t>(ns_));
    for (std::size_t f = 0; f < p_; ++f) {
      auto& ord = order_[f];
      std::iota(ord.begin(), ord.end(), 0);
      const double* col = xs_.data() + f * ns_;
      std::stable_sort(ord.begin(), ord.end(),
                       [col](std::int32_t a, std::int32_t b) { return col[a] < col[b]; });
    }
    goes_left_.resize(ns_);
    scratch_.resize(ns_);
    features_.resize(p_);
  }

  RegressionTree build() {
    nodes_.emplace_back();
    counts_.push_back(0);
    root_sse_ = -1.0;
    grow(0, 0, ns_, 0);
    return RegressionTree(p_, std::move(nodes_), std::move(counts_));
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  void grow(std::size_t node, std::size_t begin, std::size_t end, int depth) {
    const std::size_t count = end - begin;
    const auto& ord = order_[0];
    double sum = 0.0;
    double lo = ys_[static_cast<std::size_t>(ord[begin])];
    double hi = lo;
    for (std::size_t k = begin; k < end; ++k) {
      const double y = ys_[static_cast<std::size_t>(ord[k])];
      sum += y;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    const double mean = sum / static_cast<double>(count);
    double sse = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const double d = ys_[static_cast<std::size_t>(ord[k])] - mean;
      sse += d * d;
    }
    if (root_sse_ < 0.0) root_sse_ = sse;

    nodes_[node].value = mean;
    counts_[node] = static_cast<std::int32_t>(count);

    if (count < static_cast<std::size_t>(config_.min_split_size) || depth >= config_.max_depth ||
        lo == hi || sse < config_.min_deviance_fraction * root_sse_)
      return;

    const Split best = find_split(begin, end, mean);
    if (best.feature < 0) return;

    const double* col = xs_.data() + static_cast<std::size_t>(best.feature) * ns_;
    std::size_t n_left = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto s = static_cast<std::size_t>(ord[k]);
      goes_left_[s] = col[s] < best.threshold ? 1 : 0;
      n_left += goes_left_[s];
    }
    for (auto& o : order_) {
      std::size_t l = begin;
      std::size_t r = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::int32_t s = o[k];
        if (goes_left_[static_cast<std::size_t>(s)]) o[l++] = s;
        else scratch_[r++] = s;
      }
      std::copy_n(scratch_.begin(), r, o.begin() + static_cast<std::ptrdiff_t>(l));
    }

    const auto left = static_cast<std::int32_t>(nodes_.size());
    nodes_[node].feature = best.feature;
    nodes_[node].value = best.threshold;
    nodes_[node].left = left;
    nodes_.emplace_back();
    nodes_.emplace_back();
    counts_.push_back(0);
    counts_.push_back(0);
    grow(static_cast<std::size_t>(left), begin, begin + n_left, depth + 1);
    grow(static_cast<std::size_t>(left) + 1, begin + n_left, end, depth + 1);
  }

  // Maximizes the between-children sum of squares of the centered responses,
  // which is the same as minimizing total child SSE. Features are visited in
  // ascending index and thresholds in ascending order; only strict
  // improvements replace the incumbent.
  Split find_split(std::size_t begin, std::size_t end, double mean) {
    std::size_t nf = p_;
    std::iota(features_.begin(), features_.end(), 0);
    if (rng_ != nullptr && static_cast<std::size_t>(mtry_) < p_) {
      for (std::size_t k = 0; k < static_cast<std::size_t>(mtry_); ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, p_ - 1);
        std::swap(features_[k], features_[pick(*rng_)]);
      }
      nf = static_cast<std::size_t>(mtry_);
      std::sort(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(nf));
    }

    const std::size_t count = end - begin;
    const auto min_leaf = static_cast<std::size_t>(config_.min_leaf_size);
    Split best;
    for (std::size_t fi = 0; fi < nf; ++fi) {
      const std::size_t f = features_[fi];
      const auto& ord = order_[f];
      const double* col = xs_.data() + f * ns_;
      double total = 0.0;
      for (std::size_t k = begin; k < end; ++k) total += ys_[static_cast<std::size_t>(ord[k])] - mean;
      double left_sum = 0.0;
      for (std::size_t k = begin; k + 1 < end; ++k) {
        const auto s = static_cast<std::size_t>(ord[k]);
        left_sum += ys_[s] - mean;
        const std::size_t n_left = k - begin + 1;
        const std::size_t n_right = count - n_left;
        const double here = col[s];
        const double next = col[static_cast<std::size_t>(ord[k + 1])];
        if (!(here < next) || n_left < min_leaf || n_right < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n_right);
        if (score > best.score) {
          double threshold = here + (next - here) * 0.5;
          if (!(threshold > here)) threshold = next;
          best = {static_cast<int>(f), threshold, score};
        }
      }
    }
    return best;
  }

  const FitConfig& config_;
  std::size_t p_;
  std::size_t ns_;
  int mtry_;
  Rng* rng_;
  std::vector<double> xs_;  // column-major
  std::vector<double> ys_;
  std::vector<std::vector<std::int32_t>> order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::int32_t> scratch_;
  std::vector<std::size_t> features_;
  std::vector<RegressionTree::Node> nodes_;
  std::vector<std::int32_t> counts_;
  double root_sse_ = -1.0;
};

std::vector<std::size_t> identity_sample(std::size_t n) {
  std::vector<std::size_t> s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

}  // namespace

RegressionTree tree_fit(const ObservationBatch& batch, const FitConfig& config) {
  require(batch.n() >= 1, ErrorKind::invalid_input, "cannot fit a tree on an empty batch");
  config.validate(batch.p());
  const auto sample = identity_sample(batch.n());
  return TreeBuilder(batch, sample, config, static_cast<int>(batch.p()), nullptr).build();
}

double tree_predict(const RegressionTree& tree, std::span<const double> x) { return tree.predict(x); }

// --- RandomForest -----------------------------------------------------------

RandomForest::RandomForest(std::vector<RegressionTree> trees, std::vector<std::uint64_t> seeds)
    : trees_(std::move(trees)), seeds_(std::move(seeds)) {
  require(!trees_.empty(), ErrorKind::invalid_input, "forest without trees");
  require(seeds_.size() == trees_.size(), ErrorKind::invalid_input, "forest seed table mismatch");
  for (const auto& t : trees_)
    require(t.p() == trees_.front().p(), ErrorKind::invalid_input, "forest trees disagree on p");
}

double RandomForest::predict(std::span<const double> x) const {
  require(x.size() == p(), ErrorKind::invalid_input, "predictor dimension mismatch");
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict_unchecked(x);
  return sum / static_cast<double>(trees_.size());
}

void RandomForest::accumulate(std::span<const double> rows, std::span<double> out,
                              double scale) const {
  std::vector<double> sum(out.size(), 0.0);
  for (const auto& t : trees_) t.accumulate(rows, sum, 1.0);
  const double k = static_cast<double>(trees_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * (sum[i] / k);
}

RandomForest forest_fit(const ObservationBatch& batch, const FitConfig& config) {
  require(batch.n() >= 1, ErrorKind::invalid_input, "cannot fit a forest on an empty batch");
  FitConfig cfg = config;
  cfg.regressor_kind = RegressorKind::forest;
  cfg.validate(batch.p());
  const int mtry = cfg.resolved_mtry(batch.p());
  const std::size_t n = batch.n();

  std::vector<RegressionTree> trees;
  std::vector<std::uint64_t> seeds;
  trees.reserve(static_cast<std::size_t>(cfg.forest_num_trees));
  std::vector<std::size_t> sample(n);
  for (int k = 0; k < cfg.forest_num_trees; ++k) {
    const std::uint64_t seed =
        derive_seed(cfg.rng_seed, {stream::tree, static_cast<std::uint64_t>(k)});
    Rng rng(seed);
    if (cfg.forest_bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& s : sample) s = pick(rng);
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    trees.push_back(TreeBuilder(batch, sample, cfg, mtry, &rng).build());
    seeds.push_back(seed);
  }
  return RandomForest(std::move(trees), std::move(seeds));
}

double forest_predict(const RandomForest& forest, std::span<const double> x) {
  return forest.predict(x);
}

// --- FittedRegressor --------------------------------------------------------

FittedRegressor::FittedRegressor(RegressionTree tree, FitConfig config)
    : model_(std::move(tree)), config_(config) {
  config_.regressor_kind = RegressorKind::tree;
}

FittedRegressor::FittedRegressor(RandomForest forest, FitConfig config)
    : model_(std::move(forest)), config_(config) {
  config_.regressor_kind = RegressorKind::forest;
}

std::size_t FittedRegressor::p() const noexcept {
  return std::visit([](const auto& m) { return m.p(); }, model_);
}

double FittedRegressor::predict(std::span<const double> x) const {
  return std::visit([&](const auto& m) { return m.predict(x); }, model_);
}

void FittedRegressor::accumulate(std::span<const double> rows, std::span<double> out) const {
  require(rows.size() == out.size() * p(), ErrorKind::invalid_input, "predictor dimension mismatch");
  std::visit([&](const auto& m) { m.accumulate(rows, out, 1.0); }, model_);
}

FittedRegressor fit_regressor(const ObservationBatch& batch, const FitConfig& config) {
  if (config.regressor_kind == RegressorKind::forest)
    return FittedRegressor(forest_fit(batch, config), config);
  return FittedRegressor(tree_fit(batch, config), config);
}

double ensemble_mean_predict(std::span<const std::shared_ptr<const FittedRegressor>> history,
                             std::span<const double> x) {
  require(!history.empty(), ErrorKind::invalid_state, "ensemble prediction needs a non-empty history");
  double sum = 0.0;
  for (const auto& r : history) sum += r->predict(x);
  return sum / static_cast<double>(history.size());
}

std::vector<double> ensemble_mean_predict(
    std::span<const std::shared_ptr<const FittedRegressor>> history, const ObservationBatch& batch) {
  require(!history.empty(), ErrorKind::invalid_state, "ensemble prediction needs a non-empty history");
  std::vector<double> sum(batch.n(), 0.0);
  for (const auto& r : history) {
    require(r->p() == batch.p(), ErrorKind::invalid_input, "predictor dimension mismatch");
    r->accumulate(batch.predictors(), sum);
  }
  const double k = static_cast<double>(history.size());
  for (double& v : sum) v /= k;
  return sum;
}

// --- JSON -------------------------------------------------------------------

using nlohmann::json;

json to_json(const FitConfig& c) {
  return json{{"regressor_kind", c.regressor_kind == RegressorKind::forest ? "forest" : "tree"},
              {"min_split_size", c.min_split_size},
              {"min_leaf_size", c.min_leaf_size},
              {"min_deviance_fraction", c.min_deviance_fraction},
              {"max_depth", c.max_depth},
              {"forest_num_trees", c.forest_num_trees},
              {"forest_mtry", c.forest_mtry},
              {"forest_bootstrap", c.forest_bootstrap},
              {"rng_seed", c.rng_seed}};
}

FitConfig fit_config_from_json(const json& j, FitConfig c) {
  if (!j.is_object()) fail(ErrorKind::parse, "fit config must be a JSON object");
  try {
    if (j.contains("regressor_kind")) {
      const auto kind = j.at("regressor_kind").get<std::string>();
      if (kind == "tree") c.regressor_kind = RegressorKind::tree;
      else if (kind == "forest") c.regressor_kind = RegressorKind::forest;
      else fail(ErrorKind::parse, "regressor_kind must be 'tree' or 'forest'");
    }
    if (j.contains("min_split_size")) c.min_split_size = j.at("min_split_size").get<int>();
    if (j.contains("min_leaf_size")) c.min_leaf_size = j.at("min_leaf_size").get<int>();
    if (j.contains("min_deviance_fraction"))
      c.min_deviance_fraction = j.at("min_deviance_fraction").get<double>();
    if (j.contains("max_depth")) c.max_depth = j.at("max_depth").get<int>();
    if (j.contains("forest_num_trees")) c.forest_num_trees = j.at("forest_num_trees").get<int>();
    if (j.contains("forest_mtry")) c.forest_mtry = j.at("forest_mtry").get<int>();
    if (j.contains("forest_bootstrap")) c.forest_bootstrap = j.at("forest_bootstrap").get<bool>();
    if (j.contains("rng_seed")) c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("fit config: ") + e.what());
  }
  return c;
}

namespace {

json tree_to_json(const RegressionTree& tree) {
  const auto nodes = tree.nodes();
  std::vector<std::int32_t> parent(nodes.size(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].feature >= 0) {
      const auto l = static_cast<std::size_t>(nodes[i].left);
      parent[l] = parent[l + 1] = static_cast<std::int32_t>(i);
    }
  json arr = json::array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& nd = nodes[i];
    json j{{"parent", parent[i]}, {"count", tree.training_counts()[i]}};
    if (nd.feature >= 0) {
      j["feature"] = nd.feature;
      j["threshold"] = nd.value;
      j["left"] = nd.left;
      j["right"] = nd.left + 1;
    } else {
      j["value"] = nd.value;
    }
    arr.push_back(std::move(j));
  }
  return json{{"p", tree.p()}, {"nodes", std::move(arr)}};
}

RegressionTree tree_from_json(const json& j) {
  const auto p = j.at("p").get<std::size_t>();
  const auto& arr = j.at("nodes");
  std::vector<RegressionTree::Node> nodes;
  std::vector<std::int32_t> counts;
  nodes.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& jn = arr[i];
    RegressionTree::Node nd;
    if (jn.contains("feature")) {
      nd.feature = jn.at("feature").get<std::int32_t>();
      nd.value = jn.at("threshold").get<double>();
      nd.left = jn.at("left").get<std::int32_t>();
      if (jn.at("right").get<std::int32_t>() != nd.left + 1)
        fail(ErrorKind::parse, "tree node children must be adjacent");
    } else {
      nd.value = jn.at("value").get<double>();
    }
    const auto parent = jn.at("parent").get<std::int32_t>();
    if ((i == 0) != (parent < 0)) fail(ErrorKind::parse, "tree node parent links are inconsistent");
    nodes.push_back(nd);
    counts.push_back(jn.at("count").get<std::int32_t>());
  }
  return RegressionTree(p, std::move(nodes), std::move(counts));
}

}  // namespace

json to_json(const FittedRegressor& r) {
  json j{{"format", "profmon.regressor"}, {"version", 1}, {"config", to_json(r.config())}};
  if (r.is_forest()) {
    j["kind"] = "forest";
    json trees = json::array();
    const auto& f = r.forest();
    for (std::size_t k = 0; k < f.trees().size(); ++k) {
      auto t = tree_to_json(f.trees()[k]);
      t["seed"] = f.tree_seeds()[k];
      trees.push_back(std::move(t));
    }
    j["trees"] = std::move(trees);
  } else {
    j["kind"] = "tree";
    j["tree"] = tree_to_json(r.tree());
  }
  return j;
}

FittedRegressor regressor_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "profmon.regressor")
      fail(ErrorKind::parse, "not a regressor document");
    if (j.at("version").get<int>() != 1) fail(ErrorKind::parse, "unsupported regressor version");
    const FitConfig config = fit_config_from_json(j.at("config"));
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "tree") return FittedRegressor(tree_from_json(j.at("tree")), config);
    if (kind != "forest") fail(ErrorKind::parse, "unknown regressor kind '" + kind + "'");
    std::vector<RegressionTree> trees;
    std::vector<std::uint64_t> seeds;
    for (const auto& jt : j.at("trees")) {
      trees.push_back(tree_from_json(jt));
      seeds.push_back(jt.at("seed").get<std::uint64_t>());
    }
    return FittedRegressor(RandomForest(std::move(trees), std::move(seeds)), config);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("regressor document: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::invalid_input) fail(ErrorKind::parse, e.what());
    throw;
  }
}

}  // namespace profmon
