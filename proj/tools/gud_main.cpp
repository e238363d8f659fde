// Copyright 2026 The GUD Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gud/basis.hpp"
#include "gud/data.hpp"
#include "gud/io.hpp"
#include "gud/process.hpp"
#include "gud/schedule.hpp"
#include "gud/score_net.hpp"
#include "gud/tasks.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gud;

// Exit codes: 1 invalid configuration, 2 missing input, 3 numerical failure.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw MissingInput("missing input: " + path);
}

std::string out_path(const std::string& given, const std::string& default_name) {
  if (!given.empty()) return given;
  const char* dir = std::getenv("GUD_OUT_DIR");
  return (dir ? std::string(dir) : std::string(".")) + "/" + default_name;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> vals;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) vals.push_back(std::stod(tok));
  return vals;
}

// ---------------------------------------------------------------------------
// Shared command state

struct CommonOpts {
  std::string data_path;
  int quant_levels = 256;
  int synth_dim = 0;
  int synth_n = 1024;
  std::string synth_var = "";
  std::string basis_path;
  std::string checkpoint_path;
  bool exact_score = false;
  bool use_raw_params = false;

  std::string schedule_family = "standard";
  double a = 1.0, b = 0.5, r = 0.0;
  double gamma_denoise = -7.0;
  double sigma_min = 0.99;
  std::optional<double> gamma_noise_override;

  std::string sampler = "sde";
  int steps = 500;
  double tol = 1e-4;
  int fixed_steps = 0;
  double t_floor = 1e-5;

  std::uint64_t seed = 0;
  int threads = 1;
};

void add_data_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--data", o.data_path, "GUDIMGS dataset path");
  cmd->add_option("--quant-levels", o.quant_levels, "Quantization levels of the image data")
      ->default_val(256);
  cmd->add_option("--synth-dim", o.synth_dim,
                  "Generate a synthetic diagonal-Gaussian dataset of this dimension");
  cmd->add_option("--synth-n", o.synth_n, "Synthetic sample count")->default_val(1024);
  cmd->add_option("--synth-var", o.synth_var,
                  "Comma list of synthetic per-component variances (default all 1)");
}

void add_schedule_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--schedule", o.schedule_family,
                  "Schedule family: standard | linear-softness | column | haar-column")
      ->default_val("standard");
  cmd->add_option("--a", o.a, "Softness parameter a (linear-softness, haar-column)")
      ->default_val(1.0);
  cmd->add_option("--b", o.b, "Column softness parameter b")->default_val(0.5);
  cmd->add_option("--r", o.r, "Ordering interpolation r in [0,1] (fft bases)")
      ->default_val(0.0);
  cmd->add_option("--gamma-denoise", o.gamma_denoise, "Minimal denoising level")
      ->default_val(-7.0);
  cmd->add_option("--sigma-min", o.sigma_min, "Noise floor sigma_min")->default_val(0.99);
  cmd->add_option_function<double>(
      "--gamma-noise", [&o](const double& v) { o.gamma_noise_override = v; },
      "Override the derived minimal noising level");
}

void add_sampler_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--sampler", o.sampler, "sde | ode")->default_val("sde");
  cmd->add_option("--steps", o.steps, "Reverse-SDE Euler steps")->default_val(500);
  cmd->add_option("--tol", o.tol, "ODE relative/absolute tolerance")->default_val(1e-4);
  cmd->add_option("--fixed-steps", o.fixed_steps,
                  "Use fixed-step RK4 with this many steps instead of adaptive");
  cmd->add_option("--t-floor", o.t_floor, "Lower integration endpoint")->default_val(1e-5);
}

void add_run_flags(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--seed", o.seed, "Random seed")->default_val(0);
  cmd->add_option("--threads", o.threads, "Worker threads")->default_val(1);
}

struct LoadedData {
  Dataset dataset;
  std::optional<GaussianMixture> synth_spec;  // exact oracle for synthetic data
};

LoadedData load_data(const CommonOpts& o) {
  LoadedData out;
  if (!o.data_path.empty() && o.synth_dim > 0)
    throw std::invalid_argument("give either --data or --synth-dim, not both");
  if (!o.data_path.empty()) {
    require_file(o.data_path);
    const RawImages raw = load_images(o.data_path);
    out.dataset = dequantize_and_center(raw, o.quant_levels, splitmix64(o.seed ^ 0xD47Aull));
    return out;
  }
  if (o.synth_dim > 0) {
    GaussianMixture mix;
    mix.weights = Eigen::VectorXd::Ones(1);
    mix.means = Eigen::MatrixXd::Zero(1, o.synth_dim);
    Eigen::VectorXd var = Eigen::VectorXd::Ones(o.synth_dim);
    if (!o.synth_var.empty()) {
      const std::vector<double> vals = parse_double_list(o.synth_var);
      if (static_cast<int>(vals.size()) != o.synth_dim)
        throw std::invalid_argument("--synth-var length must equal --synth-dim");
      var = Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size());
    }
    mix.variances = var.transpose();
    out.dataset = synth_mixture(mix, o.synth_n, splitmix64(o.seed ^ 0x5D47ull));
    out.synth_spec = mix;
    return out;
  }
  throw std::invalid_argument("a data source is required (--data or --synth-dim)");
}

BasisSpec load_basis_or_identity(const CommonOpts& o, const TensorShape& shape) {
  if (o.basis_path.empty()) return build_identity_basis(shape);
  require_file(o.basis_path);
  BasisSpec basis = load_basis(o.basis_path);
  if (basis.shape.dim() != shape.dim())
    throw std::invalid_argument("basis dimension does not match the dataset");
  return basis;
}

struct Workspace {
  Dataset dataset;
  std::optional<GaussianMixture> synth_spec;
  BasisSpec basis;
  Eigen::MatrixXd train_chi;   // transformed training samples
  Eigen::VectorXd log_var;     // component variances in the basis (floored log)
  Eigen::VectorXd variances;
};

Workspace make_workspace(const CommonOpts& o, double variance_floor = 1e-6) {
  Workspace w;
  LoadedData loaded = load_data(o);
  w.dataset = std::move(loaded.dataset);
  w.synth_spec = loaded.synth_spec;
  w.basis = load_basis_or_identity(o, w.dataset.shape);
  w.train_chi = forward_transform_rows(w.basis, w.dataset.train_samples());
  if (w.train_chi.rows() >= 2) {
    w.variances = estimate_covariance(w.train_chi).variances;
  } else {
    w.variances = Eigen::VectorXd::Ones(w.train_chi.cols());
  }
  w.log_var = w.variances.cwiseMax(variance_floor).array().log();
  return w;
}

Schedule make_schedule(const CommonOpts& o, const Workspace& w) {
  const double gamma_noise = o.gamma_noise_override
                                 ? *o.gamma_noise_override
                                 : noise_floor(w.log_var, o.sigma_min);
  const ScheduleFamily family = schedule_family_from_string(o.schedule_family);
  switch (family) {
    case ScheduleFamily::standard: {
      const double g0 = o.gamma_denoise + w.log_var.minCoeff();
      const double g1 = gamma_noise + w.log_var.maxCoeff();
      return standard_schedule(static_cast<int>(w.log_var.size()), g0, g1);
    }
    case ScheduleFamily::linear_softness: {
      Eigen::VectorXd ordering;
      if (w.basis.kind == BasisKind::fft2_real) {
        ordering = fft_ordering_variables(w.log_var, w.basis.labels, o.r);
      } else if (w.basis.kind == BasisKind::dense_orthogonal) {
        ordering = -w.log_var;
      } else {
        ordering = w.basis.labels;
      }
      return linear_softness_schedule(w.log_var, ordering, o.a, o.gamma_denoise,
                                      gamma_noise);
    }
    case ScheduleFamily::column: {
      Schedule s = column_schedule(w.basis.shape.width, o.b, o.gamma_denoise, gamma_noise);
      return with_group_map(s, column_grouping(w.basis.shape));
    }
    case ScheduleFamily::haar_column: {
      if (w.basis.kind != BasisKind::haar)
        throw std::invalid_argument("haar-column schedule requires a haar basis");
      const HaarLayout& layout = w.basis.haar;
      // Schedule level 1 is the coarsest group; level g covers wavelet level
      // levels - g + 1 whose sub-bands have width/2^(levels-g+1) columns.
      std::vector<int> columns_per_level(layout.levels);
      for (int g = 1; g <= layout.levels; ++g)
        columns_per_level[g - 1] = w.basis.shape.width >> (layout.levels - g + 1);
      Schedule s = haar_column_schedule(columns_per_level, o.a, o.b, o.gamma_denoise,
                                        gamma_noise);
      std::vector<int> slot_offset(layout.levels, 0);
      for (int g = 1; g < layout.levels; ++g)
        slot_offset[g] = slot_offset[g - 1] + columns_per_level[g - 1];
      std::vector<int> groups(w.basis.dim());
      for (int i = 0; i < w.basis.dim(); ++i)
        groups[i] = slot_offset[layout.group[i] - 1] + layout.column[i];
      return with_group_map(s, groups);
    }
  }
  throw std::invalid_argument("unknown schedule family");
}

std::unique_ptr<ScoreFunction> make_score(const CommonOpts& o, const Workspace& w) {
  if (o.exact_score && !o.checkpoint_path.empty())
    throw std::invalid_argument("give either --exact-score or --checkpoint, not both");
  if (o.exact_score) {
    if (w.synth_spec && w.basis.kind == BasisKind::identity &&
        w.basis.scaling.isOnes()) {
      return std::make_unique<GaussianMixtureScore>(*w.synth_spec);
    }
    // Diagonal-Gaussian fit to the transformed training data.
    GaussianMixture fit;
    fit.weights = Eigen::VectorXd::Ones(1);
    fit.means = Eigen::MatrixXd::Zero(1, w.train_chi.cols());
    fit.variances = w.variances.cwiseMax(1e-12).transpose();
    return std::make_unique<GaussianMixtureScore>(fit);
  }
  if (!o.checkpoint_path.empty()) {
    require_file(o.checkpoint_path);
    MlpParams raw, ema;
    load_checkpoint(o.checkpoint_path, raw, ema);
    return std::make_unique<NetScore>(o.use_raw_params ? raw : ema, w.basis.labels);
  }
  throw std::invalid_argument("a score source is required (--checkpoint or --exact-score)");
}

OdeOptions make_ode_options(const CommonOpts& o) {
  OdeOptions opts;
  opts.rel_tol = o.tol;
  opts.abs_tol = o.tol;
  opts.fixed_steps = o.fixed_steps;
  opts.t_floor = o.t_floor;
  opts.seed = splitmix64(o.seed ^ 0x0DEull);
  opts.threads = o.threads;
  return opts;
}

// ---------------------------------------------------------------------------
// Subcommand bodies

int run_fit_basis(const CommonOpts& o, const std::string& kind, int levels, bool whiten,
                  double variance_floor, const std::string& out) {
  LoadedData loaded = load_data(o);
  const Dataset& data = loaded.dataset;
  const TensorShape shape = data.shape;
  const Eigen::MatrixXd train = data.train_samples();

  BasisSpec basis;
  const BasisKind k = basis_kind_from_string(kind);
  switch (k) {
    case BasisKind::dense_orthogonal: {
      // Per-channel transform from the covariance of the channel-averaged
      // data; channel-mixing transforms are out of scope.
      const int hw = shape.pixels(), ch = shape.channels;
      Eigen::MatrixXd averaged(train.rows(), hw);
      for (Eigen::Index i = 0; i < train.rows(); ++i)
        for (int p = 0; p < hw; ++p) {
          double acc = 0.0;
          for (int c = 0; c < ch; ++c) acc += train(i, p * ch + c);
          averaged(i, p) = acc / ch;
        }
      const Eigen::MatrixXd centered = averaged.rowwise() - averaged.colwise().mean();
      const Eigen::MatrixXd cov =
          centered.transpose() * centered / double(averaged.rows() - 1);
      basis = expand_per_channel(build_pca_basis(cov, false, variance_floor), shape);
      break;
    }
    case BasisKind::fft2_real:
      basis = build_fft_basis(shape);
      break;
    case BasisKind::haar:
      basis = build_haar_basis(shape, levels);
      break;
    case BasisKind::identity:
      basis = build_identity_basis(shape);
      break;
    case BasisKind::permutation:
      throw std::invalid_argument("fit-basis does not build permutation bases");
  }

  const Eigen::MatrixXd chi = forward_transform_rows(basis, train);
  const Eigen::VectorXd variances = estimate_covariance(chi).variances;
  if (k == BasisKind::dense_orthogonal) {
    for (int i = 0; i < basis.dim(); ++i)
      basis.labels[i] = -std::log(std::max(variances[i], variance_floor));
  }
  if (whiten) apply_whitening(basis, variances, variance_floor);

  const std::string path = out_path(out, "basis.gudbasis");
  save_basis(path, basis);
  std::cout << "wrote " << path << " (kind=" << to_string(basis.kind)
            << ", d=" << basis.dim() << ")\n";
  return 0;
}

int run_train(CommonOpts& o, const TrainConfig& base_cfg,
              const std::string& a_range_text, const std::string& b_range_text,
              const std::string& r_range_text, const std::string& out,
              const std::string& log_out) {
  Workspace w = make_workspace(o);
  TrainConfig cfg = base_cfg;
  cfg.seed = splitmix64(o.seed ^ 0x7124ull);

  auto parse_range = [](const std::string& text, double fixed) {
    std::pair<double, double> range{fixed, fixed};
    if (!text.empty()) {
      const std::vector<double> vals = parse_double_list(text);
      if (vals.size() != 2) throw std::invalid_argument("ranges need two values lo,hi");
      range = {vals[0], vals[1]};
    }
    return range;
  };
  const auto a_range = parse_range(a_range_text, o.a);
  const auto b_range = parse_range(b_range_text, o.b);
  const auto r_range = parse_range(r_range_text, o.r);

  CommonOpts sched_opts = o;
  ScheduleSampler sampler = [&, sched_opts](RandomStream& rng) mutable {
    CommonOpts draw = sched_opts;
    draw.a = a_range.first + (a_range.second - a_range.first) * rng.uniform();
    draw.b = b_range.first + (b_range.second - b_range.first) * rng.uniform();
    draw.r = r_range.first + (r_range.second - r_range.first) * rng.uniform();
    return make_schedule(draw, w);
  };

  const std::string log_path = out_path(log_out, "train_log.csv");
  std::ofstream log(log_path);
  log << "step,loss,wall_time_s\n";
  const auto start = std::chrono::steady_clock::now();
  const TrainResult result =
      train(cfg, w.train_chi, w.basis.labels, sampler, [&](int step, double loss) {
        if (step % 50 == 0 || step + 1 == cfg.steps) {
          const double elapsed =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                  .count();
          log << step << ',' << format_double(loss) << ',' << format_double(elapsed)
              << '\n';
        }
      });

  const std::string path = out_path(out, "net.gudnet");
  save_checkpoint(path, result.params, result.ema);
  std::cout << "wrote " << path << " (final loss "
            << format_double(result.loss_history.back()) << ")\n";
  return 0;
}

int run_sample(CommonOpts& o, int n_samples, const std::string& out) {
  Workspace w = make_workspace(o);
  const Schedule schedule = make_schedule(o, w);
  const auto score = make_score(o, w);

  Eigen::MatrixXd chi;
  if (o.sampler == "sde") {
    chi = reverse_sde_sample(*score, schedule, o.steps, n_samples,
                             splitmix64(o.seed ^ 0x5A3Dull), o.threads);
  } else if (o.sampler == "ode") {
    chi = ode_sample(*score, schedule, n_samples, make_ode_options(o));
  } else {
    throw std::invalid_argument("unknown sampler: " + o.sampler);
  }

  SampleTensor tensor;
  tensor.shape = w.dataset.shape;
  tensor.component_space = false;
  tensor.values = inverse_transform_rows(w.basis, chi);
  tensor.values.rowwise() += w.dataset.mean.transpose();

  const std::string path = out_path(out, "samples.gudsamps");
  save_samples(path, tensor);
  std::cout << "wrote " << path << " (" << n_samples << " samples)\n";
  return 0;
}

int run_nll(CommonOpts& o, int n_samples, bool use_test_split, const std::string& out) {
  Workspace w = make_workspace(o);
  const Schedule schedule = make_schedule(o, w);
  const auto score = make_score(o, w);

  Eigen::MatrixXd pool = use_test_split
                             ? forward_transform_rows(
                                   w.basis,
                                   w.dataset.samples.bottomRows(w.dataset.count() -
                                                                w.dataset.train_count()))
                             : w.train_chi;
  if (pool.rows() == 0) throw std::invalid_argument("no samples in the requested split");
  const int n = std::min<int>(n_samples, static_cast<int>(pool.rows()));
  const NllResult result =
      ode_nll(*score, schedule, pool.topRows(n), make_ode_options(o));

  const double base_change = w.basis.scaling.array().log().sum();
  const double nats_per_dim_data =
      (result.per_sample_nats.array() + base_change).mean() / result.dim;
  const double dequant_bits =
      w.dataset.quant_levels > 0 ? std::log2(w.dataset.quant_levels / 2.0) : 0.0;
  const double bits_per_dim = nats_per_dim_data / std::log(2.0) + dequant_bits;

  const std::string path = out_path(out, "nll.csv");
  std::ofstream os(path);
  os << "dataset,schedule,a,b,r,nats_per_dim,bits_per_dim,se_nats_per_dim,samples\n";
  os << (o.data_path.empty() ? "synthetic" : o.data_path) << ','
     << o.schedule_family << ',' << format_double(o.a) << ',' << format_double(o.b)
     << ',' << format_double(o.r) << ',' << format_double(nats_per_dim_data) << ','
     << format_double(bits_per_dim) << ','
     << format_double(result.std_error_nats_per_dim) << ',' << n << '\n';
  std::cout << "nats/dim " << format_double(nats_per_dim_data) << "  bits/dim "
            << format_double(bits_per_dim) << "  (n=" << n << ", se "
            << format_double(result.std_error_nats_per_dim) << ")\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_extend(CommonOpts& o, int k, int cycles, const std::string& out,
               const std::string& index_out) {
  Workspace w = make_workspace(o);
  o.schedule_family = "column";
  const Schedule schedule = make_schedule(o, w);
  const auto score = make_score(o, w);

  const ExtensionResult result =
      extend_image(*score, schedule, w.dataset.shape, k, cycles, o.steps,
                   splitmix64(o.seed ^ 0xE7Eull));

  SampleTensor tensor;
  tensor.shape = TensorShape{w.dataset.shape.height,
                             static_cast<int>(result.strip.cols()),
                             w.dataset.shape.channels};
  tensor.component_space = true;
  Eigen::MatrixXd flat(1, tensor.shape.dim());
  for (int y = 0; y < tensor.shape.height; ++y)
    for (int x = 0; x < tensor.shape.width; ++x)
      for (int c = 0; c < tensor.shape.channels; ++c)
        flat(0, tensor.shape.flat_index(y, x, c)) =
            result.strip(y * tensor.shape.channels + c, x);
  tensor.values = flat;

  const std::string path = out_path(out, "strip.gudsamps");
  save_samples(path, tensor);
  std::ofstream idx(out_path(index_out, "strip_index.csv"));
  idx << "cycle,first_column,last_column\n";
  for (size_t i = 0; i < result.committed.size(); ++i)
    idx << i << ',' << result.committed[i].first << ',' << result.committed[i].second - 1
        << '\n';
  std::cout << "wrote " << path << " (width " << tensor.shape.width << ")\n";
  return 0;
}

int run_reconstruct(CommonOpts& o, const std::string& input, int index, double t_noise,
                    int n_variants, const std::string& out) {
  Workspace w = make_workspace(o);
  const Schedule schedule = make_schedule(o, w);
  const auto score = make_score(o, w);

  Eigen::VectorXd phi;
  if (!input.empty()) {
    require_file(input);
    const SampleTensor in = load_samples(input);
    if (index < 0 || index >= in.values.rows())
      throw std::invalid_argument("sample index out of range");
    phi = in.values.row(index).transpose() - w.dataset.mean;
  } else {
    if (index < 0 || index >= w.dataset.count())
      throw std::invalid_argument("sample index out of range");
    phi = w.dataset.samples.row(index).transpose();
  }
  const Eigen::VectorXd chi0 = forward_transform(w.basis, phi);

  const Eigen::MatrixXd variants = reconstruct(
      *score, schedule, chi0, t_noise, splitmix64(o.seed ^ 0x4ec0ull), n_variants, o.steps);

  SampleTensor tensor;
  tensor.shape = w.dataset.shape;
  tensor.component_space = false;
  tensor.values = inverse_transform_rows(w.basis, variants);
  tensor.values.rowwise() += w.dataset.mean.transpose();
  const std::string path = out_path(out, "reconstructions.gudsamps");
  save_samples(path, tensor);
  std::cout << "wrote " << path << " (" << n_variants << " variants)\n";
  return 0;
}

int run_schedule_viz(CommonOpts& o, const std::string& log_var_text, int grid,
                     const std::string& out) {
  Schedule schedule;
  Eigen::VectorXd log_var;
  if (!log_var_text.empty()) {
    const std::vector<double> vals = parse_double_list(log_var_text);
    log_var = Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size());
    Workspace w;  // no data needed; synthesize enough state for make_schedule
    w.log_var = log_var;
    w.basis = build_identity_basis(TensorShape{1, static_cast<int>(vals.size()), 1});
    w.basis.labels = -log_var;  // ordering by variance
    schedule = make_schedule(o, w);
  } else {
    Workspace w = make_workspace(o);
    log_var = w.log_var;
    schedule = make_schedule(o, w);
  }

  const std::string path = out_path(out, "schedule.csv");
  std::ofstream os(path);
  os << "t,component_index,gamma,log_snr,beta\n";
  for (int g = 0; g <= grid; ++g) {
    const double t = double(g) / grid;
    const NoisingState state = schedule.state(t);
    const Eigen::VectorXd snr = log_snr(state, log_var);
    const Eigen::VectorXd beta = beta_from_schedule(schedule, t);
    for (int i = 0; i < schedule.dim(); ++i)
      os << format_double(t) << ',' << i << ',' << format_double(state.gamma[i]) << ','
         << format_double(snr[i]) << ',' << format_double(beta[i]) << '\n';
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_sweep(CommonOpts& o, const std::string& a_grid_text, const std::string& r_grid_text,
              int n_samples, const std::string& out) {
  Workspace w = make_workspace(o);
  const auto score = make_score(o, w);

  std::vector<double> a_grid = a_grid_text.empty() ? std::vector<double>{o.a}
                                                   : parse_double_list(a_grid_text);
  std::vector<double> r_grid = r_grid_text.empty() ? std::vector<double>{o.r}
                                                   : parse_double_list(r_grid_text);

  const int n = std::min<int>(n_samples, static_cast<int>(w.train_chi.rows()));
  const std::string path = out_path(out, "sweep.csv");
  std::ofstream os(path);
  os << "a,r,nats_per_dim,bits_per_dim,se_nats_per_dim,samples\n";
  for (double r : r_grid) {
    for (double a : a_grid) {
      CommonOpts point = o;
      point.a = a;
      point.r = r;
      const Schedule schedule = make_schedule(point, w);
      const NllResult result =
          ode_nll(*score, schedule, w.train_chi.topRows(n), make_ode_options(o));
      const double base_change = w.basis.scaling.array().log().sum();
      const double nats =
          (result.per_sample_nats.array() + base_change).mean() / result.dim;
      const double dequant_bits =
          w.dataset.quant_levels > 0 ? std::log2(w.dataset.quant_levels / 2.0) : 0.0;
      os << format_double(a) << ',' << format_double(r) << ',' << format_double(nats)
         << ',' << format_double(nats / std::log(2.0) + dequant_bits) << ','
         << format_double(result.std_error_nats_per_dim) << ',' << n << '\n';
    }
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_convert(const std::string& input, const std::string& output, int height, int width,
                int channels, int levels) {
  require_file(input);
  std::ifstream probe(input, std::ios::binary);
  char magic[7] = {};
  probe.read(magic, 7);
  if (std::string(magic, 7) == "GUDIMGS") {
    images_to_csv(output, load_images(input));
  } else {
    if (height < 1 || width < 1 || channels < 1)
      throw std::invalid_argument("csv conversion needs --height/--width/--channels");
    const RawImages raw =
        images_from_csv(input, TensorShape{height, width, channels}, levels);
    save_images(output, raw);
  }
  std::cout << "wrote " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component-wise diffusion models with configurable bases, priors, and "
               "noise schedules"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Plain-text key=value configuration file");

  CommonOpts o;

  // fit-basis
  auto* fit = app.add_subcommand("fit-basis", "Estimate statistics and store a basis");
  std::string fit_kind = "pca";
  int fit_levels = 1;
  bool fit_whiten = false;
  double fit_floor = 1e-6;
  std::string fit_out;
  add_data_flags(fit, o);
  add_run_flags(fit, o);
  fit->add_option("--kind", fit_kind, "identity | pca | fft | haar")->default_val("pca");
  fit->add_option("--levels", fit_levels, "Haar decomposition levels")->default_val(1);
  fit->add_flag("--whiten", fit_whiten, "Scale components to unit variance");
  fit->add_option("--variance-floor", fit_floor, "Lower bound when whitening")
      ->default_val(1e-6);
  fit->add_option("--out", fit_out, "Output GUDBASIS path");

  // train
  auto* tr = app.add_subcommand("train", "Train the noise-prediction network");
  TrainConfig tcfg;
  std::string tr_a_range, tr_b_range, tr_r_range, tr_out, tr_log;
  std::string tr_hidden = "256,256,256";
  add_data_flags(tr, o);
  add_schedule_flags(tr, o);
  add_run_flags(tr, o);
  tr->add_option("--basis", o.basis_path, "GUDBASIS path");
  tr->add_option("--train-steps", tcfg.steps, "Optimizer steps")->default_val(20000);
  tr->add_option("--batch", tcfg.batch_size, "Batch size")->default_val(128);
  tr->add_option("--lr", tcfg.learning_rate, "Learning rate")->default_val(5e-4);
  tr->add_option("--ema", tcfg.ema_decay, "EMA decay")->default_val(0.999);
  tr->add_option("--hidden", tr_hidden, "Comma list of hidden layer widths")
      ->default_val("256,256,256");
  tr->add_option("--a-range", tr_a_range, "Per-batch uniform range lo,hi for a");
  tr->add_option("--b-range", tr_b_range, "Per-batch uniform range lo,hi for b");
  tr->add_option("--r-range", tr_r_range, "Per-batch uniform range lo,hi for r");
  tr->add_option("--out", tr_out, "Output GUDNET path");
  tr->add_option("--log", tr_log, "Training log CSV path");

  // sample
  auto* sa = app.add_subcommand("sample", "Draw samples with the reverse SDE or ODE");
  int sa_n = 16;
  std::string sa_out;
  add_data_flags(sa, o);
  add_schedule_flags(sa, o);
  add_sampler_flags(sa, o);
  add_run_flags(sa, o);
  sa->add_option("--basis", o.basis_path, "GUDBASIS path");
  sa->add_option("--checkpoint", o.checkpoint_path, "GUDNET path");
  sa->add_flag("--exact-score", o.exact_score, "Analytic diagonal-Gaussian score");
  sa->add_flag("--raw-params", o.use_raw_params, "Use raw instead of EMA parameters");
  sa->add_option("--n", sa_n, "Sample count")->default_val(16);
  sa->add_option("--out", sa_out, "Output GUDSAMPS path");

  // nll
  auto* nl = app.add_subcommand("nll", "Log-likelihood along the probability-flow ODE");
  int nl_n = 1024;
  bool nl_test_split = false;
  std::string nl_out;
  add_data_flags(nl, o);
  add_schedule_flags(nl, o);
  add_sampler_flags(nl, o);
  add_run_flags(nl, o);
  nl->add_option("--basis", o.basis_path, "GUDBASIS path");
  nl->add_option("--checkpoint", o.checkpoint_path, "GUDNET path");
  nl->add_flag("--exact-score", o.exact_score, "Analytic diagonal-Gaussian score");
  nl->add_flag("--raw-params", o.use_raw_params, "Use raw instead of EMA parameters");
  nl->add_option("--samples", nl_n, "Evaluation sample count")->default_val(1024);
  nl->add_flag("--test-split", nl_test_split, "Evaluate on the test split");
  nl->add_option("--out", nl_out, "Output CSV path");

  // extend
  auto* ex = app.add_subcommand("extend", "Sequential strip extension (column schedule)");
  int ex_k = 9, ex_cycles = 4;
  std::string ex_out, ex_index;
  add_data_flags(ex, o);
  add_schedule_flags(ex, o);
  add_run_flags(ex, o);
  ex->add_option("--basis", o.basis_path, "GUDBASIS path");
  ex->add_option("--checkpoint", o.checkpoint_path, "GUDNET path");
  ex->add_flag("--exact-score", o.exact_score, "Analytic diagonal-Gaussian score");
  ex->add_flag("--raw-params", o.use_raw_params, "Use raw instead of EMA parameters");
  ex->add_option("--k", ex_k, "Columns committed per cycle")->default_val(9);
  ex->add_option("--cycles", ex_cycles, "Extension cycles")->default_val(4);
  ex->add_option("--steps", o.steps, "SDE steps per unit time")->default_val(500);
  ex->add_option("--out", ex_out, "Output strip path");
  ex->add_option("--index-out", ex_index, "Contact-sheet CSV path");

  // reconstruct
  auto* re = app.add_subcommand("reconstruct", "Partially noise and re-generate an image");
  std::string re_input, re_out;
  int re_index = 0, re_variants = 4;
  double re_t = 0.5;
  add_data_flags(re, o);
  add_schedule_flags(re, o);
  add_run_flags(re, o);
  re->add_option("--basis", o.basis_path, "GUDBASIS path");
  re->add_option("--checkpoint", o.checkpoint_path, "GUDNET path");
  re->add_flag("--exact-score", o.exact_score, "Analytic diagonal-Gaussian score");
  re->add_flag("--raw-params", o.use_raw_params, "Use raw instead of EMA parameters");
  re->add_option("--input", re_input, "GUDSAMPS input (defaults to the dataset)");
  re->add_option("--index", re_index, "Sample index")->default_val(0);
  re->add_option("--t-noise", re_t, "Noising time in (0, 1)")->default_val(0.5);
  re->add_option("--variants", re_variants, "Completion count")->default_val(4);
  re->add_option("--steps", o.steps, "SDE steps per unit time")->default_val(500);
  re->add_option("--out", re_out, "Output GUDSAMPS path");

  // schedule-viz
  auto* viz = app.add_subcommand("schedule-viz", "Emit gamma/log-SNR/beta paths as CSV");
  std::string viz_log_var, viz_out;
  int viz_grid = 100;
  add_data_flags(viz, o);
  add_schedule_flags(viz, o);
  add_run_flags(viz, o);
  viz->add_option("--basis", o.basis_path, "GUDBASIS path");
  viz->add_option("--log-var", viz_log_var,
                  "Comma list of per-component log variances (skips --data)");
  viz->add_option("--grid", viz_grid, "Time grid intervals")->default_val(100);
  viz->add_option("--out", viz_out, "Output CSV path");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Evaluate NLL over a softness/ordering grid");
  std::string sw_a_grid, sw_r_grid, sw_out;
  int sw_n = 256;
  add_data_flags(sw, o);
  add_schedule_flags(sw, o);
  add_sampler_flags(sw, o);
  add_run_flags(sw, o);
  sw->add_option("--basis", o.basis_path, "GUDBASIS path");
  sw->add_option("--checkpoint", o.checkpoint_path, "GUDNET path");
  sw->add_flag("--exact-score", o.exact_score, "Analytic diagonal-Gaussian score");
  sw->add_flag("--raw-params", o.use_raw_params, "Use raw instead of EMA parameters");
  sw->add_option("--a-grid", sw_a_grid, "Comma list of a values");
  sw->add_option("--r-grid", sw_r_grid, "Comma list of r values");
  sw->add_option("--samples", sw_n, "Evaluation sample count per point")->default_val(256);
  sw->add_option("--out", sw_out, "Output CSV path");

  // convert
  auto* cv = app.add_subcommand("convert", "Convert between flat pixel CSV and GUDIMGS");
  std::string cv_in, cv_out;
  int cv_h = 0, cv_w = 0, cv_c = 1, cv_levels = 256;
  cv->add_option("input", cv_in, "Input file (.csv or .gudimgs)")->required();
  cv->add_option("output", cv_out, "Output file")->required();
  cv->add_option("--height", cv_h, "Image height (csv input)");
  cv->add_option("--width", cv_w, "Image width (csv input)");
  cv->add_option("--channels", cv_c, "Image channels (csv input)")->default_val(1);
  cv->add_option("--quant-levels", cv_levels, "Quantization levels")->default_val(256);

  // The config file is processed by the top-level app; fallthrough lets
  // `gud <cmd> --config file` reach it. Keys live in a [<cmd>] section.
  for (CLI::App* sub : {fit, tr, sa, nl, ex, re, viz, sw, cv}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (fit->parsed())
      return run_fit_basis(o, fit_kind, fit_levels, fit_whiten, fit_floor, fit_out);
    if (tr->parsed()) {
      const std::vector<double> widths = parse_double_list(tr_hidden);
      tcfg.hidden.clear();
      for (double v : widths) tcfg.hidden.push_back(static_cast<int>(v));
      return run_train(o, tcfg, tr_a_range, tr_b_range, tr_r_range, tr_out, tr_log);
    }
    if (sa->parsed()) return run_sample(o, sa_n, sa_out);
    if (nl->parsed()) return run_nll(o, nl_n, nl_test_split, nl_out);
    if (ex->parsed()) return run_extend(o, ex_k, ex_cycles, ex_out, ex_index);
    if (re->parsed())
      return run_reconstruct(o, re_input, re_index, re_t, re_variants, re_out);
    if (viz->parsed()) return run_schedule_viz(o, viz_log_var, viz_grid, viz_out);
    if (sw->parsed()) return run_sweep(o, sw_a_grid, sw_r_grid, sw_n, sw_out);
    if (cv->parsed()) return run_convert(cv_in, cv_out, cv_h, cv_w, cv_c, cv_levels);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
