#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "psse/measurement.hpp"
#include "psse/neuralnet.hpp"
#include "psse/tensor.hpp"

namespace psse {

/// Stacked Elman recursion over a window of r states:
/// s_t^l = f(R_in^l s_t^{l-1} + R_ss^l s_{t-1}^l + r^l), s_t^0 = v_t, zero
/// initial hidden states, forecast = R_out s_t^L + r_out at the last step.
struct RnnParams {
  Activation activation = Activation::Relu;
  int window = 1;
  std::vector<Tensor> r_in;  ///< width_l x width_{l-1}
  std::vector<Tensor> r_ss;  ///< width_l x width_l
  std::vector<Tensor> bias;  ///< width_l x 1
  Tensor r_out;              ///< 2N x width_L
  Tensor b_out;              ///< 2N x 1

  int layers() const noexcept { return static_cast<int>(r_in.size()); }
  Eigen::Index state_dim() const noexcept { return r_out.rows(); }
  void validate() const;

  template <class F>
  void visit(F&& f) {
    for (std::size_t l = 0; l < r_in.size(); ++l) {
      const std::string tag = std::to_string(l + 1);
      f("R_in" + tag, r_in[l]);
      f("R_ss" + tag, r_ss[l]);
      f("r" + tag, bias[l]);
    }
    f("R_out", r_out);
    f("r_out", b_out);
  }
};

/// Fan-in scaled uniform weights (input and recurrent weights share the
/// fan-in width_{l-1} + width_l), biases zero.
RnnParams init_rnn(std::size_t state_dim, const std::vector<std::size_t>& widths, int window,
                   Activation activation, std::uint64_t seed);

/// `steps[tau]` holds time step tau of every window as a column (2N x B).
Batch rnn_forward(const RnnParams& p, const std::vector<Batch>& steps);
/// One window, oldest state first.
Eigen::VectorXd rnn_forward(const RnnParams& p, const std::vector<Eigen::VectorXd>& window);

/// Backpropagation through time; returns the mean batch loss.
double rnn_grad(const RnnParams& p, const std::vector<Batch>& steps, const Batch& target,
                const LossConfig& loss, RnnParams& grad);

/// Sliding windows (stride 1) over a state series stored column-wise. The
/// inputs and targets may come from different series of equal length, e.g.
/// estimated inputs with ground-truth targets.
struct WindowedSeries {
  Eigen::MatrixXd inputs;    ///< 2N x T
  Eigen::MatrixXd targets;   ///< 2N x T
  int window = 1;
  std::vector<Eigen::Index> target_times;  ///< each window ends at t - 1 and predicts t

  Eigen::Index count() const noexcept { return static_cast<Eigen::Index>(target_times.size()); }
  /// Windows `idx` as r step matrices, oldest first.
  std::vector<Batch> steps(const std::vector<Eigen::Index>& idx) const;
  std::vector<Batch> all_steps() const;
  Batch target_batch(const std::vector<Eigen::Index>& idx) const;
  Batch all_targets() const;
  /// Windows stacked oldest first into r * 2N rows.
  Batch flattened() const;
};

struct WindowSplit {
  WindowedSeries train;
  WindowedSeries test;
};

/// Train windows lie entirely before `split` (s - r of them); test windows
/// start at or after it (T - s - r of them). Throws SeriesTooShort when
/// T <= r + 1.
WindowSplit make_window_dataset(const Eigen::MatrixXd& series, int window, Eigen::Index split);
WindowSplit make_window_dataset(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, int window,
                                Eigen::Index split);

struct RnnArch {
  std::vector<std::size_t> widths;  ///< empty: three layers of width 2N
  int window = 10;
  Activation activation = Activation::Relu;
};

/// Adam over the windows of `data`; deterministic per cfg.seed (which also
/// seeds the initialization).
RnnParams train_rnn(const WindowedSeries& data, const TrainConfig& cfg, const RnnArch& arch,
                    TrainResult* result = nullptr, const EpochCallback& on_epoch = {});

std::string checkpoint_json(const RnnParams& p, const TrainConfig& cfg);
RnnParams rnn_from_checkpoint(std::string_view text);

struct VarParams {
  Eigen::MatrixXd transition;  ///< 2N x 2N
  Eigen::VectorXd intercept;   ///< 2N
  bool ridge = false;          ///< the fit fell back to the ridge system
};

/// Least squares v_{t+1} ~ A v_t + c over consecutive columns. When the
/// normal matrix is ill-conditioned (or T < 2N + 2) a ridge of 1e-8 is added
/// and an IllConditioned warning is appended to `warnings` when given.
VarParams var1_fit(const Eigen::MatrixXd& series, std::vector<std::string>* warnings = nullptr);
Eigen::VectorXd var1_predict(const VarParams& p, const Eigen::VectorXd& v);
Batch var1_predict(const VarParams& p, const Batch& v);

/// Single-hidden-layer FNN on flattened windows (input r * 2N).
FnnParams train_fnn_forecaster(const WindowedSeries& data, std::size_t width, const TrainConfig& cfg,
                               TrainResult* result = nullptr);

/// Replaces the unavailable entries of `z` (mask 0) by h(forecast) and marks
/// them in `imputed`; available entries are copied untouched.
MeasurementVector impute_with_forecast(const MeasurementVector& z, const Eigen::VectorXd& forecast,
                                       const FormSet& forms);

}  // namespace psse
