#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "cavq/autodiff.hpp"
#include "cavq/dataset.hpp"
#include "cavq/tensor.hpp"

namespace cavq {

struct ModelDims {
  std::size_t d = 512;
  std::size_t d_img = 768;
  std::size_t d_text = 1024;
  std::size_t d_k = 512;
  std::size_t num_classes = 2;

  /// Dims with d_k derived as d_text / 2.
  static ModelDims make(std::size_t d, std::size_t d_img, std::size_t d_text, std::size_t num_classes);

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Learnable matrices. Row-vector convention: a projection from a to b is an
/// a x b matrix applied on the right, and there are no bias terms.
struct ModelParams {
  Tensor w_image;     // d_img x d
  Tensor w_question;  // d_text x d
  Tensor w_fuse;      // 2d x d
  Tensor w_cls;       // d x C
  Tensor w_para;      // d_text x d_k, shared across paraphrase slots
  Tensor w_orig;      // d_text x d_k
  Tensor w_out;       // d_k x d_text

  static constexpr std::size_t kCount = 7;
  static constexpr std::string_view kNames[kCount] = {"W_I", "W_Q", "W_F", "W_CLS", "W_P", "W_O", "W_out"};

  Tensor& at(std::size_t i);
  const Tensor& at(std::size_t i) const;
  Tensor& by_name(std::string_view name);

  /// Throws DimensionError if any matrix deviates from `dims`.
  void check_shapes(const ModelDims& dims) const;
  bool all_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Xavier-uniform init, deterministic in seed. Values are drawn in f32 so
/// that checkpoints reproduce them exactly.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

/// Rounds every entry to the nearest f32, matching what checkpoints store.
void round_to_f32(ModelParams& params);

struct RawMode {};
struct AugmentedMode {
  std::vector<std::span<const double>> paraphrases;
};
/// Branch selector for a training forward pass.
using ForwardMode = std::variant<RawMode, AugmentedMode>;

/// Parameter leaves of one tape.
struct ParamVars {
  Var w_image, w_question, w_fuse, w_cls, w_para, w_orig, w_out;

  Var at(std::size_t i) const;
};

ParamVars bind_params(Tape& tape, const ModelParams& params, bool requires_grad);

// Graph builders. Every input is a matrix whose rows are samples; all ops
// act row by row, so a batch of m rows equals m single-row evaluations.

struct Projected {
  Var image;
  Var question;
};
Projected project_inputs(Tape& tape, const ParamVars& p, Var image_embed, Var question_final);
Var fuse(Tape& tape, const ParamVars& p, Var image_proj, Var question_proj);
Var classify(Tape& tape, const ParamVars& p, Var fused);
/// E = E_O W_O + sum_i P_i W_P;  Q_aug = relu(E W_out) + E_O.
/// `paraphrase_slots[i]` holds the i-th sampled paraphrase of every row.
Var augment_question(Tape& tape, const ParamVars& p, Var original, std::span<const Var> paraphrase_slots);

/// Logits for a block of rows. No paraphrase slots selects the raw branch.
Var forward_rows(Tape& tape, const ParamVars& p, Var images, Var questions, std::span<const Var> paraphrase_slots);

/// Single-record forward pass on a fresh tape (no gradients).
Tensor forward(const SampleRecord& record, const ForwardMode& mode, const ModelParams& params,
               const ModelDims& dims);

/// Records a single-record forward pass on `tape` and returns the logits.
Var forward_on_tape(Tape& tape, const ParamVars& p, const SampleRecord& record, const ForwardMode& mode,
                    const ModelDims& dims);

// Inference entry points. They take only the image and question embeddings,
// so the augmentation branch cannot be reached at evaluation time.

Tensor predict_logits(const ModelParams& params, const ModelDims& dims, std::span<const double> image_embed,
                      std::span<const double> question_embed);
/// Argmax class per record, computed in batches of rows.
std::vector<std::size_t> predict_classes(const ModelParams& params, const ModelDims& dims,
                                         std::span<const SampleRecord> records);

}  // namespace cavq
