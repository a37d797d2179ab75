#include "cavq/model.hpp"

#include <cmath>
#include <string>

#include "cavq/errors.hpp"
#include "cavq/rng.hpp"

namespace cavq {

ModelDims ModelDims::make(std::size_t d, std::size_t d_img, std::size_t d_text, std::size_t num_classes) {
  ModelDims dims;
  dims.d = d;
  dims.d_img = d_img;
  dims.d_text = d_text;
  dims.d_k = d_text / 2;
  dims.num_classes = num_classes;
  return dims;
}

void ModelDims::validate() const {
  if (d == 0 || d_img == 0 || d_text == 0 || d_k == 0 || num_classes == 0) {
    throw ValidationError("dims: all dimensions must be positive");
  }
  if (d_k * 2 != d_text) {
    throw ValidationError("dims: d_k (" + std::to_string(d_k) + ") must equal d_text / 2 (d_text = " +
                          std::to_string(d_text) + ")");
  }
  if (num_classes < 2) throw ValidationError("dims: need at least 2 answer classes");
}

Tensor& ModelParams::at(std::size_t i) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).at(i));
}

const Tensor& ModelParams::at(std::size_t i) const {
  switch (i) {
    case 0: return w_image;
    case 1: return w_question;
    case 2: return w_fuse;
    case 3: return w_cls;
    case 4: return w_para;
    case 5: return w_orig;
    case 6: return w_out;
    default: throw IndexError("ModelParams: index " + std::to_string(i) + " out of range");
  }
}

Tensor& ModelParams::by_name(std::string_view name) {
  for (std::size_t i = 0; i < kCount; ++i) {
    if (kNames[i] == name) return at(i);
  }
  throw IndexError("ModelParams: no matrix named '" + std::string(name) + "'");
}

namespace {

struct Shape {
  std::size_t rows, cols;
};

std::array<Shape, ModelParams::kCount> expected_shapes(const ModelDims& dm) {
  return {{{dm.d_img, dm.d},
           {dm.d_text, dm.d},
           {2 * dm.d, dm.d},
           {dm.d, dm.num_classes},
           {dm.d_text, dm.d_k},
           {dm.d_text, dm.d_k},
           {dm.d_k, dm.d_text}}};
}

}  // namespace

void ModelParams::check_shapes(const ModelDims& dims) const {
  const auto shapes = expected_shapes(dims);
  for (std::size_t i = 0; i < kCount; ++i) {
    const Tensor& t = at(i);
    if (t.rows() != shapes[i].rows || t.cols() != shapes[i].cols) {
      throw DimensionError(std::string(kNames[i]) + " has shape " + t.shape_string() + ", expected [" +
                           std::to_string(shapes[i].rows) + "x" + std::to_string(shapes[i].cols) + "]");
    }
  }
}

bool ModelParams::all_finite() const {
  for (std::size_t i = 0; i < kCount; ++i) {
    if (!at(i).all_finite()) return false;
  }
  return true;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  const auto shapes = expected_shapes(dims);
  Rng rng(derive_seed(seed, 0x1417));
  ModelParams params;
  for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
    const auto [rows, cols] = shapes[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    const float fbound = static_cast<float>(bound);
    // Largest f32 not above the bound, so the range holds after narrowing.
    const float limit = static_cast<double>(fbound) > bound ? std::nextafter(fbound, 0.0f) : fbound;
    Tensor t(rows, cols);
    for (double& v : t.data()) {
      float f = static_cast<float>(rng.uniform(-bound, bound));
      if (f > limit) f = limit;
      if (f < -limit) f = -limit;
      v = static_cast<double>(f);
    }
    params.at(i) = std::move(t);
  }
  return params;
}

void round_to_f32(ModelParams& params) {
  for (std::size_t i = 0; i < ModelParams::kCount; ++i) {
    for (double& v : params.at(i).data()) v = static_cast<double>(static_cast<float>(v));
  }
}

Var ParamVars::at(std::size_t i) const {
  const Var all[ModelParams::kCount] = {w_image, w_question, w_fuse, w_cls, w_para, w_orig, w_out};
  if (i >= ModelParams::kCount) throw IndexError("ParamVars: index out of range");
  return all[i];
}

ParamVars bind_params(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamVars p;
  p.w_image = tape.watch(params.w_image, requires_grad);
  p.w_question = tape.watch(params.w_question, requires_grad);
  p.w_fuse = tape.watch(params.w_fuse, requires_grad);
  p.w_cls = tape.watch(params.w_cls, requires_grad);
  p.w_para = tape.watch(params.w_para, requires_grad);
  p.w_orig = tape.watch(params.w_orig, requires_grad);
  p.w_out = tape.watch(params.w_out, requires_grad);
  return p;
}

Projected project_inputs(Tape& tape, const ParamVars& p, Var image_embed, Var question_final) {
  return {tape.matmul(image_embed, p.w_image), tape.matmul(question_final, p.w_question)};
}

Var fuse(Tape& tape, const ParamVars& p, Var image_proj, Var question_proj) {
  return tape.matmul(tape.concat(image_proj, question_proj), p.w_fuse);
}

Var classify(Tape& tape, const ParamVars& p, Var fused) { return tape.matmul(tape.relu(fused), p.w_cls); }

Var augment_question(Tape& tape, const ParamVars& p, Var original, std::span<const Var> paraphrase_slots) {
  if (paraphrase_slots.empty()) {
    throw ContractError("augment_question: need at least one paraphrase; use the raw branch for n = 0");
  }
  Var mixed = tape.matmul(original, p.w_orig);
  for (Var slot : paraphrase_slots) mixed = tape.add(mixed, tape.matmul(slot, p.w_para));
  return tape.add(tape.relu(tape.matmul(mixed, p.w_out)), original);
}

Var forward_rows(Tape& tape, const ParamVars& p, Var images, Var questions, std::span<const Var> paraphrase_slots) {
  const Var question_final = paraphrase_slots.empty() ? questions : augment_question(tape, p, questions, paraphrase_slots);
  const Projected proj = project_inputs(tape, p, images, question_final);
  return classify(tape, p, fuse(tape, p, proj.image, proj.question));
}

namespace {

void check_length(std::span<const double> v, std::size_t expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + " has length " + std::to_string(v.size()) + ", expected " +
                         std::to_string(expected));
  }
}

}  // namespace

Var forward_on_tape(Tape& tape, const ParamVars& p, const SampleRecord& record, const ForwardMode& mode,
                    const ModelDims& dims) {
  check_length(record.image_embed, dims.d_img, "image_embed");
  check_length(record.question_embed, dims.d_text, "question_embed");
  const Var image = tape.constant(Tensor::row(record.image_embed));
  const Var question = tape.constant(Tensor::row(record.question_embed));
  std::vector<Var> slots;
  if (const auto* aug = std::get_if<AugmentedMode>(&mode)) {
    if (aug->paraphrases.empty()) throw ContractError("forward: augmented mode needs at least one paraphrase");
    for (auto para : aug->paraphrases) {
      check_length(para, dims.d_text, "paraphrase");
      slots.push_back(tape.constant(Tensor::row(para)));
    }
  }
  return forward_rows(tape, p, image, question, slots);
}

Tensor forward(const SampleRecord& record, const ForwardMode& mode, const ModelParams& params, const ModelDims& dims) {
  params.check_shapes(dims);
  Tape tape;
  const ParamVars p = bind_params(tape, params, false);
  return tape.value(forward_on_tape(tape, p, record, mode, dims));
}

Tensor predict_logits(const ModelParams& params, const ModelDims& dims, std::span<const double> image_embed,
                      std::span<const double> question_embed) {
  params.check_shapes(dims);
  check_length(image_embed, dims.d_img, "image_embed");
  check_length(question_embed, dims.d_text, "question_embed");
  Tape tape;
  const ParamVars p = bind_params(tape, params, false);
  const Var image = tape.constant(Tensor::row(image_embed));
  const Var question = tape.constant(Tensor::row(question_embed));
  return tape.value(forward_rows(tape, p, image, question, {}));
}

std::vector<std::size_t> predict_classes(const ModelParams& params, const ModelDims& dims,
                                         std::span<const SampleRecord> records) {
  params.check_shapes(dims);
  constexpr std::size_t kChunk = 256;
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, records.size() - start);
    Tensor images(m, dims.d_img), questions(m, dims.d_text);
    for (std::size_t r = 0; r < m; ++r) {
      const SampleRecord& rec = records[start + r];
      check_length(rec.image_embed, dims.d_img, "image_embed");
      check_length(rec.question_embed, dims.d_text, "question_embed");
      std::copy(rec.image_embed.begin(), rec.image_embed.end(), images.data().begin() + static_cast<std::ptrdiff_t>(r * dims.d_img));
      std::copy(rec.question_embed.begin(), rec.question_embed.end(),
                questions.data().begin() + static_cast<std::ptrdiff_t>(r * dims.d_text));
    }
    Tape tape;
    const ParamVars p = bind_params(tape, params, false);
    const Tensor& logits =
        tape.value(forward_rows(tape, p, tape.constant(std::move(images)), tape.constant(std::move(questions)), {}));
    for (std::size_t r = 0; r < m; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits(r, c) > logits(r, best)) best = c;
      }
      out.push_back(best);
    }
  }
  return out;
}

}  // namespace cavq
