#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hef/corpus.hpp"
#include "hef/emotion.hpp"

namespace hef {

// ---------------------------------------------------------------------------
// Small-scale empathetic model: an attention bag-of-words emotion classifier.
//
//   h_i = tanh(W e_i + b)          per context token embedding e_i
//   a   = softmax_i(q . h_i)       word attention
//   c   = sum_i a_i e_i            attended context vector
//   p   = softmax(C c + c_b)       32-way emotion distribution
//
// Trained with mini-batch gradient descent plus momentum on mean
// cross-entropy. All arithmetic is double precision and single-threaded so
// a fixed seed gives bit-identical parameters.
// ---------------------------------------------------------------------------

/// Dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct SemHyperparams {
    std::size_t dim = 100;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double lr_decay = 0.5;  // applied when validation loss does not improve
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    std::size_t min_count = 2;  // rarer training words share the unknown embedding
    double init_scale = 0.1;
    std::uint64_t seed = 13;
};

/// Every trainable tensor. Gradients use the same shape.
struct SemParams {
    Matrix embeddings;  // |V| x d
    Matrix attn_proj;   // d x d
    std::vector<double> attn_bias;
    std::vector<double> attn_query;
    Matrix cls_weight;  // 32 x d
    std::vector<double> cls_bias;

    static SemParams zeros(std::size_t vocab_size, std::size_t dim);

    /// Flat views over each parameter group, in a fixed order.
    std::array<std::span<double>, 6> groups();
    std::array<std::span<const double>, 6> groups() const;
    static constexpr std::array<const char*, 6> kGroupNames = {
        "embeddings", "attn_proj", "attn_bias", "attn_query", "cls_weight", "cls_bias"};

    bool all_finite() const;
    friend bool operator==(const SemParams&, const SemParams&) = default;
};

/// Token -> dense index. Index 0 is the shared unknown token.
class Vocabulary {
public:
    static constexpr std::size_t kUnknown = 0;
    static constexpr const char* kUnknownToken = "<unk>";

    Vocabulary();
    /// Keeps words seen at least `min_count` times; insertion order is
    /// first occurrence in `docs`.
    static Vocabulary build(std::span<const Tokens> docs, std::size_t min_count);
    static Vocabulary from_tokens(std::vector<std::string> tokens);  // tokens[0] must be <unk>

    std::size_t lookup(const std::string& token) const;
    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t index) const { return tokens_.at(index); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::vector<std::size_t> encode(std::span<const std::string> words) const;

private:
    void add(const std::string& token);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct SemModel {
    Vocabulary vocab;
    SemParams params;
    SemHyperparams hyper;
};

/// Uniform(+-init_scale) embeddings and attention query, Xavier-style
/// attention projection, zero classifier.
SemModel init_model(Vocabulary vocab, const SemHyperparams& hyper);

/// One training/evaluation example in encoded form.
struct EncodedExample {
    std::vector<std::size_t> token_ids;
    EmotionLabel label = EmotionLabel::from_index(0);
};

EncodedExample encode(const SemModel& model, const Dialogue& d);

struct LossAndGrad {
    double loss = 0.0;  // mean cross-entropy over the batch
    SemParams grad;
};

/// Analytic gradient of the mean cross-entropy w.r.t. every parameter.
LossAndGrad loss_and_grad(const SemModel& model, std::span<const EncodedExample> batch);
LossAndGrad loss_and_grad(const SemModel& model, std::span<const Dialogue> dialogues,
                          std::span<const EmotionLabel> labels);

/// Mean cross-entropy only (used by finite-difference checks).
double mean_loss(const SemModel& model, std::span<const EncodedExample> batch);

struct Forward {
    std::vector<double> attention;           // aligned with the input tokens
    std::array<double, kNumEmotions> probs{};
};

Forward forward(const SemModel& model, std::span<const std::size_t> token_ids);

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_accuracy = 0.0;
    double learning_rate = 0.0;
};

struct TrainOptions {
    SemHyperparams hyper;
    std::function<void(const EpochLog&)> on_epoch;  // optional progress hook
};

/// Trains from scratch and returns the parameters from the epoch with the
/// best validation accuracy (training accuracy when `valid` is empty).
/// Throws hef::Error(numeric) naming the epoch if the loss diverges.
SemModel train_sem(std::span<const Dialogue> train, std::span<const Dialogue> valid, const TrainOptions& opts);

/// Top-1 accuracy of the model on a labelled set.
double sem_accuracy(const SemModel& model, std::span<const EncodedExample> data);

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

struct AttentionEntry {
    std::string word;
    double weight = 0.0;
    friend bool operator==(const AttentionEntry&, const AttentionEntry&) = default;
};

struct SemAnnotation {
    std::string dialogue_id;
    std::array<double, kNumEmotions> emotion_probs{};  // indexed by EmotionLabel::index()
    std::vector<AttentionEntry> attention;              // aligned with context_words
    friend bool operator==(const SemAnnotation&, const SemAnnotation&) = default;
};

SemAnnotation annotate(const SemModel& model, const Dialogue& d);

/// `k` labels by descending probability; ties go to canonical label order.
std::vector<EmotionLabel> top_k_emotions(const SemAnnotation& a, std::size_t k);

/// Checks both normalizations within `tolerance`. Throws hef::Error(data).
void validate_annotation(const SemAnnotation& a, double tolerance = 1e-4);

/// One JSON object per line:
/// {"dialogue_id": s, "emotion_probs": {label: p, ...32}, "attention": [{"word": w, "weight": x}, ...]}
void write_annotations(const std::filesystem::path& path, std::span<const SemAnnotation> annotations);
std::string annotation_to_json(const SemAnnotation& a);
SemAnnotation annotation_from_json(const std::string& line);  // throws hef::Error(data)

/// Loads and validates an annotation file; errors carry the line number.
std::vector<SemAnnotation> load_external_annotations(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints: JSON {"format": "hef-sem", "version": 1, "hyperparams", "vocab",
// and one {"rows", "cols", "data"} object per parameter group}.
// ---------------------------------------------------------------------------

void save_model(const SemModel& model, const std::filesystem::path& path);
SemModel load_model(const std::filesystem::path& path);

}  // namespace hef
