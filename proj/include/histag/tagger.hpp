#pragma once

// Per-task neural taggers.
//
// Every task owns a full model: a character embedder, a (bi)recurrent
// character encoder producing one vector per word, and a bidirectional
// recurrent context encoder over the words of the sentence. The LEMMA task
// adds an attention decoder that writes the lemma character by character;
// every other task is a single linear classification layer.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "histag/graph.hpp"
#include "histag/morph.hpp"
#include "histag/preprocess.hpp"
#include "histag/task.hpp"

namespace histag {

enum class TargetMetric { accuracy, precision, recall, f1 };

std::string_view metric_name(TargetMetric m);
TargetMetric parse_metric(std::string_view name);

struct TrainConfig {
    TaskId task = TaskId::POS;
    int cemb_size = 150;
    int cemb_layers = 2;
    int hidden_size = 150;
    double dropout = 0.32;
    double learning_rate = 0.0049;
    int lr_patience = 2;
    double lr_decay = 0.6;
    int early_stop_patience = 5;
    TargetMetric target_metric = TargetMetric::accuracy;
    int max_epochs = 100;
    std::uint64_t seed = 1;
    double noise_probability = 0.1;
    int batch_size = 32;
    double grad_clip = 5.0;

    void check() const;

    /// Flat key=value lines, one per field.
    std::string to_text() const;
    /// Reads key=value lines over the defaults; unknown keys are errors.
    static TrainConfig from_text(std::string_view text);
    /// Applies one key=value assignment.
    void set(std::string_view key, std::string_view value);

    bool operator==(const TrainConfig&) const = default;
};

/// Dense string <-> index table with occurrence counts.
class Vocabulary {
public:
    int add(const std::string& item, std::size_t count = 1);
    /// Index of `item`, or `fallback` when absent.
    int find(const std::string& item, int fallback = -1) const;
    const std::string& item(int index) const { return items_.at(static_cast<std::size_t>(index)); }
    std::size_t count(int index) const { return counts_.at(static_cast<std::size_t>(index)); }
    std::size_t size() const { return items_.size(); }
    bool contains(const std::string& item) const { return index_.count(item) > 0; }
    const std::vector<std::string>& items() const { return items_; }

    bool operator==(const Vocabulary& o) const { return items_ == o.items_ && counts_ == o.counts_; }

private:
    std::vector<std::string> items_;
    std::vector<std::size_t> counts_;
    std::unordered_map<std::string, int> index_;
};

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;

struct Vocabularies {
    Vocabulary characters;     // input alphabet, sentinels at 0..3
    Vocabulary labels;         // classifier labels (empty for LEMMA)
    Vocabulary lemma_chars;    // lemma output alphabet (LEMMA only)

    bool operator==(const Vocabularies&) const = default;
};

/// Builds the vocabularies from the training split only. With
/// `include_uppercase` the uppercased spelling of every form is added so
/// capitalization noise does not map to the unknown sentinel.
Vocabularies build_vocab(const std::vector<Sentence>& train, TaskId task,
                         bool include_uppercase = false);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_metric = 0.0;
    double learning_rate = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainedModel {
    TaskId task = TaskId::POS;
    TrainConfig config;
    Vocabularies vocab;
    std::vector<nn::Parameter> params;
    std::vector<EpochRecord> log;
    int best_epoch = 0;

    nn::Parameter& param(std::string_view name);
    const nn::Parameter& param(std::string_view name) const;
    std::size_t parameter_count() const;
};

/// Creates a model with freshly initialized parameters for the given
/// vocabularies.
TrainedModel init_model(const TrainConfig& config, Vocabularies vocab);

/// Tracks a dev metric across epochs and decides on learning-rate decay and
/// early stopping.
class PlateauTracker {
public:
    PlateauTracker(int lr_patience, int stop_patience) : lr_patience_(lr_patience), stop_patience_(stop_patience) {}

    enum class Action { improved, none, decay_lr, stop };

    /// Records the metric of `epoch`; `stop` takes precedence over `decay_lr`.
    Action observe(int epoch, double metric);
    int best_epoch() const { return best_epoch_; }
    double best() const { return best_; }

private:
    int lr_patience_;
    int stop_patience_;
    int best_epoch_ = 0;
    double best_ = -1.0;
    int since_best_ = 0;
    int since_decay_ = 0;
};

/// Mean loss per prediction unit (word or lemma character) of one batch.
/// `train` enables dropout. When `grads` is given it receives one gradient
/// per parameter, in `model.params` order.
double batch_loss(const TrainedModel& model, const std::vector<Sentence>& batch, bool train, Rng& rng,
                  std::vector<nn::Matrix>* grads = nullptr);

/// Per-epoch progress callback.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on splits.train with fresh capitalization noise every epoch and
/// returns the snapshot of the best dev epoch. Throws RuntimeFailure on a
/// non-finite loss and InputError on an empty dev split.
TrainedModel train(const TrainConfig& config, const SplitSet& splits, const EpochCallback& on_epoch = {});

/// Predicted column of the model's task for every token of every sentence.
std::vector<std::vector<std::string>> predict_labels(const TrainedModel& model,
                                                     const std::vector<std::vector<std::string>>& sentences);

/// Lemmas by greedy decoding; requires a LEMMA model.
std::vector<std::string> decode_lemmas(const TrainedModel& model, const std::vector<std::string>& forms);
/// Classifier labels; requires a non-LEMMA model.
std::vector<std::string> classify(const TrainedModel& model, const std::vector<std::string>& forms);

struct PredictedToken {
    std::string lemma = "_";
    std::string pos = "_";
    MorphVector morph;

    std::string composite_morph() const { return join_morph(morph); }
};

using PredictedAnnotations = std::vector<PredictedToken>;

/// Fills the field of the model's task; the others stay "_".
PredictedAnnotations predict_sentence(const TrainedModel& model, const std::vector<std::string>& forms);

void save_model(const TrainedModel& model, const std::string& path);
std::string serialize_model(const TrainedModel& model);
/// Throws InputError on bad magic, version mismatch, truncation, or a task
/// other than `expected` when given.
TrainedModel load_model(const std::string& path, std::optional<TaskId> expected = std::nullopt);
TrainedModel deserialize_model(std::string_view bytes, std::optional<TaskId> expected = std::nullopt);

/// One model per task, combined into full token annotations.
class ModelSet {
public:
    void add(TrainedModel model);
    bool empty() const { return models_.empty(); }
    bool has(TaskId task) const { return models_.count(task) > 0; }
    const TrainedModel& get(TaskId task) const;
    std::vector<TaskId> tasks() const;

    /// Loads every "<task>.model" file found in `dir`.
    static ModelSet load_dir(const std::string& dir);

    /// Annotates pre-tokenized sentences. Forms are numeral-normalized before
    /// prediction; tasks without a model yield "_".
    std::vector<Sentence> annotate(const std::vector<std::vector<std::string>>& sentences) const;

private:
    std::map<TaskId, TrainedModel> models_;
};

}  // namespace histag
