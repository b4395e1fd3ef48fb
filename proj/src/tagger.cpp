#include "histag/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "histag/evaluation.hpp"

namespace histag {

using nn::Graph;
using nn::Matrix;
using nn::Parameter;
using nn::Var;

// --- configuration --------------------------------------------------------

std::string_view metric_name(TargetMetric m) {
    switch (m) {
        case TargetMetric::accuracy: return "accuracy";
        case TargetMetric::precision: return "precision";
        case TargetMetric::recall: return "recall";
        case TargetMetric::f1: return "f1";
    }
    return "?";
}

TargetMetric parse_metric(std::string_view name) {
    for (auto m : {TargetMetric::accuracy, TargetMetric::precision, TargetMetric::recall, TargetMetric::f1}) {
        if (metric_name(m) == name) return m;
    }
    throw ConfigError("unknown target metric '" + std::string(name) + "'");
}

void TrainConfig::check() const {
    if (cemb_layers != 1 && cemb_layers != 2) throw ConfigError("cemb_layers must be 1 or 2");
    if (cemb_size <= 0 || hidden_size <= 0) throw ConfigError("layer sizes must be positive");
    if (lr_patience < 1 || early_stop_patience < 1) throw ConfigError("patience values must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(noise_probability >= 0.0 && noise_probability <= 1.0)) {
        throw ConfigError("noise_probability must lie in [0, 1]");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
}

namespace {

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    std::string text(value);
    try {
        std::size_t used = 0;
        T out{};
        if constexpr (std::is_same_v<T, double>) {
            out = std::stod(text, &used);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            out = std::stoull(text, &used);
        } else {
            out = static_cast<T>(std::stoi(text, &used));
        }
        if (used != text.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + std::string(key) + ": '" + text + "'");
    }
}

}  // namespace

std::string TrainConfig::to_text() const {
    std::ostringstream ss;
    ss << "task=" << task_name(task) << "\n"
       << "cemb_size=" << cemb_size << "\n"
       << "cemb_layers=" << cemb_layers << "\n"
       << "hidden_size=" << hidden_size << "\n"
       << "dropout=" << format_double(dropout) << "\n"
       << "learning_rate=" << format_double(learning_rate) << "\n"
       << "lr_patience=" << lr_patience << "\n"
       << "lr_decay=" << format_double(lr_decay) << "\n"
       << "early_stop_patience=" << early_stop_patience << "\n"
       << "target_metric=" << metric_name(target_metric) << "\n"
       << "max_epochs=" << max_epochs << "\n"
       << "seed=" << seed << "\n"
       << "noise_probability=" << format_double(noise_probability) << "\n"
       << "batch_size=" << batch_size << "\n"
       << "grad_clip=" << format_double(grad_clip) << "\n";
    return ss.str();
}

void TrainConfig::set(std::string_view key, std::string_view value) {
    if (key == "task") task = parse_task(value);
    else if (key == "cemb_size") cemb_size = parse_number<int>(key, value);
    else if (key == "cemb_layers") cemb_layers = parse_number<int>(key, value);
    else if (key == "hidden_size") hidden_size = parse_number<int>(key, value);
    else if (key == "dropout") dropout = parse_number<double>(key, value);
    else if (key == "learning_rate") learning_rate = parse_number<double>(key, value);
    else if (key == "lr_patience") lr_patience = parse_number<int>(key, value);
    else if (key == "lr_decay") lr_decay = parse_number<double>(key, value);
    else if (key == "early_stop_patience") early_stop_patience = parse_number<int>(key, value);
    else if (key == "target_metric") target_metric = parse_metric(value);
    else if (key == "max_epochs") max_epochs = parse_number<int>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "noise_probability") noise_probability = parse_number<double>(key, value);
    else if (key == "batch_size") batch_size = parse_number<int>(key, value);
    else if (key == "grad_clip") grad_clip = parse_number<double>(key, value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

TrainConfig TrainConfig::from_text(std::string_view text) {
    TrainConfig cfg;
    for (const auto& raw : split(text, '\n')) {
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(line) + "'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.check();
    return cfg;
}

// --- vocabularies ---------------------------------------------------------

int Vocabulary::add(const std::string& item, std::size_t count) {
    auto it = index_.find(item);
    if (it != index_.end()) {
        counts_[static_cast<std::size_t>(it->second)] += count;
        return it->second;
    }
    int id = static_cast<int>(items_.size());
    items_.push_back(item);
    counts_.push_back(count);
    index_.emplace(item, id);
    return id;
}

int Vocabulary::find(const std::string& item, int fallback) const {
    auto it = index_.find(item);
    return it == index_.end() ? fallback : it->second;
}

namespace {

void add_sentinels(Vocabulary& v) {
    v.add("<pad>", 0);
    v.add("<unk>", 0);
    v.add("<bos>", 0);
    v.add("<eos>", 0);
}

}  // namespace

Vocabularies build_vocab(const std::vector<Sentence>& train, TaskId task, bool include_uppercase) {
    if (train.empty()) throw InputError("cannot build vocabularies from an empty split");
    Vocabularies v;
    add_sentinels(v.characters);
    if (task == TaskId::LEMMA) add_sentinels(v.lemma_chars);
    for (const auto& s : train) {
        for (const auto& t : s.tokens) {
            for (const auto& ch : utf8_chars(t.form)) v.characters.add(ch);
            if (include_uppercase) {
                for (const auto& ch : utf8_chars(utf8_upper(t.form))) v.characters.add(ch, 0);
            }
            if (task == TaskId::LEMMA) {
                for (const auto& ch : utf8_chars(t.lemma)) v.lemma_chars.add(ch);
            } else {
                v.labels.add(task_label(task, t));
            }
        }
    }
    return v;
}

// --- model layout ---------------------------------------------------------

Parameter& TrainedModel::param(std::string_view name) {
    for (auto& p : params) {
        if (p.name == name) return p;
    }
    throw RuntimeFailure("model has no parameter " + std::string(name));
}

const Parameter& TrainedModel::param(std::string_view name) const {
    for (const auto& p : params) {
        if (p.name == name) return p;
    }
    throw RuntimeFailure("model has no parameter " + std::string(name));
}

std::size_t TrainedModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p.value.size());
    return n;
}

namespace {

void round_to_float(Matrix& m) { m = m.cast<float>().cast<double>(); }

std::string lstm_name(const std::string& prefix, const char* suffix) { return prefix + "_" + suffix; }

}  // namespace

TrainedModel init_model(const TrainConfig& config, Vocabularies vocab) {
    config.check();
    TrainedModel model;
    model.task = config.task;
    model.config = config;
    model.vocab = std::move(vocab);

    const int E = config.cemb_size;
    const int Hc = config.cemb_size;
    const int H = config.hidden_size;
    const int word_dim = 2 * Hc;
    const int feat_dim = 2 * H + word_dim;
    Rng rng(mix_seed(config.seed, 0x5EED));

    auto add = [&](std::string name, int rows, int cols) -> Parameter& {
        model.params.emplace_back(std::move(name), rows, cols);
        return model.params.back();
    };
    auto xavier = [&](Parameter& p) {
        double bound = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
        for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
            for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
        }
    };
    auto embedding = [&](Parameter& p) {
        for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
            for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = 0.1 * rng.normal();
        }
    };
    auto lstm = [&](const std::string& prefix, int input, int hidden) {
        xavier(add(lstm_name(prefix, "W"), 4 * hidden, input + hidden));
        Parameter& b = add(lstm_name(prefix, "b"), 4 * hidden, 1);
        b.value.middleRows(hidden, hidden).setOnes();  // forget gate
    };

    embedding(add("char_embed", E, static_cast<int>(model.vocab.characters.size())));
    for (int l = 0; l < config.cemb_layers; ++l) {
        int input = l == 0 ? E : word_dim;
        lstm("char" + std::to_string(l) + "_fwd", input, Hc);
        lstm("char" + std::to_string(l) + "_bwd", input, Hc);
    }
    lstm("ctx_fwd", word_dim, H);
    lstm("ctx_bwd", word_dim, H);

    if (config.task == TaskId::LEMMA) {
        const int D = H;
        const int V = static_cast<int>(model.vocab.lemma_chars.size());
        xavier(add("dec_init_W", D, feat_dim));
        add("dec_init_b", D, 1);
        embedding(add("dec_embed", E, V));
        lstm("dec", E, D);
        xavier(add("att_enc_W", D, word_dim));
        xavier(add("att_query_W", D, D));
        xavier(add("att_v", 1, D));
        xavier(add("comb_W", D, D + word_dim));
        add("comb_b", D, 1);
        xavier(add("gen_W", V, D));
        add("gen_b", V, 1);
    } else {
        const int K = static_cast<int>(model.vocab.labels.size());
        if (K == 0) throw InputError("no labels in the training split");
        xavier(add("out_W", K, feat_dim));
        add("out_b", K, 1);
    }
    for (auto& p : model.params) round_to_float(p.value);
    return model;
}

// --- forward computation --------------------------------------------------

namespace {

struct LstmState {
    Var h;
    Var c;
};

LstmState lstm_step(Graph& g, const Parameter& W, const Parameter& b, Var x, LstmState prev) {
    const Eigen::Index H = b.value.rows() / 4;
    Var z = g.add_bias(g.matmul(g.param(W), g.concat_rows({x, prev.h})), g.param(b));
    Var i = g.sigmoid(g.slice_rows(z, 0, H));
    Var f = g.sigmoid(g.slice_rows(z, H, H));
    Var u = g.tanh(g.slice_rows(z, 2 * H, H));
    Var o = g.sigmoid(g.slice_rows(z, 3 * H, H));
    Var c = g.add(g.mul(f, prev.c), g.mul(i, u));
    Var h = g.mul(o, g.tanh(c));
    return {h, c};
}

/// A batch of sentences flattened into word columns.
struct WordBatch {
    std::vector<std::vector<int>> chars;  // per word
    std::vector<int> sentence_len;        // per sentence
    std::size_t words() const { return chars.size(); }
};

WordBatch make_batch(const TrainedModel& model, const std::vector<std::vector<std::string>>& sentences) {
    WordBatch b;
    for (const auto& s : sentences) {
        if (s.empty()) throw InputError("cannot predict an empty sentence");
        b.sentence_len.push_back(static_cast<int>(s.size()));
        for (const auto& form : s) {
            std::vector<int> ids;
            for (const auto& ch : utf8_chars(form)) ids.push_back(model.vocab.characters.find(ch, kUnk));
            if (ids.empty()) ids.push_back(kUnk);
            b.chars.push_back(std::move(ids));
        }
    }
    return b;
}

struct Encoded {
    Var words;                  // 2Hc x W
    Var features;               // (2H + 2Hc) x W
    std::vector<Var> states;    // per character position, 2Hc x W
    Matrix mask;                // T x W, 1 where the position exists
};

struct Runner {
    const TrainedModel& m;
    Graph& g;
    bool train;
    Rng& rng;

    Var drop(Var x) { return train ? g.dropout(x, m.config.dropout, rng) : x; }

    Encoded encode(const WordBatch& batch) {
        const auto W = static_cast<Eigen::Index>(batch.words());
        std::size_t T = 0;
        for (const auto& w : batch.chars) T = std::max(T, w.size());
        const Eigen::Index Hc = m.config.cemb_size;

        Encoded enc;
        enc.mask = Matrix::Zero(static_cast<Eigen::Index>(T), W);
        std::vector<std::vector<char>> keep(T, std::vector<char>(static_cast<std::size_t>(W)));
        std::vector<Var> inputs;
        const Parameter& table = m.param("char_embed");
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<int> ids(static_cast<std::size_t>(W), kPad);
            for (std::size_t w = 0; w < batch.words(); ++w) {
                if (t < batch.chars[w].size()) {
                    ids[w] = batch.chars[w][t];
                    keep[t][w] = 1;
                    enc.mask(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(w)) = 1.0;
                }
            }
            inputs.push_back(drop(g.lookup(table, ids)));
        }

        Var final_state{};
        for (int l = 0; l < m.config.cemb_layers; ++l) {
            std::string prefix = "char" + std::to_string(l);
            const Parameter& Wf = m.param(prefix + "_fwd_W");
            const Parameter& bf = m.param(prefix + "_fwd_b");
            const Parameter& Wb = m.param(prefix + "_bwd_W");
            const Parameter& bb = m.param(prefix + "_bwd_b");
            Var zero = g.constant(Matrix::Zero(Hc, W));
            std::vector<Var> fwd(T), bwd(T);
            LstmState s{zero, zero};
            for (std::size_t t = 0; t < T; ++t) {
                LstmState n = lstm_step(g, Wf, bf, inputs[t], s);
                s = {g.select_cols(keep[t], n.h, s.h), g.select_cols(keep[t], n.c, s.c)};
                fwd[t] = s.h;
            }
            Var last_fwd = s.h;
            s = {zero, zero};
            for (std::size_t t = T; t-- > 0;) {
                LstmState n = lstm_step(g, Wb, bb, inputs[t], s);
                s = {g.select_cols(keep[t], n.h, s.h), g.select_cols(keep[t], n.c, s.c)};
                bwd[t] = s.h;
            }
            for (std::size_t t = 0; t < T; ++t) inputs[t] = g.concat_rows({fwd[t], bwd[t]});
            final_state = g.concat_rows({last_fwd, s.h});
        }
        enc.states = inputs;
        enc.words = final_state;

        // Sentence context over word vectors.
        const std::size_t S = batch.sentence_len.size();
        const int L = *std::max_element(batch.sentence_len.begin(), batch.sentence_len.end());
        const Eigen::Index H = m.config.hidden_size;
        std::vector<int> offset(S);
        for (std::size_t j = 1; j < S; ++j) offset[j] = offset[j - 1] + batch.sentence_len[j - 1];

        Var words = drop(enc.words);
        std::vector<Var> in(static_cast<std::size_t>(L));
        std::vector<std::vector<char>> present(static_cast<std::size_t>(L), std::vector<char>(S));
        for (int k = 0; k < L; ++k) {
            std::vector<int> idx(S, -1);
            for (std::size_t j = 0; j < S; ++j) {
                if (k < batch.sentence_len[j]) {
                    idx[j] = offset[j] + k;
                    present[static_cast<std::size_t>(k)][j] = 1;
                }
            }
            in[static_cast<std::size_t>(k)] = g.gather_cols(words, idx);
        }
        const Parameter& Wf = m.param("ctx_fwd_W");
        const Parameter& bf = m.param("ctx_fwd_b");
        const Parameter& Wb = m.param("ctx_bwd_W");
        const Parameter& bb = m.param("ctx_bwd_b");
        Var zero = g.constant(Matrix::Zero(H, static_cast<Eigen::Index>(S)));
        std::vector<Var> fwd(static_cast<std::size_t>(L)), bwd(static_cast<std::size_t>(L));
        LstmState s{zero, zero};
        for (int k = 0; k < L; ++k) {
            auto ku = static_cast<std::size_t>(k);
            LstmState n = lstm_step(g, Wf, bf, in[ku], s);
            s = {g.select_cols(present[ku], n.h, s.h), g.select_cols(present[ku], n.c, s.c)};
            fwd[ku] = s.h;
        }
        s = {zero, zero};
        for (int k = L; k-- > 0;) {
            auto ku = static_cast<std::size_t>(k);
            LstmState n = lstm_step(g, Wb, bb, in[ku], s);
            s = {g.select_cols(present[ku], n.h, s.h), g.select_cols(present[ku], n.c, s.c)};
            bwd[ku] = s.h;
        }
        std::vector<Var> ctx(static_cast<std::size_t>(L));
        for (std::size_t k = 0; k < ctx.size(); ++k) ctx[k] = g.concat_rows({fwd[k], bwd[k]});
        Var all = g.concat_cols(ctx);
        std::vector<int> where(batch.words());
        for (std::size_t j = 0; j < S; ++j) {
            for (int k = 0; k < batch.sentence_len[j]; ++k) {
                where[static_cast<std::size_t>(offset[j] + k)] = k * static_cast<int>(S) + static_cast<int>(j);
            }
        }
        Var context = g.gather_cols(all, where);
        enc.features = drop(g.concat_rows({context, enc.words}));
        return enc;
    }

    Var classifier_logits(const Encoded& enc) {
        return g.add_bias(g.matmul(g.param(m.param("out_W")), enc.features), g.param(m.param("out_b")));
    }

    /// Decoder state for the first character.
    LstmState decoder_start(const Encoded& enc) {
        const Parameter& Wi = m.param("dec_init_W");
        Var h = g.tanh(g.add_bias(g.matmul(g.param(Wi), enc.features), g.param(m.param("dec_init_b"))));
        Var c = g.constant(Matrix::Zero(Wi.value.rows(), g.value(enc.features).cols()));
        return {h, c};
    }

    std::vector<Var> attention_keys(const Encoded& enc) {
        std::vector<Var> keys;
        Var Wa = g.param(m.param("att_enc_W"));
        for (Var s : enc.states) keys.push_back(g.matmul(Wa, s));
        return keys;
    }

    /// One decoder step: consumes the previous characters, returns logits.
    Var decoder_step(const Encoded& enc, const std::vector<Var>& keys, const std::vector<int>& prev,
                     LstmState& state) {
        Var x = g.lookup(m.param("dec_embed"), prev);
        state = lstm_step(g, m.param("dec_W"), m.param("dec_b"), x, state);
        Var q = g.matmul(g.param(m.param("att_query_W")), state.h);
        Var v = g.param(m.param("att_v"));
        std::vector<Var> scores;
        scores.reserve(keys.size());
        for (Var k : keys) scores.push_back(g.matmul(v, g.tanh(g.add(k, q))));
        Var alpha = g.masked_softmax(g.concat_rows(scores), enc.mask);
        std::vector<Var> parts;
        parts.reserve(keys.size());
        for (std::size_t t = 0; t < enc.states.size(); ++t) {
            parts.push_back(g.scale_cols(g.slice_rows(alpha, static_cast<Eigen::Index>(t), 1), enc.states[t]));
        }
        Var context = g.sum(parts);
        Var out = g.tanh(g.add_bias(g.matmul(g.param(m.param("comb_W")), g.concat_rows({state.h, context})),
                                    g.param(m.param("comb_b"))));
        return g.add_bias(g.matmul(g.param(m.param("gen_W")), out), g.param(m.param("gen_b")));
    }
};

std::vector<std::vector<std::string>> forms_of(const std::vector<Sentence>& sentences) {
    std::vector<std::vector<std::string>> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(s.forms());
    return out;
}

std::vector<int> lemma_ids(const TrainedModel& m, const std::string& lemma) {
    std::vector<int> ids;
    for (const auto& ch : utf8_chars(lemma)) ids.push_back(m.vocab.lemma_chars.find(ch, kUnk));
    ids.push_back(kEos);
    return ids;
}

int argmax_col(const Matrix& m, Eigen::Index col) {
    Eigen::Index best = 0;
    m.col(col).maxCoeff(&best);
    return static_cast<int>(best);
}

}  // namespace

double batch_loss(const TrainedModel& model, const std::vector<Sentence>& batch, bool train, Rng& rng,
                  std::vector<Matrix>* grads) {
    Graph g(grads != nullptr);
    Runner run{model, g, train, rng};
    WordBatch words = make_batch(model, forms_of(batch));
    Encoded enc = run.encode(words);

    Var loss;
    if (model.task == TaskId::LEMMA) {
        std::vector<std::vector<int>> targets;
        std::size_t longest = 0, units = 0;
        for (const auto& s : batch) {
            for (const auto& t : s.tokens) {
                targets.push_back(lemma_ids(model, t.lemma));
                longest = std::max(longest, targets.back().size());
                units += targets.back().size();
            }
        }
        const double unit_weight = 1.0 / static_cast<double>(units);
        std::vector<Var> keys = run.attention_keys(enc);
        LstmState state = run.decoder_start(enc);
        std::vector<Var> losses;
        std::vector<int> prev(targets.size(), kBos);
        for (std::size_t step = 0; step < longest; ++step) {
            Var logits = run.decoder_step(enc, keys, prev, state);
            std::vector<int> gold(targets.size(), kPad);
            std::vector<double> weight(targets.size(), 0.0);
            for (std::size_t w = 0; w < targets.size(); ++w) {
                if (step < targets[w].size()) {
                    gold[w] = targets[w][step];
                    weight[w] = unit_weight;
                }
            }
            losses.push_back(g.cross_entropy(logits, gold, weight));
            prev = gold;
        }
        loss = g.sum(losses);
    } else {
        std::vector<int> gold;
        for (const auto& s : batch) {
            for (const auto& t : s.tokens) {
                gold.push_back(model.vocab.labels.find(task_label(model.task, t), 0));
            }
        }
        std::vector<double> weight(gold.size(), 1.0 / static_cast<double>(gold.size()));
        loss = g.cross_entropy(run.classifier_logits(enc), gold, weight);
    }

    double value = g.scalar(loss);
    if (grads) {
        g.backward(loss);
        grads->clear();
        grads->reserve(model.params.size());
        for (const auto& p : model.params) {
            const Matrix* gp = g.gradient_of(p);
            grads->push_back(gp ? *gp : Matrix::Zero(p.value.rows(), p.value.cols()));
        }
    }
    return value;
}

// --- prediction -----------------------------------------------------------

namespace {

constexpr std::size_t kPredictChunk = 64;

std::vector<std::string> predict_chunk(const TrainedModel& model,
                                       const std::vector<std::vector<std::string>>& sentences) {
    Graph g(false);
    Rng unused(0);
    Runner run{model, g, false, unused};
    WordBatch words = make_batch(model, sentences);
    Encoded enc = run.encode(words);
    std::vector<std::string> out(words.words());

    if (model.task != TaskId::LEMMA) {
        const Matrix& logits = g.value(run.classifier_logits(enc));
        for (std::size_t w = 0; w < out.size(); ++w) {
            out[w] = model.vocab.labels.item(argmax_col(logits, static_cast<Eigen::Index>(w)));
        }
        return out;
    }

    std::vector<Var> keys = run.attention_keys(enc);
    LstmState state = run.decoder_start(enc);
    std::vector<int> prev(out.size(), kBos);
    std::vector<char> done(out.size(), 0);
    std::vector<std::size_t> cap(out.size());
    std::size_t longest = 0;
    for (std::size_t w = 0; w < out.size(); ++w) {
        cap[w] = 2 * words.chars[w].size() + 5;
        longest = std::max(longest, cap[w]);
    }
    std::vector<std::size_t> emitted(out.size(), 0);
    for (std::size_t step = 0; step < longest; ++step) {
        const Matrix& logits = g.value(run.decoder_step(enc, keys, prev, state));
        bool all_done = true;
        for (std::size_t w = 0; w < out.size(); ++w) {
            if (done[w]) continue;
            int next = argmax_col(logits, static_cast<Eigen::Index>(w));
            prev[w] = next;
            if (next == kEos) {
                done[w] = 1;
                continue;
            }
            if (next > kEos || next == kUnk) out[w] += model.vocab.lemma_chars.item(next);
            if (++emitted[w] >= cap[w]) {
                done[w] = 1;
                continue;
            }
            all_done = false;
        }
        if (all_done) break;
    }
    return out;
}

}  // namespace

std::vector<std::vector<std::string>> predict_labels(const TrainedModel& model,
                                                     const std::vector<std::vector<std::string>>& sentences) {
    std::vector<std::vector<std::string>> out;
    out.reserve(sentences.size());
    for (std::size_t start = 0; start < sentences.size(); start += kPredictChunk) {
        std::size_t end = std::min(sentences.size(), start + kPredictChunk);
        std::vector<std::vector<std::string>> chunk(sentences.begin() + static_cast<std::ptrdiff_t>(start),
                                                    sentences.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::string> flat = predict_chunk(model, chunk);
        std::size_t k = 0;
        for (const auto& s : chunk) {
            out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(k),
                             flat.begin() + static_cast<std::ptrdiff_t>(k + s.size()));
            k += s.size();
        }
    }
    return out;
}

std::vector<std::string> decode_lemmas(const TrainedModel& model, const std::vector<std::string>& forms) {
    if (model.task != TaskId::LEMMA) {
        throw RuntimeFailure("lemma decoding requires a LEMMA model, got " + std::string(task_name(model.task)));
    }
    return predict_labels(model, {forms}).front();
}

std::vector<std::string> classify(const TrainedModel& model, const std::vector<std::string>& forms) {
    if (model.task == TaskId::LEMMA) throw RuntimeFailure("classification requires a non-LEMMA model");
    return predict_labels(model, {forms}).front();
}

PredictedAnnotations predict_sentence(const TrainedModel& model, const std::vector<std::string>& forms) {
    if (forms.empty()) throw InputError("cannot predict an empty sentence");
    auto labels = predict_labels(model, {forms}).front();
    PredictedAnnotations out(forms.size());
    for (std::size_t i = 0; i < forms.size(); ++i) {
        switch (model.task) {
            case TaskId::LEMMA: out[i].lemma = labels[i]; break;
            case TaskId::POS: out[i].pos = labels[i]; break;
            default: out[i].morph.at(task_name(model.task)) = labels[i]; break;
        }
    }
    return out;
}

// --- training -------------------------------------------------------------

PlateauTracker::Action PlateauTracker::observe(int epoch, double metric) {
    if (metric > best_) {
        best_ = metric;
        best_epoch_ = epoch;
        since_best_ = 0;
        since_decay_ = 0;
        return Action::improved;
    }
    ++since_best_;
    ++since_decay_;
    if (since_best_ >= stop_patience_) return Action::stop;
    if (since_decay_ >= lr_patience_) {
        since_decay_ = 0;
        return Action::decay_lr;
    }
    return Action::none;
}

namespace {

double pick_metric(const eval::MetricRow& row, TargetMetric metric) {
    switch (metric) {
        case TargetMetric::accuracy: return row.accuracy;
        case TargetMetric::precision: return row.precision;
        case TargetMetric::recall: return row.recall;
        case TargetMetric::f1: return row.f1;
    }
    return row.accuracy;
}

struct Adam {
    std::vector<Matrix> m, v;
    long step = 0;

    explicit Adam(const std::vector<Parameter>& params) {
        for (const auto& p : params) {
            m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
            v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        }
    }

    void update(std::vector<Parameter>& params, std::vector<Matrix>& grads, double lr, double clip) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double norm2 = 0.0;
        for (const auto& gr : grads) norm2 += gr.squaredNorm();
        double norm = std::sqrt(norm2);
        double scale = norm > clip ? clip / norm : 1.0;
        ++step;
        double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix gr = grads[i] * scale;
            m[i] = b1 * m[i] + (1.0 - b1) * gr;
            v[i] = b2 * v[i] + (1.0 - b2) * gr.cwiseProduct(gr);
            params[i].value.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
            round_to_float(params[i].value);
        }
    }
};

}  // namespace

TrainedModel train(const TrainConfig& config, const SplitSet& splits, const EpochCallback& on_epoch) {
    config.check();
    if (splits.train.empty()) throw InputError("training split is empty");
    if (splits.dev.empty()) throw InputError("dev split is empty");

    TrainedModel model = init_model(config, build_vocab(splits.train, config.task, config.noise_probability > 0.0));
    Adam adam(model.params);
    Rng rng(mix_seed(config.seed, 0x7A11));
    PlateauTracker tracker(config.lr_patience, config.early_stop_patience);
    double lr = config.learning_rate;
    std::vector<Matrix> best = [&] {
        std::vector<Matrix> v;
        for (const auto& p : model.params) v.push_back(p.value);
        return v;
    }();

    const auto dev_forms = forms_of(splits.dev);
    const auto dev_gold = task_column(splits.dev, config.task);

    std::vector<std::size_t> order(splits.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return splits.train[a].tokens.size() < splits.train[b].tokens.size();
    });
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    std::vector<Matrix> grads;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
        }
        rng.shuffle(batches);

        double total_loss = 0.0;
        for (const auto& idx : batches) {
            std::vector<Sentence> batch;
            batch.reserve(idx.size());
            for (auto i : idx) batch.push_back(apply_capitalization_noise(splits.train[i], config.noise_probability, rng));
            double loss = batch_loss(model, batch, true, rng, &grads);
            if (!std::isfinite(loss)) {
                throw RuntimeFailure("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            }
            total_loss += loss;
            adam.update(model.params, grads, lr, config.grad_clip);
        }

        auto predicted = predict_labels(model, dev_forms);
        std::vector<std::string> flat;
        for (auto& s : predicted) {
            for (auto& l : s) flat.push_back(std::move(l));
        }
        double metric = pick_metric(eval::score_subset(dev_gold, flat), config.target_metric);
        EpochRecord rec{epoch, total_loss / static_cast<double>(batches.size()), metric, lr};
        model.log.push_back(rec);
        if (on_epoch) on_epoch(rec);

        auto action = tracker.observe(epoch, metric);
        if (action == PlateauTracker::Action::improved) {
            for (std::size_t i = 0; i < best.size(); ++i) best[i] = model.params[i].value;
        } else if (action == PlateauTracker::Action::stop) {
            break;
        } else if (action == PlateauTracker::Action::decay_lr) {
            lr *= config.lr_decay;
        }
    }
    for (std::size_t i = 0; i < best.size(); ++i) model.params[i].value = best[i];
    model.best_epoch = tracker.best_epoch();
    return model;
}

// --- serialization --------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'T', 'A', 'G', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f32(float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    void f64(double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        u64(bits);
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw InputError("model file is truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    double f64() {
        std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == in_.size(); }

private:
    std::string_view in_;
    std::size_t pos_ = 0;
};

void write_vocab(Writer& w, const Vocabulary& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        w.str(v.item(static_cast<int>(i)));
        w.u64(v.count(static_cast<int>(i)));
    }
}

Vocabulary read_vocab(Reader& r) {
    Vocabulary v;
    std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string item = r.str();
        std::uint64_t count = r.u64();
        if (v.contains(item)) throw InputError("model file has a duplicate vocabulary entry");
        v.add(item, count);
    }
    return v;
}

}  // namespace

std::string serialize_model(const TrainedModel& model) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.task));
    w.str(model.config.to_text());
    write_vocab(w, model.vocab.characters);
    write_vocab(w, model.vocab.labels);
    write_vocab(w, model.vocab.lemma_chars);
    w.u32(static_cast<std::uint32_t>(model.best_epoch));
    w.u32(static_cast<std::uint32_t>(model.log.size()));
    for (const auto& rec : model.log) {
        w.u32(static_cast<std::uint32_t>(rec.epoch));
        w.f64(rec.train_loss);
        w.f64(rec.dev_metric);
        w.f64(rec.learning_rate);
    }
    w.u32(static_cast<std::uint32_t>(model.params.size()));
    for (const auto& p : model.params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rows()));
        w.u32(static_cast<std::uint32_t>(p.value.cols()));
        for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
            for (Eigen::Index i = 0; i < p.value.rows(); ++i) w.f32(static_cast<float>(p.value(i, j)));
        }
    }
    return w.take();
}

void save_model(const TrainedModel& model, const std::string& path) { write_file(path, serialize_model(model)); }

TrainedModel deserialize_model(std::string_view bytes, std::optional<TaskId> expected) {
    Reader r(bytes);
    if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
        throw InputError("not a model file (bad magic)");
    }
    std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw InputError("model format version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kFormatVersion) + ")");
    }
    std::uint32_t task_raw = r.u32();
    if (task_raw >= kAllTasks.size()) throw InputError("model file has an invalid task id");
    auto task = static_cast<TaskId>(task_raw);
    if (expected && *expected != task) {
        throw InputError("model is a " + std::string(task_name(task)) + " model, expected " +
                         std::string(task_name(*expected)));
    }
    TrainConfig config;
    try {
        config = TrainConfig::from_text(r.str());
    } catch (const ConfigError& e) {
        throw InputError(std::string("model file has a corrupt config: ") + e.what());
    }
    if (config.task != task) throw InputError("model file task and config disagree");

    Vocabularies vocab;
    vocab.characters = read_vocab(r);
    vocab.labels = read_vocab(r);
    vocab.lemma_chars = read_vocab(r);
    int best_epoch = static_cast<int>(r.u32());
    std::vector<EpochRecord> log(r.u32());
    for (auto& rec : log) {
        rec.epoch = static_cast<int>(r.u32());
        rec.train_loss = r.f64();
        rec.dev_metric = r.f64();
        rec.learning_rate = r.f64();
    }

    TrainedModel model = init_model(config, std::move(vocab));
    model.best_epoch = best_epoch;
    model.log = std::move(log);
    std::uint32_t count = r.u32();
    if (count != model.params.size()) throw InputError("model file has the wrong number of parameter arrays");
    for (auto& p : model.params) {
        std::string name = r.str();
        std::uint32_t rows = r.u32();
        std::uint32_t cols = r.u32();
        if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
            throw InputError("model file parameter " + name + " does not match the architecture");
        }
        for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
            for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = static_cast<double>(r.f32());
        }
    }
    if (!r.at_end()) throw InputError("model file has trailing bytes");
    return model;
}

TrainedModel load_model(const std::string& path, std::optional<TaskId> expected) {
    return deserialize_model(read_file(path), expected);
}

// --- model sets -----------------------------------------------------------

void ModelSet::add(TrainedModel model) {
    TaskId t = model.task;
    models_.insert_or_assign(t, std::move(model));
}

const TrainedModel& ModelSet::get(TaskId task) const {
    auto it = models_.find(task);
    if (it == models_.end()) throw RuntimeFailure("no model for task " + std::string(task_name(task)));
    return it->second;
}

std::vector<TaskId> ModelSet::tasks() const {
    std::vector<TaskId> out;
    for (const auto& [t, m] : models_) out.push_back(t);
    return out;
}

ModelSet ModelSet::load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    ModelSet set;
    for (TaskId t : kAllTasks) {
        std::string name(task_name(t));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        fs::path p = fs::path(dir) / (name + ".model");
        if (fs::exists(p)) set.add(load_model(p.string(), t));
    }
    return set;
}

std::vector<Sentence> ModelSet::annotate(const std::vector<std::vector<std::string>>& sentences) const {
    std::vector<std::vector<std::string>> normalized = sentences;
    for (auto& s : normalized) {
        if (s.empty()) throw InputError("cannot annotate an empty sentence");
        for (auto& f : s) f = normalize_roman(f);
    }
    std::vector<Sentence> out(sentences.size());
    std::vector<std::vector<MorphVector>> morph(sentences.size());
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        morph[s].resize(sentences[s].size());
        for (const auto& f : sentences[s]) out[s].tokens.push_back(AnnotatedToken{f, "_", "_", "_"});
    }
    bool any_morph = false;
    for (const auto& [task, model] : models_) {
        auto labels = predict_labels(model, normalized);
        for (std::size_t s = 0; s < labels.size(); ++s) {
            for (std::size_t i = 0; i < labels[s].size(); ++i) {
                auto& tok = out[s].tokens[i];
                if (task == TaskId::LEMMA) {
                    tok.lemma = labels[s][i].empty() ? "_" : labels[s][i];
                } else if (task == TaskId::POS) {
                    tok.pos = labels[s][i];
                } else {
                    morph[s][i].at(task_name(task)) = labels[s][i];
                    any_morph = true;
                }
            }
        }
    }
    if (any_morph) {
        for (std::size_t s = 0; s < out.size(); ++s) {
            for (std::size_t i = 0; i < out[s].tokens.size(); ++i) out[s].tokens[i].morph = join_morph(morph[s][i]);
        }
    }
    return out;
}

}  // namespace histag
