#include <doctest.h>

#include <cctype>
#include <filesystem>

#include "histag/tagger.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"

using namespace histag;

namespace {

TrainConfig small_config(TaskId task) {
    TrainConfig c;
    c.task = task;
    c.cemb_size = 8;
    c.cemb_layers = 1;
    c.hidden_size = 8;
    c.dropout = 0.0;
    c.noise_probability = 0.0;
    c.learning_rate = 0.01;
    c.batch_size = 8;
    c.seed = 3;
    return c;
}

std::vector<Sentence> corpus(std::size_t n, std::uint64_t seed, std::size_t stems = 12) {
    Rng rng(seed);
    auto s = testing::make_stems(stems, rng);
    return testing::synthetic_sentences(n, s, rng);
}

std::vector<std::vector<std::string>> forms_of(const std::vector<Sentence>& sentences) {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : sentences) out.push_back(s.forms());
    return out;
}

}  // namespace

TEST_CASE("config text round trip and validation") {
    TrainConfig c = small_config(TaskId::LEMMA);
    c.learning_rate = 0.0049;
    c.target_metric = TargetMetric::precision;
    CHECK(TrainConfig::from_text(c.to_text()) == c);
    CHECK(TrainConfig::from_text("") == TrainConfig{});
    CHECK(TrainConfig::from_text("# comment\nhidden_size = 64\n").hidden_size == 64);
    CHECK_THROWS_AS(TrainConfig::from_text("bogus=1\n"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_text("hidden_size=abc\n"), ConfigError);
    TrainConfig bad;
    bad.cemb_layers = 3;
    CHECK_THROWS_AS(bad.check(), ConfigError);
    bad = TrainConfig{};
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.check(), ConfigError);
    CHECK(parse_metric("f1") == TargetMetric::f1);
    CHECK_THROWS_AS(parse_metric("auc"), ConfigError);
}

TEST_CASE("vocabularies come from train only") {
    auto train = corpus(10, 1);
    auto v = build_vocab(train, TaskId::POS);
    CHECK(v.characters.item(kPad) != v.characters.item(kUnk));
    CHECK(v.characters.size() > 4);
    CHECK(v.labels.contains("NOMcom"));
    CHECK(v.labels.contains("PONfrt"));
    CHECK(v.lemma_chars.size() == 0);
    CHECK(v.characters.find("Q", -7) == -7);
    auto lv = build_vocab(train, TaskId::LEMMA);
    CHECK(lv.labels.size() == 0);
    CHECK(lv.lemma_chars.contains("r"));
    auto upper = build_vocab(train, TaskId::POS, true);
    CHECK(upper.characters.size() > v.characters.size());
}

TEST_CASE("plateau tracker") {
    PlateauTracker t(2, 4);
    using A = PlateauTracker::Action;
    CHECK(t.observe(1, 0.5) == A::improved);
    CHECK(t.observe(2, 0.5) == A::none);
    CHECK(t.observe(3, 0.4) == A::decay_lr);
    CHECK(t.observe(4, 0.6) == A::improved);
    CHECK(t.observe(5, 0.6) == A::none);
    CHECK(t.observe(6, 0.6) == A::decay_lr);
    CHECK(t.observe(7, 0.6) == A::none);
    CHECK(t.observe(8, 0.6) == A::stop);
    CHECK(t.best_epoch() == 4);
    CHECK(t.best() == 0.6);
    PlateauTracker both(1, 1);
    both.observe(1, 1.0);
    CHECK(both.observe(2, 0.0) == A::stop);
}

TEST_CASE("model gradients match finite differences") {
    auto batch = corpus(3, 4, 5);
    for (TaskId task : {TaskId::POS, TaskId::LEMMA, TaskId::GENRE}) {
        CAPTURE(task_name(task));
        auto config = small_config(task);
        config.cemb_size = 4;
        config.hidden_size = 4;
        auto model = init_model(config, build_vocab(batch, task));
        CHECK(oracle::model_gradcheck(model, batch, 60, 17) <= 1e-4);
    }
    auto config = small_config(TaskId::POS);
    config.cemb_layers = 2;
    config.cemb_size = 4;
    config.hidden_size = 4;
    auto model = init_model(config, build_vocab(batch, TaskId::POS));
    CHECK(oracle::model_gradcheck(model, batch, 60, 18) <= 1e-4);
}

TEST_CASE("serialization round trip and corruption") {
    auto train = corpus(6, 5);
    auto model = init_model(small_config(TaskId::LEMMA), build_vocab(train, TaskId::LEMMA));
    model.log.push_back({1, 2.5, 0.25, 0.01});
    model.best_epoch = 1;
    auto bytes = serialize_model(model);
    auto back = deserialize_model(bytes, TaskId::LEMMA);
    CHECK(back.config == model.config);
    CHECK(back.vocab == model.vocab);
    CHECK(back.log == model.log);
    CHECK(back.best_epoch == 1);
    REQUIRE(back.params.size() == model.params.size());
    for (std::size_t i = 0; i < back.params.size(); ++i) {
        CHECK(back.params[i].name == model.params[i].name);
        CHECK(back.params[i].value.cast<float>().cast<double>() == back.params[i].value);
    }
    CHECK(serialize_model(back) == bytes);
    CHECK(decode_lemmas(back, {"chaton"}) == decode_lemmas(model, {"chaton"}));

    CHECK_THROWS_AS(deserialize_model(bytes, TaskId::POS), InputError);
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK_THROWS_AS(deserialize_model(std::string_view(bytes).substr(0, cut)), InputError);
    }
    CHECK_THROWS_AS(deserialize_model(bytes + "x"), InputError);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_model(bad_magic), InputError);
}

TEST_CASE("classifier learns the suffix mapping") {
    auto data = corpus(40, 6);
    auto config = small_config(TaskId::POS);
    config.cemb_size = 16;
    config.hidden_size = 24;
    config.max_epochs = 40;
    config.early_stop_patience = 40;
    config.lr_patience = 40;
    SplitSet splits{data, data, {}};
    std::vector<EpochRecord> epochs;
    auto model = train(config, splits, [&](const EpochRecord& r) { epochs.push_back(r); });
    CHECK(!epochs.empty());
    CHECK(model.best_epoch >= 1);
    auto pred = predict_labels(model, forms_of(data));
    std::size_t ok = 0, total = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        for (std::size_t i = 0; i < data[s].tokens.size(); ++i) {
            ok += pred[s][i] == data[s].tokens[i].pos;
            ++total;
        }
    }
    CHECK(double(ok) / double(total) >= 0.95);
    CHECK(epochs.back().train_loss < epochs.front().train_loss);
}

TEST_CASE("training is deterministic for a seed") {
    auto data = corpus(20, 7);
    auto config = small_config(TaskId::LEMMA);
    config.max_epochs = 2;
    config.noise_probability = 0.2;
    config.dropout = 0.2;
    SplitSet splits{data, data, {}};
    auto a = train(config, splits);
    auto b = train(config, splits);
    CHECK(serialize_model(a) == serialize_model(b));
    config.seed = 4;
    auto c = train(config, splits);
    CHECK(serialize_model(a) != serialize_model(c));
    CHECK_THROWS_AS(train(config, SplitSet{data, {}, {}}), InputError);
}

TEST_CASE("model set annotates with every available task") {
    auto data = corpus(10, 8);
    auto dir = std::filesystem::temp_directory_path() / "histag_modelset_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    for (TaskId task : {TaskId::LEMMA, TaskId::POS, TaskId::NOMB}) {
        auto model = init_model(small_config(task), build_vocab(data, task));
        std::string name(task_name(task));
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        save_model(model, (dir / (name + ".model")).string());
    }
    auto set = ModelSet::load_dir(dir.string());
    CHECK(set.tasks().size() == 3);
    CHECK(set.has(TaskId::LEMMA));
    CHECK(set.has(TaskId::NOMB));
    auto out = set.annotate({{"chevaliers", ".xx."}, {"a"}});
    REQUIRE(out.size() == 2);
    REQUIRE(out[0].tokens.size() == 2);
    // predictions see "20"; the output echoes the input form
    CHECK(out[0].tokens[1].form == ".xx.");
    CHECK(out[0].tokens[0].form == "chevaliers");
    CHECK(out[0].tokens[0].pos != "_");
    // the synthetic corpus has no morphology, so NOMB only knows "_"
    CHECK(out[0].tokens[0].morph == "MORPH=empty");
    CHECK_THROWS_AS(set.get(TaskId::CAS), RuntimeFailure);

    auto pos_only = ModelSet{};
    pos_only.add(init_model(small_config(TaskId::POS), build_vocab(data, TaskId::POS)));
    auto pos_out = pos_only.annotate({{"x"}});
    CHECK(pos_out[0].tokens[0].lemma == "_");
    CHECK(pos_out[0].tokens[0].morph == "_");
    CHECK(ModelSet::load_dir((dir / "missing").string()).empty());
    std::filesystem::remove_all(dir);
}
