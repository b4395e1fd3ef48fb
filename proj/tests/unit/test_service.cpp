#include <doctest.h>

#include <filesystem>
#include <thread>

#include "histag/service.hpp"
#include "support/synthetic.hpp"

// after Eigen: <resolv.h>, pulled in by httplib, defines a _res macro
#include <httplib.h>

using namespace histag;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

const char* kCorpus =
    "form\tlemma\tpos\tmorph\n"
    "li\tle\tDETdef\tNOMB.=s|GENRE=m|CAS=n\n"
    "rois\troi\tNOMcom\tNOMB.=s|GENRE=m|CAS=n\n"
    "dist\tdire\tVERcjg\tMODE=ind|TEMPS=pst|PERS=3|NOMB.=s\n"
    "que\tque4\tCONsub\tMORPH=empty\n"
    "mes\tmes1\tDETpos\tNOMB.=p|GENRE=m|CAS=r\n"
    "sires\tsire\tNOMcom\tNOMB.=p|GENRE=m|CAS=r\n"
    ".\t.\tPONfrt\t_\n"
    "\n"
    "mes\tmes1\tCONcoo\t_\n"
    "li\tle\tDETdef\tNOMB.=s|GENRE=m|CAS=n\n"
    "cuens\tconte\tNOMcom\tNOMB.=s|GENRE=m|CAS=n\n"
    "vint\tvenir\tVERcjg\tMODE=ind|TEMPS=pst|PERS=3|NOMB.=s\n"
    ".\t.\tPONfrt\t_\n";

fs::path fresh_dir(const char* name) {
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ReferenceSet refs() {
    return parse_reference_lists("le\nroi\ndire\nque4\nmes1\nmais1\nsire\ncomte\nvenir\n.\n",
                                 "DETdef\nNOMcom\nVERcjg\nCONsub\nDETpos\nCONcoo\nPONfrt\n",
                                 "NOMB\ts\nNOMB\tp\nGENRE\tm\nCAS\tn\nCAS\tr\nMODE\tind\nTEMPS\tpst\nPERS\t3\n");
}

HttpResponse post(Service& s, const std::string& path, const json& body, QueryParams params = {}) {
    return s.handle("POST", path, params, body.dump());
}

HttpResponse get(Service& s, const std::string& path, QueryParams params = {}) { return s.handle("GET", path, params, ""); }

ModelSet tiny_models() {
    Rng rng(2);
    auto stems = testing::make_stems(6, rng);
    auto data = testing::synthetic_sentences(6, stems, rng);
    ModelSet set;
    for (TaskId task : {TaskId::LEMMA, TaskId::POS}) {
        TrainConfig c;
        c.task = task;
        c.cemb_size = 4;
        c.cemb_layers = 1;
        c.hidden_size = 4;
        set.add(init_model(c, build_vocab(data, task)));
    }
    return set;
}

}  // namespace

TEST_CASE("corpora are loaded from the corpus directory") {
    auto dir = fresh_dir("histag_service_load");
    write_file((dir / "chron.tsv").string(), kCorpus);
    write_file((dir / "notes.txt").string(), "ignored");
    Service svc(ServiceConfig{dir.string(), "", refs()});
    CHECK(svc.corpus_ids() == std::vector<std::string>{"chron"});
    auto r = get(svc, "/corpora");
    REQUIRE(r.status == 200);
    auto j = r.json();
    REQUIRE(j.size() == 1);
    CHECK(j[0]["id"] == "chron");
    CHECK(j[0]["tokens"] == 12);
    CHECK(j[0]["sentences"] == 2);
    CHECK(j[0]["version"] == 0);
    CHECK(get(svc, "/health").json()["status"] == "ok");
    CHECK(get(svc, "/nowhere").status == 404);
    CHECK(get(svc, "/corpus/missing/tokens").status == 404);
    CHECK_THROWS_AS(Service(ServiceConfig{(dir / "absent").string(), "", {}}), ConfigError);
}

TEST_CASE("token pages") {
    Service svc(ServiceConfig{});
    svc.add_corpus(parse_tsv(kCorpus, "c"));
    auto page = get(svc, "/corpus/c/tokens", {{"offset", "10"}, {"limit", "5"}}).json();
    CHECK(page["total"] == 12);
    REQUIRE(page["tokens"].size() == 2);
    CHECK(page["tokens"][0]["form"] == "vint");
    CHECK(page["tokens"][0]["sentence"] == 1);
    CHECK(page["tokens"][0]["token"] == 3);
    CHECK(get(svc, "/corpus/c/tokens").json()["limit"] == 50);
    CHECK(get(svc, "/corpus/c/tokens", {{"limit", "1001"}}).status == 400);
    CHECK(get(svc, "/corpus/c/tokens", {{"limit", "0"}}).status == 400);
    CHECK(get(svc, "/corpus/c/tokens", {{"offset", "-1"}}).status == 400);
}

TEST_CASE("concordance search") {
    Service svc(ServiceConfig{});
    svc.add_corpus(parse_tsv(kCorpus, "c"));
    auto r = post(svc, "/corpus/c/search", {{"filters", {{"form", "mes"}}}, {"context", 2}}).json();
    CHECK(r["total"] == 2);
    REQUIRE(r["matches"].size() == 2);
    CHECK(r["matches"][0]["index"] == 4);
    CHECK(r["matches"][0]["left"] == json::array({"dist", "que"}));
    CHECK(r["matches"][0]["right"] == json::array({"sires", "."}));
    CHECK(r["matches"][1]["left"] == json::array());

    auto both = post(svc, "/corpus/c/search", {{"filters", {{"form", "mes"}, {"pos", "CON*"}}}}).json();
    CHECK(both["total"] == 1);
    auto prefix = post(svc, "/corpus/c/search", {{"filters", {{"pos", "NOM*"}}}, {"limit", 1}, {"offset", 1}}).json();
    CHECK(prefix["total"] == 3);
    REQUIRE(prefix["matches"].size() == 1);
    CHECK(prefix["matches"][0]["form"] == "sires");

    CHECK(post(svc, "/corpus/c/search", {{"filters", json::object()}}).status == 400);
    CHECK(post(svc, "/corpus/c/search", {{"filters", {{"colour", "x"}}}}).status == 400);
    CHECK(post(svc, "/corpus/c/search", {{"filters", {{"form", "*es"}}}}).status == 400);
    CHECK(svc.handle("POST", "/corpus/c/search", {}, "{not json").status == 400);
}

TEST_CASE("batch edit, version check, export and journal replay") {
    auto dir = fresh_dir("histag_service_edit");
    write_file((dir / "chron.tsv").string(), kCorpus);
    {
        Service svc(ServiceConfig{dir.string(), "", refs()});
        auto preview = post(svc, "/corpus/chron/search", {{"filters", {{"form", "mes"}, {"pos", "CONcoo"}}}}).json();
        auto r = post(svc, "/corpus/chron/batch-edit",
                      {{"filters", {{"form", "mes"}, {"pos", "CONcoo"}}}, {"column", "lemma"}, {"value", "mais1"},
                       {"version", 0}});
        REQUIRE(r.status == 200);
        CHECK(r.json()["edited"] == preview["total"]);
        CHECK(r.json()["version"] == 1);

        auto stale = post(svc, "/corpus/chron/batch-edit",
                          {{"filters", {{"form", "li"}}}, {"column", "pos"}, {"value", "PROper"}, {"version", 0}});
        CHECK(stale.status == 409);

        auto none = post(svc, "/corpus/chron/batch-edit",
                         {{"filters", {{"form", "xyz"}}}, {"column", "lemma"}, {"value", "x"}});
        CHECK(none.json()["edited"] == 0);
        CHECK(none.json()["version"] == 1);

        CHECK(post(svc, "/corpus/chron/batch-edit", {{"filters", {{"form", "li"}}}, {"column", "form"}, {"value", "x"}})
                  .status == 400);
        CHECK(post(svc, "/corpus/chron/batch-edit", {{"filters", {{"form", "li"}}}, {"column", "lemma"}, {"value", ""}})
                  .status == 400);

        auto single = post(svc, "/corpus/chron/edit", {{"index", 9}, {"column", "lemma"}, {"value", "comte"}, {"version", 1}});
        REQUIRE(single.status == 200);
        CHECK(single.json()["version"] == 2);
        CHECK(post(svc, "/corpus/chron/edit", {{"index", 99}, {"column", "lemma"}, {"value", "x"}}).status == 400);

        auto exported = get(svc, "/corpus/chron/export");
        CHECK(exported.content_type.rfind("text/tab-separated-values", 0) == 0);
        CHECK(exported.body.find("mes\tmais1\tCONcoo\t_\n") != std::string::npos);
        CHECK(exported.body.find("cuens\tcomte\tNOMcom") != std::string::npos);
        CHECK(exported.body.find("mes\tmes1\tDETpos") != std::string::npos);

        auto journal = get(svc, "/corpus/chron/journal").json();
        REQUIRE(journal.size() == 2);
        CHECK(journal[0]["kind"] == "batch");
        CHECK(journal[0]["edits"][0]["old"] == "mes1");
        CHECK(journal[1]["kind"] == "token");
    }
    // a new service replays the journal from disk
    Service again(ServiceConfig{dir.string(), "", refs()});
    CHECK(get(again, "/corpora").json()[0]["version"] == 2);
    CHECK(get(again, "/corpus/chron/export").body.find("cuens\tcomte\t") != std::string::npos);

    // a journal that does not fit the corpus is refused
    write_file((dir / "chron.tsv").string(), std::string(kCorpus).replace(std::string(kCorpus).find("cuens\tconte"), 11, "cuens\tcuens"));
    CHECK_THROWS_AS(Service(ServiceConfig{dir.string(), "", refs()}), InputError);
}

TEST_CASE("unallowed values clear after correction") {
    Service svc(ServiceConfig{"", "", refs()});
    svc.add_corpus(parse_tsv(kCorpus, "c"));
    auto before = get(svc, "/corpus/c/unallowed").json();
    REQUIRE(before["lemmas"].size() == 1);
    CHECK(before["lemmas"][0]["value"] == "conte");
    post(svc, "/corpus/c/batch-edit", {{"filters", {{"lemma", "conte"}}}, {"column", "lemma"}, {"value", "comte"}});
    CHECK(get(svc, "/corpus/c/unallowed").json()["total"] == 0);

    Service bare(ServiceConfig{});
    bare.add_corpus(parse_tsv(kCorpus, "c"));
    CHECK(get(bare, "/corpus/c/unallowed").status == 503);
}

TEST_CASE("session replay is independent of the service") {
    Document doc = parse_tsv(kCorpus, "c");
    CorrectionSession s(doc, "");
    ConcordanceQuery q;
    q.filters["pos"] = "NOMcom";
    CHECK(s.batch_edit(q, "morph", "NOMB.=s") == 3);
    s.edit_token(0, "pos", "PROper");
    CHECK(CorrectionSession::replay(doc, s.journal()) == s.working());
    CHECK_THROWS_AS(s.batch_edit(q, "lemma", "x", 0), ConflictError);
}

TEST_CASE("tag endpoint") {
    Service empty(ServiceConfig{});
    CHECK(empty.handle("POST", "/tag", {}, "li\nrois\n").status == 503);

    Service svc(ServiceConfig{});
    svc.add_model_set("default", tiny_models());
    auto tsv = svc.handle("POST", "/tag", {}, "form\tlemma\n# comment\nli\trest\nrois\n\ndist\n");
    REQUIRE(tsv.status == 200);
    Document doc = parse_tsv(tsv.body, "out");
    REQUIRE(doc.sentences.size() == 2);
    CHECK(doc.sentences[0].forms() == std::vector<std::string>{"li", "rois"});
    CHECK(doc.at(0, 0).pos != "_");
    CHECK(doc.at(0, 0).morph == "_");

    auto j = svc.handle("POST", "/tag", {{"format", "json"}}, "li\n").json();
    CHECK(j["models"] == "default");
    CHECK(j["sentences"][0][0]["form"] == "li");
    CHECK(svc.handle("POST", "/tag", {{"models", "other"}}, "li\n").status == 404);
    CHECK(svc.handle("POST", "/tag", {{"format", "xml"}}, "li\n").status == 400);
    CHECK(svc.handle("POST", "/tag", {}, "\n\n").status == 400);
    CHECK(svc.handle("GET", "/tag", {}, "").status == 405);
}

TEST_CASE("model directories become model sets") {
    auto dir = fresh_dir("histag_service_models");
    auto set = tiny_models();
    save_model(set.get(TaskId::POS), (dir / "pos.model").string());
    fs::create_directories(dir / "verse");
    save_model(set.get(TaskId::LEMMA), (dir / "verse" / "lemma.model").string());
    fs::create_directories(dir / "empty");
    Service svc(ServiceConfig{"", dir.string(), {}});
    CHECK(get(svc, "/health").json()["model_sets"] == json::array({"default", "verse"}));
    auto r = svc.handle("POST", "/tag", {{"models", "verse"}, {"format", "json"}}, "li\n").json();
    CHECK(r["sentences"][0][0]["pos"] == "_");
    CHECK(r["sentences"][0][0]["lemma"] != "_");
}

TEST_CASE("parse_tag_body") {
    CHECK(parse_tag_body("a\nb\n\n\nc") == std::vector<std::vector<std::string>>{{"a", "b"}, {"c"}});
    CHECK(parse_tag_body("form\tlemma\nx\ty\n") == std::vector<std::vector<std::string>>{{"x"}});
    CHECK(parse_tag_body("a\r\nb\r\n") == std::vector<std::vector<std::string>>{{"a", "b"}});
    CHECK_THROWS_AS(parse_tag_body(""), InputError);
}

TEST_CASE("http server on an ephemeral port") {
    Service svc(ServiceConfig{"", "", refs()});
    svc.add_corpus(parse_tsv(kCorpus, "c"));
    svc.add_model_set("default", tiny_models());
    HttpServer server(svc);
    int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread t([&] { server.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    auto health = client.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    auto page = client.Get("/corpus/c/tokens?offset=1&limit=2");
    REQUIRE(page);
    CHECK(json::parse(page->body)["tokens"][0]["form"] == "rois");
    auto edit = client.Post("/corpus/c/batch-edit",
                            json{{"filters", {{"lemma", "conte"}}}, {"column", "lemma"}, {"value", "comte"}}.dump(),
                            "application/json");
    REQUIRE(edit);
    CHECK(json::parse(edit->body)["edited"] == 1);
    auto exported = client.Get("/corpus/c/export");
    REQUIRE(exported);
    CHECK(exported->body.find("cuens\tcomte") != std::string::npos);
    auto tagged = client.Post("/tag?format=json", "li\nrois\n", "text/plain");
    REQUIRE(tagged);
    CHECK(tagged->status == 200);
    CHECK(json::parse(tagged->body)["sentences"][0].size() == 2);
    auto conflict = client.Post("/corpus/c/edit", json{{"index", 0}, {"column", "pos"}, {"value", "X"}, {"version", 0}}.dump(),
                                "application/json");
    REQUIRE(conflict);
    CHECK(conflict->status == 409);

    server.stop();
    t.join();
}
