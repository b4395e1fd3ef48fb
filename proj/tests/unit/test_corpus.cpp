#include <doctest.h>

#include <filesystem>

#include "histag/corpus.hpp"
#include "histag/task.hpp"

using namespace histag;

TEST_CASE("utf8 helpers") {
    CHECK(utf8_chars("cheual") == std::vector<std::string>{"c", "h", "e", "u", "a", "l"});
    CHECK(utf8_chars("çà") == std::vector<std::string>{"ç", "à"});
    CHECK(utf8_upper("chevalé") == "CHEVALÉ");
    CHECK(split("a\tb\t", '\t') == std::vector<std::string>{"a", "b", ""});
    CHECK(trim("  x \r") == "x");
}

TEST_CASE("rng is deterministic and mix_seed separates streams") {
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
    Rng c(9);
    for (int i = 0; i < 1000; ++i) {
        auto v = c.below(7);
        CHECK(v < 7);
        double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("parse_tsv reads the four columns") {
    Document d = parse_tsv("Saint\tsaint\tADJqua\tNOMB.=s|GENRE=m|CAS=r|DEGRE=p\n"
                           "on\ten1+le\tPRE.DETdef\tMORPH=empty+NOMB.=s|GENRE=m|CAS=r\n"
                           "\n"
                           "Mont\tmont\n",
                           "doc");
    REQUIRE(d.sentences.size() == 2);
    const auto& saint = d.at(0, 0);
    CHECK(saint.form == "Saint");
    CHECK(saint.lemma == "saint");
    CHECK(saint.pos == "ADJqua");
    CHECK(saint.morph == "NOMB.=s|GENRE=m|CAS=r|DEGRE=p");
    CHECK(d.at(0, 1).pos_segments().size() == 2);
    CHECK(d.at(1, 0).pos == "_");
    CHECK(d.at(1, 0).morph == "_");
    CHECK(d.token_count() == 3);
}

TEST_CASE("parse_tsv errors carry the line number") {
    try {
        parse_tsv("a\tb\n\nc\n", "x");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse_tsv("a\tb\tc\td\te\n"), ParseError);
    CHECK_THROWS_AS(parse_tsv(""), InputError);
    CHECK_THROWS_AS(parse_tsv("\n\n"), InputError);
    // three morph segments against two POS segments
    CHECK_THROWS_AS(parse_tsv("au\ta3+le\tPRE.DETdef\tNOMB.=s+NOMB.=s+NOMB.=p\n"), ParseError);
    CHECK_THROWS_AS(parse_tsv("x\ty\tNOM1\t_\n"), ParseError);
}

TEST_CASE("write_tsv round trip keeps comments and header") {
    std::string text =
        "form\tlemma\tpos\tmorph\n"
        "# folio 1r\n"
        "Saint\tsaint\tADJqua\tNOMB.=s|GENRE=m|CAS=r|DEGRE=p\n"
        ".\t.\tPONfrt\t_\n"
        "\n"
        "Jaike\tJacques\tNOMpro\tNOMB.=s|GENRE=m|CAS=r\n"
        "\n"
        "# end\n";
    Document d = parse_tsv(text, "t");
    CHECK(d.has_header);
    CHECK(write_tsv(d) == text);
    CHECK(parse_tsv(write_tsv(d), "t") == d);
}

TEST_CASE("empty morph is written as underscore") {
    Document d = parse_tsv("a\tb\n", "x");
    CHECK(write_tsv(d) == "a\tb\t_\t_\n\n");
}

TEST_CASE("reference lists and validation") {
    ReferenceSet refs = parse_reference_lists("saint\nmont\na3\nle\n", "ADJqua\nNOMcom\nPRE\nDETdef\n",
                                              "NOMB.\ts\nNOMB\tp\nGENRE\tm\nGENRE\tx\nCAS\tr\n");
    CHECK(refs.morph_values.at("NOMB") == std::set<std::string>{"s", "p"});
    CHECK(refs.morph_values.at("GENRE").count("x"));

    Document clean = parse_tsv("Saint\tsaint\tADJqua\tNOMB.=s|GENRE=m|CAS=r\n"
                               "au\ta3+le\tPRE.DETdef\tMORPH=empty+NOMB.=s|GENRE=m|CAS=r\n",
                               "c");
    CHECK(validate(clean, refs).empty());

    Document dirty = parse_tsv("Mont\tmons\tNOMcom\tNOMB.=s|GENRE=f|CAS=r\n"
                               "au\ta3+li\tPRE.DETind\t_\n",
                               "d");
    auto r = validate(dirty, refs);
    REQUIRE(r.unallowed_lemmas.size() == 2);
    CHECK(r.unallowed_lemmas[0] == ValidationEntry{"d", 0, 0, "mons"});
    CHECK(r.unallowed_lemmas[1].value == "a3+li");
    REQUIRE(r.unallowed_pos.size() == 1);
    CHECK(r.unallowed_pos[0].value == "DETind");
    REQUIRE(r.unallowed_morph.size() == 1);
    CHECK(r.unallowed_morph[0].value == "GENRE=f");

    CHECK_THROWS_AS(parse_reference_lists("a\n", "B\n", "FOO\tx\n"), InputError);
    CHECK_THROWS_AS(parse_reference_lists("a\n", "B\n", "NOMB s\n"), ParseError);
}

TEST_CASE("read_corpus uses the basename as id") {
    auto dir = std::filesystem::temp_directory_path() / "histag_corpus_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "chron.tsv").string();
    write_file(path, "a\tb\n");
    CHECK(read_corpus(path).id == "chron");
    CHECK_THROWS_AS(read_corpus((dir / "missing.tsv").string()), InputError);
}

TEST_CASE("task labels") {
    AnnotatedToken t{"Saint", "saint", "ADJqua", "NOMB.=s|GENRE=m|CAS=r|DEGRE=p"};
    CHECK(task_label(TaskId::LEMMA, t) == "saint");
    CHECK(task_label(TaskId::POS, t) == "ADJqua");
    CHECK(task_label(TaskId::NOMB, t) == "s");
    CHECK(task_label(TaskId::DEGRE, t) == "p");
    CHECK(task_label(TaskId::TEMPS, t) == "_");
    CHECK(parse_task("lemma") == TaskId::LEMMA);
    CHECK(parse_task("Genre") == TaskId::GENRE);
    CHECK_THROWS_AS(parse_task("XYZ"), ConfigError);
    for (auto task : kAllTasks) CHECK(parse_task(task_name(task)) == task);
}
