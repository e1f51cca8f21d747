#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "bsio/config.hpp"

using namespace bsio;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("config files parse typed values with comments") {
    const auto doc = ConfigDoc::parse("# run setup\n"
                                      "lattice.n = 256\n"
                                      "lattice.h = 0.015625   # one over 64\n"
                                      "kernel.id = riesz\n"
                                      "run.out = \"out/report.json\"\n"
                                      "chain.auto = true\n"
                                      "\n");
    REQUIRE(doc.get_int("lattice.n") == 256);
    REQUIRE(doc.get_double("lattice.h") == 0.015625);
    REQUIRE(doc.get_string("kernel.id") == "riesz"); // bare words read as strings
    REQUIRE(doc.get_string("run.out") == "out/report.json");
    REQUIRE(doc.get_bool("chain.auto"));
    REQUIRE(doc.has("kernel.id"));
    REQUIRE_FALSE(doc.has("kernel.component"));
}

TEST_CASE("config parse errors carry line numbers") {
    REQUIRE_THROWS_WITH(ConfigDoc::parse("a.b = 1\nnonsense line\n"),
                        ContainsSubstring("line 2"));
    REQUIRE_THROWS_AS(ConfigDoc::parse("a.b = 1\na.b = 2\n"), validation_error);
    REQUIRE_THROWS_AS(ConfigDoc::parse("Upper.Case = 1\n"), validation_error);
    REQUIRE_THROWS_AS(ConfigDoc::parse("a.b = \n"), validation_error);
    REQUIRE_THROWS_AS(ConfigDoc::parse("a.b = 1 2\n"), validation_error);
    REQUIRE_THROWS_AS(ConfigDoc::parse("a.b = \"open\n"), validation_error);
    REQUIRE_THROWS_AS(ConfigDoc::parse("a.b = \"bad\\q\"\n"), validation_error);
    REQUIRE_THROWS_AS(ConfigDoc::parse("a.b = \"x\" trailing\n"), validation_error);
}

TEST_CASE("typed getters reject mismatches and honor fallbacks") {
    const auto doc = ConfigDoc::parse("n = 4\nx = 1.5\nname = \"abc\"\nflag = false\n");
    REQUIRE(doc.get_double("n") == 4.0); // ints widen to double
    REQUIRE_THROWS_AS(doc.get_int("x"), validation_error);
    REQUIRE_THROWS_AS(doc.get_bool("n"), validation_error);
    REQUIRE_THROWS_AS(doc.get_string("flag"), validation_error);
    REQUIRE_THROWS_AS(doc.get_int("missing"), validation_error);
    REQUIRE(doc.get_int("missing", 9) == 9);
    REQUIRE(doc.get_double("missing", 2.5) == 2.5);
    REQUIRE(doc.get_string("missing", "d") == "d");
    REQUIRE(doc.get_bool("missing", true));
}

TEST_CASE("setters keep their static types and overwrite in place") {
    ConfigDoc doc;
    doc.set("count", 3);
    doc.set("ratio", 2.0);
    doc.set("label", "abc");
    doc.set("on", true);
    REQUIRE(doc.get_int("count") == 3);
    REQUIRE(doc.get_bool("on"));

    doc.set("count", 7); // overwrite, no duplicate entry
    REQUIRE(doc.get_int("count") == 7);
    REQUIRE(doc.items().size() == 4);

    const std::string text = doc.emit();
    REQUIRE_THAT(text, ContainsSubstring("count = 7"));
    REQUIRE_THAT(text, ContainsSubstring("ratio = 2.0")); // doubles keep a decimal point
    REQUIRE_THAT(text, ContainsSubstring("label = \"abc\""));
    REQUIRE_THAT(text, ContainsSubstring("on = true"));
}

TEST_CASE("emit and parse round trip preserves values and order") {
    ConfigDoc doc;
    doc.set("lattice.n", 64);
    doc.set("lattice.h", 0.03125);
    doc.set("run.out", "weird \"name\"\twith\nbreaks");
    doc.set("kernel.component", 2);
    doc.set("exponents.p", 4.0);
    const auto back = ConfigDoc::parse(doc.emit());
    REQUIRE(back == doc);
    REQUIRE(back.get_string("run.out") == "weird \"name\"\twith\nbreaks");
}

TEST_CASE("config documents persist through files") {
    ConfigDoc doc;
    doc.set("lattice.n", 16);
    doc.set("symbol.id", "step");
    const std::string path =
        (std::filesystem::temp_directory_path() / "bsio_config_roundtrip.cfg").string();
    doc.save(path);
    const auto back = ConfigDoc::load(path);
    REQUIRE(back == doc);
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(ConfigDoc::load("/nonexistent/bsio.cfg"), validation_error);
}
