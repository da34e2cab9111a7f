#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "rsg/builder.hpp"
#include "rsg/pipeline.hpp"

using namespace rsg;

namespace {

PromptBlock block(const std::string& file, const std::string& body, double score) {
    return {file, body, -1, score};
}

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("token estimate is ceil(chars/4)") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("abc") == 1);
    CHECK(estimate_tokens("abcd") == 1);
    CHECK(estimate_tokens("abcde") == 2);
}

TEST_CASE("assemble_prompt ordering policies") {
    const std::vector<PromptBlock> ranked{block("a.py", "best\n", 3.0),
                                          block("b.py", "second\n", 2.0),
                                          block("c.py", "third\n", 1.0)};
    SUBCASE("L2H: best context adjacent to the query") {
        const auto p = assemble_prompt("query", ranked, Ordering::L2H, -1);
        REQUIRE(p.blocks.size() == 3);
        CHECK(p.blocks[0].body == "third\n");
        CHECK(p.blocks[1].body == "second\n");
        CHECK(p.blocks[2].body == "best\n");
        // query is emitted last
        const std::string text = p.text();
        CHECK(text.rfind("query") == text.size() - 5);
        CHECK(text.find("best") < text.rfind("query"));
    }
    SUBCASE("H2L: best context first") {
        const auto p = assemble_prompt("query", ranked, Ordering::H2L, -1);
        CHECK(p.blocks[0].body == "best\n");
        CHECK(p.blocks[2].body == "third\n");
    }
    SUBCASE("tight budget keeps only the best block under either policy") {
        const long budget = estimate_tokens("query") + ranked[0].token_estimate();
        for (Ordering o : {Ordering::L2H, Ordering::H2L}) {
            const auto p = assemble_prompt("query", ranked, o, budget);
            REQUIRE(p.blocks.size() == 1);
            CHECK(p.blocks[0].body == "best\n");
            CHECK(p.token_estimate <= budget);
        }
    }
    SUBCASE("budget smaller than the query alone is an error") {
        CHECK_THROWS_AS(assemble_prompt("a long query text", ranked, Ordering::H2L, 1),
                        PipelineError);
    }
    SUBCASE("budget never exceeded; relative order stable under budget removal") {
        const auto tight = assemble_prompt("query", ranked, Ordering::L2H,
                                           estimate_tokens("query") +
                                               ranked[0].token_estimate() +
                                               ranked[1].token_estimate());
        const auto loose = assemble_prompt("query", ranked, Ordering::L2H, -1);
        REQUIRE(tight.blocks.size() == 2);
        // tight = [second, best]; loose = [third, second, best]
        CHECK(tight.blocks[0].body == loose.blocks[1].body);
        CHECK(tight.blocks[1].body == loose.blocks[2].body);
    }
}

TEST_CASE("stub completion client and the complete() contract") {
    StubCompletionClient stub(std::map<std::string, std::string>{{"prompt A", "line one\nline two"}});
    AssembledPrompt p;
    p.query = "prompt A";
    CHECK(complete(p, stub, "r1") == "line one");

    SUBCASE("trailing whitespace stripped from the first line") {
        StubCompletionClient s2(std::map<std::string, std::string>{{"prompt A", "padded   \nrest"}});
        CHECK(complete(p, s2, "r1") == "padded");
    }
    SUBCASE("unmapped prompt falls back to a deterministic line") {
        AssembledPrompt other;
        other.query = "unmapped";
        const std::string a = complete(other, stub, "r1");
        const std::string b = complete(other, stub, "r2");
        CHECK(a == b);
        CHECK(a.starts_with("// completion "));
    }
    SUBCASE("empty completion is a typed error naming the request") {
        StubCompletionClient empty(std::map<std::string, std::string>{{"prompt A", ""}});
        try {
            complete(p, empty, "req-9");
            FAIL("expected PipelineError");
        } catch (const PipelineError& e) {
            CHECK(std::string(e.what()).find("req-9") != std::string::npos);
        }
    }
}

TEST_CASE("http client requires the endpoint via environment") {
    unsetenv("RSG_COMPLETION_ENDPOINT");
    CHECK_THROWS_AS(HttpCompletionClient{}, PipelineError);
}

TEST_CASE("acc@k: hit window and monotonicity") {
    EvalRecord r;
    r.id = "r";
    r.gold_node = 7;
    r.ranked = {3, 5, 7, 9};
    CHECK(metric_acc_at_k({r}, 3) == doctest::Approx(100.0));
    CHECK(metric_acc_at_k({r}, 1) == doctest::Approx(0.0));
    CHECK_THROWS_AS(metric_acc_at_k({r}, 0), PipelineError);

    // monotone in k on random record sets
    std::mt19937_64 rng(31);
    std::vector<EvalRecord> records;
    for (int i = 0; i < 50; ++i) {
        EvalRecord rec;
        rec.id = "x" + std::to_string(i);
        rec.gold_node = static_cast<NodeId>(rng() % 12);
        for (int j = 0; j < 8; ++j) rec.ranked.push_back(static_cast<NodeId>(rng() % 12));
        records.push_back(rec);
    }
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
        const double acc = metric_acc_at_k(records, k);
        CHECK(acc >= prev);
        prev = acc;
    }
}

TEST_CASE("exact match normalization table") {
    const std::vector<std::pair<std::pair<std::string, std::string>, bool>> table{
        {{"  x = f( a )", "x = f( a )"}, true},     // edge strip
        {{"x=f(a)", "x = f(a)"}, false},            // internal tokens differ
        {{"", "x = 1"}, false},                     // empty prediction
        {{"x = 1", "x = 1"}, true},                 // identity
        {{"x  =  1", "x = 1"}, true},               // internal runs collapse
        {{"\tx = 1\t", "x = 1"}, true},             // tabs are whitespace
        {{"x = 1;", "x = 1"}, false},               // payload differs
        {{"return  y", "return y "}, true},         // both sides normalized
        {{"a b", "ab"}, false},                     // collapse keeps one space
        {{"   ", ""}, true},                        // whitespace-only == empty
    };
    for (const auto& [pair, want] : table) {
        EvalRecord r;
        r.id = "em";
        r.prediction = pair.first;
        r.has_prediction = true;
        r.gold_next_line = pair.second;
        CHECK(metric_exact_match({r}) == doctest::Approx(want ? 100.0 : 0.0));
    }
}

TEST_CASE("jaccard alignment of gold snippets") {
    std::vector<SourceUnit> units;
    units.push_back(SourceUnit::from_text(
        "a.py", "def transmit(payload, retries):\n    return send(payload, retries)\n"));
    units.push_back(SourceUnit::from_text("b.py", "def other():\n    return 1\n"));
    const Rsg g = build_rsg_from_sources(std::move(units)).graph;

    CHECK(jaccard_tokens("a b c", "a b c") == doctest::Approx(1.0));
    CHECK(jaccard_tokens("a b", "c d") == doctest::Approx(0.0));
    CHECK(jaccard_tokens("a b c d", "a b") == doctest::Approx(0.5));

    const auto hit = align_gold(g, "def transmit(payload, retries): return send(payload)");
    REQUIRE(hit.has_value());
    CHECK(g.node(*hit).name == "transmit");
    CHECK(!align_gold(g, "zzz qqq www eee rrr").has_value());
}

TEST_CASE("records JSONL round trip") {
    std::vector<EvalRecord> records(2);
    records[0].id = "a";
    records[0].query_text = "q1";
    records[0].gold_node = 4;
    records[0].ranked = {4, 2};
    records[1].id = "b";
    records[1].query_text = "q2";
    records[1].query_file = "x.py";
    records[1].gold_next_line = "return 1";
    records[1].prediction = "return 1";
    records[1].has_prediction = true;
    const auto path = temp_file("records_roundtrip.jsonl");
    save_records(records, path);
    const auto back = load_records(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == "a");
    CHECK(back[0].ranked == std::vector<NodeId>{4, 2});
    CHECK(back[1].gold_next_line == "return 1");
    CHECK(back[1].has_prediction);
    std::filesystem::remove(path);
}

TEST_CASE("baseline prompts") {
    EvalRecord r;
    r.id = "b";
    r.query_text = "the query";
    r.query_file = "f.py";
    r.gold_snippet = "def gold(): pass";

    SUBCASE("GoldOnly: exactly one context block") {
        const auto p = baseline_prompt(BaselineMode::GoldOnly, r, "", 0);
        REQUIRE(p.blocks.size() == 1);
        CHECK(p.blocks[0].body == "def gold(): pass");
    }
    SUBCASE("GoldOnly without a snippet is an error") {
        EvalRecord bare = r;
        bare.gold_snippet.clear();
        CHECK_THROWS_AS(baseline_prompt(BaselineMode::GoldOnly, bare, "", 0), PipelineError);
    }
    SUBCASE("InFileOnly clamps at the file start") {
        std::string file_text;
        for (int i = 1; i <= 50; ++i) file_text += "line" + std::to_string(i) + "\n";
        const auto p = baseline_prompt(BaselineMode::InFileOnly, r, file_text, 10);
        REQUIRE(p.blocks.size() == 1);
        CHECK(p.blocks[0].body.find("line1\n") == 0);
        CHECK(p.blocks[0].body.find("line9\n") != std::string::npos);
        CHECK(p.blocks[0].body.find("line10") == std::string::npos);
        // 9 preceding lines
        CHECK(std::count(p.blocks[0].body.begin(), p.blocks[0].body.end(), '\n') == 9);
    }
    SUBCASE("InFileOnly takes exactly 30 lines deep in the file") {
        std::string file_text;
        for (int i = 1; i <= 120; ++i) file_text += "line" + std::to_string(i) + "\n";
        const auto p = baseline_prompt(BaselineMode::InFileOnly, r, file_text, 100);
        REQUIRE(p.blocks.size() == 1);
        CHECK(std::count(p.blocks[0].body.begin(), p.blocks[0].body.end(), '\n') == 30);
        CHECK(p.blocks[0].body.find("line70\n") == 0);
        CHECK(p.blocks[0].body.find("line99\n") != std::string::npos);
    }
}

TEST_CASE("manifest hashing and verification") {
    const auto artifact = temp_file("manifest_artifact.bin");
    const auto manifest_path = temp_file("manifest_test.json");
    {
        std::ofstream out(artifact, std::ios::binary);
        out << "payload v1";
    }
    record_artifact(manifest_path, artifact);
    const Manifest m = load_manifest(manifest_path);
    verify_artifact(m, artifact);  // matches

    {
        std::ofstream out(artifact, std::ios::binary);
        out << "payload v2 tampered";
    }
    CHECK_THROWS_AS(verify_artifact(m, artifact), PipelineError);
    // unlisted artifacts are tolerated
    const auto unlisted = temp_file("manifest_unlisted.bin");
    {
        std::ofstream out(unlisted, std::ios::binary);
        out << "x";
    }
    verify_artifact(m, unlisted);
    std::filesystem::remove(artifact);
    std::filesystem::remove(manifest_path);
    std::filesystem::remove(unlisted);
}

TEST_CASE("retrieve: fallback equals cosine rerank; fixed N2; provenance guard") {
    std::vector<SourceUnit> units;
    units.push_back(SourceUnit::from_text("lib.py",
                                          "def alpha():\n    return 1\n"
                                          "def beta():\n    return 2\n"
                                          "def gamma():\n    return 3\n"));
    units.push_back(SourceUnit::from_text("use.py", "import lib\n"));
    const Rsg g = build_rsg_from_sources(std::move(units)).graph;
    const BaselineEncoder encoder(32);
    const EmbeddingTable table = build_table(g, encoder);

    RetrievalRequest request;
    request.query_text = "def alpha(): return 1";
    request.expansion.anchor_count = 2;

    const RankedContexts out = retrieve(g, table, nullptr, encoder, request);
    REQUIRE(!out.entries.empty());
    // no model -> exactly cosine_rerank over the candidate universe
    const auto oracle =
        cosine_rerank(encoder.encode(request.query_text), out.candidate_universe, table);
    REQUIRE(out.entries.size() == oracle.entries.size());
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        CHECK(out.entries[i].node == oracle.entries[i].node);
        CHECK(out.entries[i].score == oracle.entries[i].score);
    }

    SUBCASE("fixed N2 returns exactly that many contexts") {
        request.top_n = 3;
        const auto top = retrieve(g, table, nullptr, encoder, request);
        CHECK(top.entries.size() == 3);
    }
    SUBCASE("import-universe filter restricts candidates") {
        request.query_file = "use.py";
        const auto filtered = retrieve(g, table, nullptr, encoder, request);
        for (const auto& e : filtered.entries) {
            const NodeKind k = g.node(e.node).kind;
            CHECK(g.node(e.node).file_path == "lib.py");
            CHECK(k != NodeKind::Method);
        }
    }
    SUBCASE("provenance mismatch is rejected") {
        const BaselineEncoder other(16);
        CHECK_THROWS_AS(retrieve(g, table, nullptr, other, request), PipelineError);
    }
}

TEST_CASE("run_sensitivity: anchored gold hits 100%, grid must be non-empty") {
    std::vector<SourceUnit> units;
    units.push_back(SourceUnit::from_text("a.py", "def f():\n    return 1\n"));
    const Rsg g = build_rsg_from_sources(std::move(units)).graph;
    const BaselineEncoder encoder(16);
    const EmbeddingTable table = build_table(g, encoder);

    MiningSample sample{&g, &table, table.entries[1], 1};  // query = gold embedding
    CHECK_THROWS_AS(run_sensitivity({sample}, {}, nullptr), PipelineError);

    GridPoint knn_point{Strategy::Knn, 1, 1, 1};
    const auto rows = run_sensitivity({sample}, {knn_point}, nullptr);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].result.hit_rate == doctest::Approx(1.0));
    CHECK(rows[0].result.mean_coverage == doctest::Approx(0.5));  // 1 of 2 nodes

    const std::string rendered = render_sensitivity_table(rows);
    CHECK(rendered.find("strategy\tD\tM\tK\thits\tcoverage") == 0);
    CHECK(rendered.find("knn\t1\t1\t1\t1.0000\t0.5000") != std::string::npos);
}
