#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "nsdial/checkpoint.hpp"
#include "nsdial/rng.hpp"

using namespace nsdial;
namespace fs = std::filesystem;

namespace {
ParamStore make_store(uint64_t seed) {
    ParamStore ps;
    Rng rng(seed);
    ps.add_uniform("enc.W", {4, 3}, rng, 0.5f);
    ps.add_uniform("enc.b", {4}, rng, 0.5f);
    ps.add_uniform("emb", {7, 3}, rng, 0.5f);
    return ps;
}

std::string tmpdir() {
    auto d = fs::temp_directory_path() / "nsdial_ckpt_test";
    fs::create_directories(d);
    return d.string();
}
}  // namespace

TEST_CASE("checkpoint roundtrip is bit exact", "[checkpoint]") {
    auto dir = tmpdir();
    auto man = dir + "/model.json";
    ParamStore a = make_store(99);
    nlohmann::ordered_json meta;
    meta["hidden"] = 4;
    save_checkpoint(man, a, meta);

    ParamStore b = make_store(1234);  // different values, same structure
    auto got = load_checkpoint(man, b);
    REQUIRE(got["hidden"] == 4);
    for (int i = 0; i < a.size(); ++i) {
        const auto& va = a.value(i);
        const auto& vb = b.value(i);
        REQUIRE(va.shape == vb.shape);
        REQUIRE(std::memcmp(va.data.data(), vb.data.data(), va.data.size() * 4) == 0);
    }

    // save the loaded store again: identical bytes on disk
    auto man2 = dir + "/model2.json";
    save_checkpoint(man2, b);
    std::ifstream f1(checkpoint_data_path(man), std::ios::binary);
    std::ifstream f2(checkpoint_data_path(man2), std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(s1 == s2);
    REQUIRE(s1.size() == (4 * 3 + 4 + 7 * 3) * 4);
}

TEST_CASE("checkpoint rejects truncated data", "[checkpoint]") {
    auto dir = tmpdir();
    auto man = dir + "/trunc.json";
    ParamStore a = make_store(5);
    save_checkpoint(man, a);
    auto data = checkpoint_data_path(man);
    fs::resize_file(data, fs::file_size(data) - 4);
    ParamStore b = make_store(6);
    REQUIRE_THROWS_WITH(load_checkpoint(man, b), Catch::Matchers::ContainsSubstring("bytes"));
}

TEST_CASE("checkpoint rejects structural mismatch", "[checkpoint]") {
    auto dir = tmpdir();
    auto man = dir + "/shape.json";
    ParamStore a = make_store(5);
    save_checkpoint(man, a);

    ParamStore wrong_shape;
    Rng rng(1);
    wrong_shape.add_uniform("enc.W", {4, 4}, rng, 0.5f);  // 4x3 in the file
    wrong_shape.add_uniform("enc.b", {4}, rng, 0.5f);
    wrong_shape.add_uniform("emb", {7, 3}, rng, 0.5f);
    REQUIRE_THROWS_WITH(load_checkpoint(man, wrong_shape),
                        Catch::Matchers::ContainsSubstring("shape"));

    ParamStore wrong_name;
    wrong_name.add_uniform("enc.W", {4, 3}, rng, 0.5f);
    wrong_name.add_uniform("enc.bias", {4}, rng, 0.5f);
    wrong_name.add_uniform("emb", {7, 3}, rng, 0.5f);
    REQUIRE_THROWS_WITH(load_checkpoint(man, wrong_name),
                        Catch::Matchers::ContainsSubstring("no parameter"));

    ParamStore fewer;
    fewer.add_uniform("enc.W", {4, 3}, rng, 0.5f);
    REQUIRE_THROWS_WITH(load_checkpoint(man, fewer),
                        Catch::Matchers::ContainsSubstring("count"));

    REQUIRE_THROWS_WITH(load_checkpoint(dir + "/missing.json", a),
                        Catch::Matchers::ContainsSubstring("cannot open"));
}
