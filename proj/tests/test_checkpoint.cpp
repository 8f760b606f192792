#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dive/checkpoint.hpp"
#include "dive/rng.hpp"

using namespace dive;
namespace fs = std::filesystem;

TEST_CASE("sha256 matches a known vector") {
    // sha256("abc")
    CHECK(sha256_hex("abc", 3) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("archives round-trip arrays and metadata bitwise") {
    ArrayArchive arc;
    auto rng = make_rng(1, "arc");
    arc.arrays["alpha"] = gaussian_tensor({3, 4}, rng);
    arc.arrays["beta/gamma"] = gaussian_tensor({2, 2, 2}, rng);
    arc.metadata["kind"] = "test";
    arc.metadata["note"] = "42";

    const fs::path path = fs::temp_directory_path() / "arc_test.dive";
    arc.save(path);
    ArrayArchive back = ArrayArchive::load(path);
    fs::remove(path);

    REQUIRE(back.arrays.size() == 2);
    CHECK(back.arrays.at("alpha").shape == std::vector<int64_t>({3, 4}));
    CHECK(back.arrays.at("alpha").data == arc.arrays.at("alpha").data);
    CHECK(back.arrays.at("beta/gamma").data == arc.arrays.at("beta/gamma").data);
    CHECK(back.metadata.at("kind") == "test");
    CHECK(back.metadata.at("note") == "42");
}

TEST_CASE("corrupted buffers are rejected by content hash") {
    ArrayArchive arc;
    auto rng = make_rng(2, "arc");
    arc.arrays["w"] = gaussian_tensor({16}, rng);
    const fs::path path = fs::temp_directory_path() / "arc_corrupt.dive";
    arc.save(path);

    // flip one byte near the end (inside the raw buffer region)
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-5, std::ios::end);
    char b;
    f.read(&b, 1);
    f.seekp(-5, std::ios::end);
    b = static_cast<char>(b ^ 0x40);
    f.write(&b, 1);
    f.close();

    CHECK_THROWS(ArrayArchive::load(path));
    fs::remove(path);
}

TEST_CASE("non-archives are rejected") {
    const fs::path path = fs::temp_directory_path() / "arc_bogus.dive";
    std::ofstream(path) << "not an archive at all";
    CHECK_THROWS(ArrayArchive::load(path));
    fs::remove(path);
    CHECK_THROWS(ArrayArchive::load("/nonexistent/path.dive"));
}
