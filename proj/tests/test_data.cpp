#include <algorithm>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hdas/config.hpp"
#include "hdas/error.hpp"

using namespace hdas;

namespace {

std::vector<unsigned char> cifar_record(unsigned char label, int seed) {
  std::vector<unsigned char> r(3073);
  r[0] = label;
  for (std::size_t i = 1; i < r.size(); ++i) r[i] = static_cast<unsigned char>((i * 7 + static_cast<std::size_t>(seed) * 31) % 256);
  return r;
}

std::string temp_file(const std::string& name, const std::vector<unsigned char>& bytes) {
  const auto path = std::filesystem::temp_directory_path() / ("hdas_test_" + name);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return path.string();
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("cifar-10 records decode and normalize") {
    auto bytes = cifar_record(3, 0);
    const auto second = cifar_record(9, 1);
    bytes.insert(bytes.end(), second.begin(), second.end());
    const std::string path = temp_file("two.bin", bytes);
    const Dataset d = load_cifar10_batch(path);
    std::filesystem::remove(path);
    REQUIRE(d.size() == 2);
    CHECK(d.labels == std::vector<int>{3, 9});
    CHECK(d.images.shape() == Shape{2, 3, 32, 32});
    const double mean[3] = {0.4914, 0.4822, 0.4465}, sd[3] = {0.2470, 0.2435, 0.2616};
    double worst = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int ch = 0; ch < 3; ++ch) {
        for (int p = 0; p < 1024; ++p) {
          const unsigned char byte = bytes[static_cast<std::size_t>(i * 3073 + 1 + ch * 1024 + p)];
          const double want = (byte / 255.0 - mean[ch]) / sd[ch];
          worst = std::max(worst, std::abs(d.images[static_cast<std::size_t>((i * 3 + ch) * 1024 + p)] - want));
        }
      }
    }
    CHECK(worst == 0.0);
  }

  TEST_CASE("cifar-10 errors") {
    SUBCASE("truncated file") {
      const std::string path = temp_file("short.bin", std::vector<unsigned char>(3072, 1));
      try {
        load_cifar10_batch(path);
        FAIL("expected an io error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kIo);
        CHECK(std::string(e.what()).find("3072") != std::string::npos);
      }
      std::filesystem::remove(path);
    }
    SUBCASE("label out of range names the record") {
      auto bytes = cifar_record(1, 0);
      const auto bad = cifar_record(10, 1);
      bytes.insert(bytes.end(), bad.begin(), bad.end());
      try {
        decode_cifar10(bytes);
        FAIL("expected a validation error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kValidation);
        CHECK(std::string(e.what()).find("record 1") != std::string::npos);
      }
    }
    SUBCASE("empty file has no records") {
      const std::string path = temp_file("empty.bin", {});
      CHECK(load_cifar10_batch(path).size() == 0);
      std::filesystem::remove(path);
    }
    SUBCASE("missing file") {
      CHECK_THROWS_AS(load_cifar10_batch("/nonexistent/data_batch_1.bin"), Error);
    }
  }

  TEST_CASE("toy data is deterministic and balanced enough") {
    const ToyDataSpec spec{12, 400, 100, 0.1, 17};
    const auto [a_train, a_test] = make_toy_dataset(spec);
    const auto [b_train, b_test] = make_toy_dataset(spec);
    CHECK(a_train.labels == b_train.labels);
    CHECK(std::ranges::equal(a_train.images.data(), b_train.images.data()));
    CHECK(std::ranges::equal(a_test.images.data(), b_test.images.data()));
    CHECK(a_train.images.shape() == Shape{400, 3, 12, 12});
    std::array<int, 4> counts{};
    for (int y : a_train.labels) ++counts[static_cast<std::size_t>(y)];
    for (int c : counts) CHECK(c > 60);
    ToyDataSpec other = spec;
    other.seed = 18;
    CHECK(make_toy_dataset(other).first.labels != a_train.labels);
  }

  TEST_CASE("split halves partition the indices") {
    for (int n : {2, 3, 10, 101}) {
      const auto [w, a] = split_data(n, 5);
      CHECK(static_cast<int>(w.size()) == (n + 1) / 2);
      CHECK(static_cast<int>(a.size()) == n / 2);
      std::vector<int> all(w);
      all.insert(all.end(), a.begin(), a.end());
      std::sort(all.begin(), all.end());
      for (int i = 0; i < n; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
      CHECK(split_data(n, 5) == std::make_pair(w, a));
    }
    CHECK(split_data(100, 1) != split_data(100, 2));
    CHECK_THROWS_AS(split_data(1, 0), Error);
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults round-trip through the text form") {
    Config c;
    c.search.delta = 0.25;
    c.search.cells_per_stage = {3, 4, 5};
    c.data.kind = "cifar10";
    c.output_dir = "runs/a";
    const std::string text = format_config(c);
    const Config back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(back.search.delta == 0.25);
    CHECK(back.search.cells_per_stage == std::array<int, 3>{3, 4, 5});
    CHECK(back.output_dir == "runs/a");
  }

  TEST_CASE("unknown keys are reported with their line") {
    try {
      parse_config("# comment\nsearch.epochs = 3\n\nsearch.epoch = 4\n");
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kValidation);
      const std::string what = e.what();
      CHECK(what.find("line 4") != std::string::npos);
      CHECK(what.find("search.epoch") != std::string::npos);
    }
  }

  TEST_CASE("invalid values are rejected") {
    CHECK_THROWS_AS(parse_config("search.epochs = 0\n"), Error);
    CHECK_THROWS_AS(parse_config("search.weight_lr = -1\n"), Error);
    CHECK_THROWS_AS(parse_config("search.cells_per_stage = 2, 2\n"), Error);
    CHECK_THROWS_AS(parse_config("search.epochs 3\n"), Error);
    CHECK_THROWS_AS(parse_config("data.kind = imagenet\n"), Error);
  }

  TEST_CASE("values and seeds") {
    Config c = parse_config("search.epochs = 7 # inline\nlosses.theta = 1, 2, 3\ndata.seed = 9\n");
    CHECK(c.search.epochs == 7);
    CHECK(c.search.theta == std::vector<double>{1, 2, 3});
    apply_seed(c, 42);
    CHECK(c.search.seed == 42);
    CHECK(c.eval.seed == 42);
    CHECK(c.data.seed == 9);
  }
}
