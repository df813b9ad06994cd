#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>

#include "doctest.h"
#include "egan/entropic_gan.hpp"
#include "egan/experiments.hpp"
#include "egan/io.hpp"
#include "helpers.hpp"

using namespace egan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "egan_io_test";
  fs::create_directories(dir);
  return dir / name;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::string line(const std::string& s, std::size_t k) {
  std::istringstream in(s);
  std::string l;
  for (std::size_t i = 0; i <= k; ++i) std::getline(in, l);
  return l;
}

}  // namespace

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, -1e-300, 1.0 / 3.0, 6.02214076e23, std::numeric_limits<double>::denorm_min()}) {
    CHECK(parse_double(format_decimal(v)) == v);
    CHECK(parse_double(format_hex(v)) == v);
  }
  CHECK_THROWS(parse_double("1.5x"));
  CHECK(join_csv({"a", "b", "c"}) == "a,b,c");
}

TEST_CASE("model file round-trip is bit-exact") {
  TrainConfig cfg = experiment_train_config();
  cfg.generator_hidden = {5, 4};
  cfg.discriminator_hidden = {3};
  EntropicGanModel model = init_model(cfg, 3, 77);
  Rng rng(1);
  for (auto* params : {&model.generator, &model.d1, &model.d2}) {
    for (Tensor* t : params->tensors()) *t = egan::testing::random_tensor(rng, t->rows(), t->cols());
  }
  CHECK(model_from_json(model_to_json(model)) == model);

  const fs::path p = scratch("model.json");
  save_model(p, model, {{"command", "test"}});
  CHECK(read_file(p).rfind("# egan ", 0) == 0);
  CHECK(load_model(p) == model);

  std::string text = model_to_json(model);
  const auto at = text.find("\"format_version\"");
  REQUIRE(at != std::string::npos);
  const auto colon = text.find(':', at);
  text.replace(colon + 1, text.find_first_of(",}", colon) - colon - 1, "99");
  CHECK_THROWS_AS(model_from_json(text), IoError);
  CHECK_THROWS_AS(model_from_json("{"), IoError);
  CHECK_THROWS_AS(load_model(scratch("missing.json")), IoError);
}

TEST_CASE("oracle file round-trip") {
  const LinearGaussianOracle oracle(egan::testing::random_tensor(*std::make_unique<Rng>(4), 3, 2), 0.25,
                                    Vector::Constant(3, 0.5));
  const LinearGaussianOracle back = oracle_from_json(oracle_to_json(oracle));
  CHECK(back.g() == oracle.g());
  CHECK(back.lambda() == oracle.lambda());
  CHECK(back.offset() == oracle.offset());
}

TEST_CASE("dataset files") {
  Rng rng(2);
  const Matrix pts = egan::testing::random_tensor(rng, 6, 3);
  const fs::path p = scratch("data.csv");
  save_dataset(p, pts, {{"command", "gen-data"}, {"seed", "2"}});
  CHECK(load_dataset(p) == pts);
  const std::string text = read_file(p);
  CHECK(line(text, 0).rfind("# egan ", 0) == 0);
  CHECK(line(text, 0).find("\"seed\":\"2\"") != std::string::npos);
  CHECK(line(text, 1) == "y0,y1,y2");
  CHECK(count_lines(text) == 8);

  const std::string empty = dataset_csv(Matrix(0, 2), {});
  CHECK(count_lines(empty) == 2);
  CHECK(line(empty, 1) == "y0,y1");
}

TEST_CASE("training log columns") {
  TrainLog log(3);
  for (int i = 0; i < 3; ++i) log[i] = {i + 1, -0.5 * i, 0.1, 2.0, 3.0, 0.01 * i};
  const std::string plain = train_log_csv(log, {}, false);
  const std::string timed = train_log_csv(log, {}, true);
  CHECK(count_lines(plain) == 5);
  auto columns = [](const std::string& l) { return std::count(l.begin(), l.end(), ',') + 1; };
  CHECK(columns(line(plain, 1)) == 5);
  CHECK(columns(line(plain, 2)) == 5);
  CHECK(columns(line(timed, 1)) == 6);
  CHECK(columns(line(timed, 4)) == 6);
  CHECK(line(plain, 2).rfind("1,", 0) == 0);
}
