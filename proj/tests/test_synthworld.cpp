#include "doctest.h"

#include "vtp/episode_io.hpp"
#include "vtp/synthworld.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace vtp;
namespace fs = std::filesystem;

namespace {

synth::GeneratorConfig desk_generator(ad::Index episodes = 4, uint64_t seed = 0) {
  synth::GeneratorConfig gen;
  gen.episodes = episodes;
  gen.seed = seed;
  return gen;
}

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("world config rejects a closable information gap") {
  synth::WorldConfig w;
  w.quantization = 0.05;
  w.tolerance = 0.05;
  CHECK_THROWS_WITH_AS(w.validate(), doctest::Contains("tolerance < quantization/2"),
                       ad::DomainError);
  synth::WorldConfig ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("zero action away from contact is a fixed point") {
  synth::WorldConfig w;
  synth::ObsGeometry geom;
  synth::World world(w, geom, {0.2, 0.2}, {0.8, 0.8});
  ad::Array tact0 = world.tactile_channels();
  ad::Array zero = ad::Array::Zero(geom.proprio_dim());
  world.apply(zero);
  CHECK(world.state().effector.x() == 0.2);
  CHECK(world.state().effector.y() == 0.2);
  CHECK((world.tactile_channels() == tact0).all());
  CHECK(!world.state().contact);
}

TEST_CASE("tactile channels peak exactly at the target") {
  synth::WorldConfig w;
  synth::ObsGeometry geom;
  synth::World at_target(w, geom, {0.6, 0.6}, {0.6, 0.6});
  ad::Array peak = at_target.tactile_channels();
  CHECK((peak == 1.0).all());

  // any displaced effector reads strictly below the peak on every channel
  for (double dx : {0.01, 0.05, 0.2}) {
    synth::World off(w, geom, {0.6 + dx, 0.6 - dx / 2}, {0.6, 0.6});
    CHECK((off.tactile_channels() < 1.0).all());
  }
}

TEST_CASE("tactile field carries direction in its angular phases") {
  synth::WorldConfig w;
  synth::ObsGeometry geom;
  synth::World east(w, geom, {0.4, 0.6}, {0.6, 0.6});   // target to the east
  synth::World west(w, geom, {0.8, 0.6}, {0.6, 0.6});   // target to the west
  ad::Array te = east.tactile_channels();
  ad::Array tw = west.tactile_channels();
  // same distance, different direction: channel 0 points east (phase 0)
  CHECK(te(0) > tw(0));
}

TEST_CASE("expert pursues the quantized cell center exactly while far") {
  synth::WorldConfig w;
  synth::ObsGeometry geom;
  synth::World world(w, geom, {0.1, 0.1}, {0.8, 0.8});
  ad::Array a = synth::expert_action(world);
  Eigen::Vector2d dir(a(0), a(1));
  Eigen::Vector2d want = world.cell_center() - world.state().effector;
  double cross = dir.x() * want.y() - dir.y() * want.x();
  CHECK(std::abs(cross) < 1e-9 * want.norm() * dir.norm());
  CHECK(dir.dot(want) > 0.0);
  CHECK(dir.norm() == doctest::Approx(w.max_step));
}

TEST_CASE("expert succeeds on seeds 0..99") {
  synth::GeneratorConfig gen = desk_generator(100, 7);
  int successes = 0;
  ad::Index max_len = 0;
  for (ad::Index i = 0; i < gen.episodes; ++i) {
    synth::Episode ep = synth::generate_episode(gen, i);
    successes += ep.success ? 1 : 0;
    max_len = std::max(max_len, ep.length());
    CHECK(ep.length() <= gen.world.horizon);
  }
  CHECK(successes == 100);
  CHECK(max_len <= gen.world.horizon);
}

TEST_CASE("insert phase finishes the task next step") {
  synth::WorldConfig w;
  synth::ObsGeometry geom;
  // start inside the cell and tolerance so phases cascade quickly
  synth::World world(w, geom, {0.62, 0.61}, {0.6, 0.6});
  for (int i = 0; i < 4 && world.state().phase != synth::TaskPhase::Insert; ++i) {
    world.apply(synth::expert_action(world));
  }
  REQUIRE(world.state().phase == synth::TaskPhase::Insert);
  world.apply(synth::expert_action(world));
  CHECK(world.state().phase == synth::TaskPhase::Done);
}

TEST_CASE("generation is deterministic and targets cover the workspace") {
  synth::GeneratorConfig gen = desk_generator(6, 11);
  auto d1 = synth::generate_dataset(gen);
  auto d2 = synth::generate_dataset(gen);
  REQUIRE(d1.size() == d2.size());
  for (size_t e = 0; e < d1.size(); ++e) {
    REQUIRE(d1[e].length() == d2[e].length());
    for (ad::Index t = 0; t < d1[e].length(); ++t) {
      CHECK((d1[e].frames[t].tactile == d2[e].frames[t].tactile).all());
      CHECK((d1[e].frames[t].action == d2[e].frames[t].action).all());
    }
  }

  // low-discrepancy placement: 1000 targets cover the box with max gap < 0.2
  std::vector<Eigen::Vector2d> targets;
  synth::GeneratorConfig big = desk_generator(1000, 3);
  for (ad::Index i = 0; i < 1000; ++i) {
    synth::Episode ep = synth::generate_episode(big, i);
    targets.push_back(ep.target);
  }
  double worst = 0.0;
  for (int gx = 0; gx < 50; ++gx) {
    for (int gy = 0; gy < 50; ++gy) {
      Eigen::Vector2d probe((gx + 0.5) / 50.0, (gy + 0.5) / 50.0);
      double best = 1e9;
      for (const auto& t : targets) best = std::min(best, (probe - t).norm());
      worst = std::max(worst, best);
    }
  }
  CHECK(worst < 0.2);
}

TEST_CASE("episode replay reproduces every recorded stream bit-exactly") {
  synth::GeneratorConfig gen = desk_generator(3, 13);
  for (ad::Index i = 0; i < gen.episodes; ++i) {
    synth::Episode ep = synth::generate_episode(gen, i);
    CHECK(synth::verify_replay(ep).empty());
  }
}

TEST_CASE("episode files round-trip losslessly") {
  fs::path dir = temp_dir("vtp_episode_io");
  synth::GeneratorConfig gen = desk_generator(2, 17);
  synth::Episode ep = synth::generate_episode(gen, 0);
  synth::write_episode(dir / "ep.vtep", ep);
  synth::Episode back = synth::read_episode(dir / "ep.vtep");

  CHECK(back.task_id == ep.task_id);
  CHECK(back.seed == ep.seed);
  CHECK(back.success == ep.success);
  CHECK(back.start == ep.start);
  CHECK(back.target == ep.target);
  REQUIRE(back.length() == ep.length());
  for (ad::Index t = 0; t < ep.length(); ++t) {
    for (size_t v = 0; v < ep.frames[t].views.size(); ++v) {
      CHECK((back.frames[t].views[v] == ep.frames[t].views[v]).all());
    }
    CHECK((back.frames[t].tactile == ep.frames[t].tactile).all());
    CHECK((back.frames[t].proprio == ep.frames[t].proprio).all());
    CHECK((back.frames[t].action == ep.frames[t].action).all());
  }
  // a reread episode replays exactly like the original
  CHECK(synth::verify_replay(back).empty());
}

TEST_CASE("corrupted episode files are rejected with typed errors") {
  fs::path dir = temp_dir("vtp_episode_corrupt");
  synth::GeneratorConfig gen = desk_generator(1, 19);
  synth::Episode ep = synth::generate_episode(gen, 0);
  fs::path good = dir / "good.vtep";
  synth::write_episode(good, ep);

  // magic corruption
  {
    std::fstream f(good, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XX", 2);
  }
  CHECK_THROWS_WITH_AS(synth::read_episode(good), doctest::Contains("magic"), synth::IoError);

  // truncated payload against the declared frame count
  synth::write_episode(good, ep);
  auto full_size = fs::file_size(good);
  fs::resize_file(good, full_size - 64);
  CHECK_THROWS_WITH_AS(synth::read_episode(good), doctest::Contains("payload size mismatch"),
                       synth::IoError);

  CHECK_THROWS_AS(synth::read_episode(dir / "missing.vtep"), synth::IoError);
}

TEST_CASE("dataset directory writes a manifest consistent with the episodes") {
  fs::path dir = temp_dir("vtp_dataset");
  synth::GeneratorConfig gen = desk_generator(3, 23);
  auto episodes = synth::generate_dataset(gen);
  auto rows = synth::write_dataset(dir, episodes, 0x1234);
  CHECK(rows.size() == 3);
  auto parsed = synth::read_manifest(dir / "manifest.txt");
  REQUIRE(parsed.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(parsed[i].seed == episodes[i].seed);
    CHECK(parsed[i].length == episodes[i].length());
    CHECK(parsed[i].success == episodes[i].success);
  }
  auto back = synth::read_dataset(dir);
  CHECK(back.size() == 3);
  CHECK(back[1].seed == episodes[1].seed);
}
