// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "rosetta/edit_maps.hpp"
#include "rosetta/json_util.hpp"
#include "test_util.hpp"

namespace rosetta {
namespace {

using testing::TempDir;
using testing::error_kind_of;
using testing::random_values;
using testing::write_dump;

Map iota_map(int h, int w) {
  Map m({h, w});
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(i);
  return m;
}

Map hot_pixel(int h, int w, int row, int col) {
  Map m({h, w}, 0.0f);
  m.at(row, col) = 1.0f;
  return m;
}

std::pair<int, int> argmax(const Map& m) {
  const auto it = std::max_element(m.values.begin(), m.values.end());
  const auto i = static_cast<int>(it - m.values.begin());
  return {i / m.res.width, i % m.res.width};
}

TEST(Shift, OneStrideOnFourIsOneCell) {
  const Map m = iota_map(4, 4);
  const Map right = apply_shift(m, 1);
  const Map left = apply_shift(m, -1);
  for (int r = 0; r < 4; ++r) {
    EXPECT_EQ(right.at(r, 0), 0.0f);
    EXPECT_EQ(left.at(r, 3), 0.0f);
    for (int c = 1; c < 4; ++c) EXPECT_EQ(right.at(r, c), m.at(r, c - 1));
    for (int c = 0; c < 3; ++c) EXPECT_EQ(left.at(r, c), m.at(r, c + 1));
  }
  const Map down = apply_shift(m, 0, 1);
  for (int c = 0; c < 4; ++c) {
    EXPECT_EQ(down.at(0, c), 0.0f);
    for (int r = 1; r < 4; ++r) EXPECT_EQ(down.at(r, c), m.at(r - 1, c));
  }
}

TEST(Shift, StrideScalesWithMapSize) {
  EXPECT_EQ(argmax(apply_shift(hot_pixel(8, 8, 3, 1), 1)), std::make_pair(3, 3));
  EXPECT_EQ(argmax(apply_shift(hot_pixel(8, 8, 3, 5), -2)), std::make_pair(3, 1));
  EXPECT_EQ(argmax(apply_shift(hot_pixel(16, 16, 2, 2), 1, 1)), std::make_pair(6, 6));
  EXPECT_EQ(argmax(apply_shift(hot_pixel(4, 4, 0, 0), 3)), std::make_pair(0, 3));
  EXPECT_EQ(apply_shift(iota_map(4, 4), 0), iota_map(4, 4));
}

TEST(Shift, OutOfRange) {
  EXPECT_EQ(error_kind_of([] { apply_shift(iota_map(4, 4), 4); }), ErrorKind::ShiftOutOfRange);
  EXPECT_EQ(error_kind_of([] { apply_shift(iota_map(8, 8), 0, -4); }), ErrorKind::ShiftOutOfRange);
  EXPECT_EQ(error_kind_of([] { apply_shift(iota_map(8, 8), 3, 3); }), std::nullopt);
}

TEST(Zoom, RampDoublesAroundCenter) {
  Map ramp({4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) ramp.at(r, c) = static_cast<float>(c);
  const Map z = apply_zoom(ramp);
  const float expect[4] = {0.75f, 1.25f, 1.75f, 2.25f};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_FLOAT_EQ(z.at(r, c), expect[c]);
}

TEST(Zoom, HotPixelMatchesResizeCrop) {
  const Map m = hot_pixel(8, 8, 3, 4);
  const Map big = bilinear_resize(m, {16, 16});
  const Map z = apply_zoom(m);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_EQ(z.at(r, c), big.at(r + 4, c + 4));
  // The peak moves away from the center by a factor of two.
  EXPECT_EQ(argmax(z), std::make_pair(2, 4));
  EXPECT_EQ(apply_zoom(Map({6, 6}, 2.5f)), Map({6, 6}, 2.5f));
  EXPECT_EQ(error_kind_of([] { apply_zoom(Map({1, 4}, 1.0f)); }), ErrorKind::InvalidArgument);
}

TEST(CopyPaste, HalvesComeFromOppositeShifts) {
  const Map m = iota_map(4, 4);
  const Map out = apply_copy_paste(m, 1);
  for (int r = 0; r < 4; ++r) {
    const float a = static_cast<float>(4 * r + 1), b = static_cast<float>(4 * r + 2);
    EXPECT_EQ(out.at(r, 0), a);
    EXPECT_EQ(out.at(r, 1), b);
    EXPECT_EQ(out.at(r, 2), a);
    EXPECT_EQ(out.at(r, 3), b);
  }
  // A centered blob duplicates to both sides on an 8x8 map.
  Map blob({8, 8}, 0.0f);
  blob.at(4, 3) = blob.at(4, 4) = 1.0f;
  const Map twin = apply_copy_paste(blob, 1);
  EXPECT_EQ(twin.at(4, 1), 1.0f);
  EXPECT_EQ(twin.at(4, 6), 1.0f);
  EXPECT_EQ(twin.at(4, 3), 0.0f);
  EXPECT_EQ(twin.at(4, 4), 0.0f);
}

TEST(ConceptScale, SetMinAndScale) {
  EXPECT_EQ(apply_concept_scale(Map({1, 4}, {3, 1, 2, 5}), ScaleMode::set_min), Map({1, 4}, 1.0f));
  EXPECT_EQ(apply_concept_scale(Map({1, 3}, {0, 1, 3}), ScaleMode::scale, 2.0), Map({1, 3}, {0, 2, 6}));
  EXPECT_EQ(apply_concept_scale(Map({1, 3}, {1, 2, 4}), ScaleMode::scale, 3.0), Map({1, 3}, {1, 4, 10}));
  EXPECT_EQ(apply_concept_scale(Map({1, 3}, {1, 2, 4}), ScaleMode::scale, 1.0), Map({1, 3}, {1, 2, 4}));
  EXPECT_EQ(error_kind_of([] { apply_concept_scale(Map({1, 1}, 1.0f), ScaleMode::scale, 0.0); }),
            ErrorKind::InvalidArgument);
}

// Generator dump with a 3-channel 4x4 layer and a 2-channel 8x8 layer;
// the dictionary holds units (0, 0), (0, 2) and (1, 1).
struct Fixture {
  TempDir dir;
  DumpManifest gen;
  RosettaDictionary dict;

  Fixture() {
    gen = write_dump(dir / "gen", "gen", ModelKind::generative,
                     {{"g0", 3, 4, 4, Dtype::f32}, {"g1", 2, 8, 8, Dtype::f16}},
                     {random_values(3 * 48, 11), random_values(3 * 128, 12)}, 2);
    dict.generator_model = "gen";
    dict.discriminative_models = {"disc"};
    for (const UnitId& u : {UnitId{"gen", 0, 0}, UnitId{"gen", 0, 2}, UnitId{"gen", 1, 1}}) {
      RosettaTuple t;
      t.generator = u;
      t.matches["disc"] = {{"disc", 0, 0}, 0.5, {8, 8}};
      dict.concepts.push_back({static_cast<int>(dict.concepts.size()), {t}, 0});
    }
  }

  Map raw(int layer, int channel, std::int64_t instance = 1) const {
    return read_layer_batch(gen, layer, {instance, 1}).map_copy(0, channel);
  }

  EditSpec spec() const {
    EditSpec s;
    s.commands.push_back({false, {{"gen", 1, 1}}, EditOp::shift, 1, 0, 1.0});
    s.commands.push_back({false, {{"gen", 0, 0}}, EditOp::scale, 0, 0, 2.0});
    return s;
  }
};

TEST(BuildTargets, EmptySpecIsRawExtraction) {
  Fixture fx;
  const TargetMaps t = build_targets(fx.dict, fx.gen, 1, {});
  ASSERT_EQ(t.maps.size(), 3u);
  for (const auto& m : t.maps) {
    EXPECT_EQ(m.map, fx.raw(m.unit.layer, m.unit.channel));
    EXPECT_FALSE(m.op.has_value());
  }
  EXPECT_EQ(t.maps[2].layer_name, "g1");
  EXPECT_TRUE(build_targets(fx.dict, fx.gen, 1, {}, true).maps.empty());
}

TEST(BuildTargets, EditsTouchOnlyTheirUnits) {
  Fixture fx;
  const TargetMaps t = build_targets(fx.dict, fx.gen, 1, fx.spec());
  ASSERT_EQ(t.maps.size(), 3u);
  EXPECT_EQ(t.find({"gen", 0, 2})->map, fx.raw(0, 2));
  EXPECT_FALSE(t.find({"gen", 0, 2})->op.has_value());
  EXPECT_EQ(t.find({"gen", 0, 0})->map, apply_concept_scale(fx.raw(0, 0), ScaleMode::scale, 2.0));
  EXPECT_EQ(t.find({"gen", 1, 1})->map, apply_shift(fx.raw(1, 1), 1));
  EXPECT_EQ(t.find({"gen", 1, 1})->op, EditOp::shift);
  EXPECT_EQ(t.find({"gen", 0, 1}), nullptr);
  EXPECT_EQ(build_targets(fx.dict, fx.gen, 1, fx.spec(), true).maps.size(), 2u);
}

TEST(BuildTargets, AllTargetsEveryRosettaUnit) {
  Fixture fx;
  EditSpec s;
  s.commands.push_back({true, {}, EditOp::set_min, 0, 0, 1.0});
  const TargetMaps t = build_targets(fx.dict, fx.gen, 0, s, true);
  ASSERT_EQ(t.maps.size(), 3u);
  for (const auto& m : t.maps) EXPECT_EQ(m.map, apply_concept_scale(fx.raw(m.unit.layer, m.unit.channel, 0), ScaleMode::set_min));
}

TEST(BuildTargets, ArgmaxMovesWithShift) {
  TempDir dir;
  std::vector<float> v(2 * 64, 0.0f);
  v[64 + 2 * 8 + 2] = 5.0f;  // instance 1, (2, 2)
  const DumpManifest gen = write_dump(dir / "gen", "gen", ModelKind::generative, {{"g", 1, 8, 8, Dtype::f32}}, {v}, 2);
  RosettaDictionary dict;
  dict.generator_model = "gen";
  RosettaTuple tuple;
  tuple.generator = {"gen", 0, 0};
  dict.concepts.push_back({0, {tuple}, 0});
  EditSpec s;
  s.commands.push_back({false, {{"gen", 0, 0}}, EditOp::shift, 1, -1, 1.0});
  EXPECT_EQ(argmax(build_targets(dict, gen, 1, s).maps[0].map), std::make_pair(0, 4));
}

TEST(BuildTargets, Errors) {
  Fixture fx;
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 3, {}); }), ErrorKind::RangeOutOfBounds);
  RosettaDictionary other = fx.dict;
  other.generator_model = "other";
  EXPECT_EQ(error_kind_of([&] { build_targets(other, fx.gen, 0, {}); }), ErrorKind::ModelMismatch);

  auto with = [&](EditCommand c) {
    EditSpec s;
    s.commands.push_back(std::move(c));
    return s;
  };
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 0, with({false, {{"gen", 0, 1}}, EditOp::set_min})); }),
            ErrorKind::UnknownUnit);
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 0, with({false, {}, EditOp::set_min})); }),
            ErrorKind::InvalidSpec);
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 0, with({false, {{"gen", 0, 0}}, EditOp::scale, 0, 0, -1.0})); }),
            ErrorKind::InvalidSpec);
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 0, with({false, {{"gen", 0, 0}}, EditOp::copy_paste, 1, 1})); }),
            ErrorKind::InvalidSpec);
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 0, with({false, {{"gen", 0, 0}}, EditOp::zoom_in})); }),
            std::nullopt);
  // 4x4 units cannot move 4 cells.
  EXPECT_EQ(error_kind_of([&] { build_targets(fx.dict, fx.gen, 0, with({false, {{"gen", 0, 0}}, EditOp::shift, 4})); }),
            ErrorKind::ShiftOutOfRange);

  EditSpec overlap = fx.spec();
  overlap.commands.push_back({false, {{"gen", 0, 0}}, EditOp::set_min});
  EXPECT_EQ(error_kind_of([&] { validate_spec(overlap, fx.dict); }), ErrorKind::InvalidSpec);
  EditSpec all_and_more = fx.spec();
  all_and_more.commands.push_back({true, {}, EditOp::set_min});
  EXPECT_EQ(error_kind_of([&] { validate_spec(all_and_more, fx.dict); }), ErrorKind::InvalidSpec);
}

TEST(EditSpecJson, RoundTripAndRejects) {
  EditSpec s;
  s.init_latent = InitLatent::random;
  s.seed = 42;
  s.commands.push_back({false, {{"gen", 1, 1}, {"gen", 0, 2}}, EditOp::shift, -1, 2, 1.0});
  s.commands.push_back({false, {{"gen", 0, 0}}, EditOp::scale, 0, 0, 2.5});
  s.commands.push_back({false, {{"gen", 0, 3}}, EditOp::copy_paste, 1, 0, 1.0});
  EXPECT_EQ(edit_spec_from_json(to_json(s), "gen", "t"), s);

  const auto parse = [](const char* text) {
    return error_kind_of([&] { edit_spec_from_json(nlohmann::json::parse(text), "gen", "t"); });
  };
  EXPECT_EQ(parse(R"({"commands": [{"target": "all", "op": "set_min"}]})"), std::nullopt);
  EXPECT_EQ(parse(R"({"commands": [{"target": "all", "op": "explode"}]})"), ErrorKind::InvalidSpec);
  EXPECT_EQ(parse(R"({"commands": [{"target": "some", "op": "set_min"}]})"), ErrorKind::InvalidSpec);
  EXPECT_EQ(parse(R"({"commands": [{"target": "all", "op": "set_min", "angle": 3}]})"), ErrorKind::SchemaViolation);
  EXPECT_EQ(parse(R"({"init_latent": "noise", "commands": []})"), ErrorKind::InvalidSpec);
  EXPECT_EQ(parse(R"({"seed": 1})"), ErrorKind::SchemaViolation);
}

TEST(Targets, WriteReadRoundTrip) {
  Fixture fx;
  const TargetMaps t = build_targets(fx.dict, fx.gen, 1, fx.spec());
  write_targets(t, fx.gen, fx.dir / "targets", {{"tool", "rosetta"}});
  EXPECT_EQ(read_targets(fx.dir / "targets"), t);

  const DumpManifest mini = read_manifest(fx.dir / "targets");
  EXPECT_EQ(mini.instance_count, 1);
  ASSERT_EQ(mini.layers.size(), 2u);
  EXPECT_EQ(mini.layers[1].name, "g1");
  EXPECT_EQ(mini.layers[1].dtype, Dtype::f32);
  // Channels outside the targets carry the raw activations.
  EXPECT_EQ(read_layer_batch(mini, 0, {0, 1}).map_copy(0, 1), fx.raw(0, 1));

  const auto doc = json_util::read_file(fx.dir / "targets" / "targets_manifest.json");
  EXPECT_EQ(doc["source_model"], "gen");
  EXPECT_EQ(doc["source_instance"], 1);
  ASSERT_EQ(doc["units"].size(), 3u);
  EXPECT_EQ(doc["units"][0]["op"], "scale");
  EXPECT_TRUE(doc["units"][1]["op"].is_null());
  EXPECT_EQ(doc["units"][2]["dump_layer"], 1);
  EXPECT_EQ(doc["provenance"]["tool"], "rosetta");
}

}  // namespace
}  // namespace rosetta
