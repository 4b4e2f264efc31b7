#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "functa/archive.hpp"
#include "functa/data.hpp"
#include "functa/error.hpp"
#include "oracles.hpp"

namespace {

namespace data = functa::data;
using functa::ad::Tensor;
using functa::testing::random_tensor;

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "functa_data_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Grid, TwoByTwoCellCentres) {
  const auto g = data::grid_2d(2, 2);
  Tensor expected(4, 2);
  expected << 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75;
  EXPECT_EQ(g.coords, expected);
}

TEST(Grid, SinglePixel) {
  const auto g = data::grid_2d(1, 1);
  EXPECT_EQ(g.coords, (Tensor(1, 2) << 0.5, 0.5).finished());
}

TEST(Grid, CubeSpacingAndSymmetry) {
  const auto g = data::grid_3d(64);
  ASSERT_EQ(g.size(), 64 * 64 * 64);
  EXPECT_DOUBLE_EQ(g.coords(0, 2), 1.0 / 128.0);
  EXPECT_DOUBLE_EQ(g.coords(1, 2) - g.coords(0, 2), 1.0 / 64.0);
  for (int a = 0; a < 3; ++a) {
    EXPECT_DOUBLE_EQ(g.coords.col(a).minCoeff() + g.coords.col(a).maxCoeff(), 1.0);
    EXPECT_GT(g.coords.col(a).minCoeff(), 0.0);
    EXPECT_LT(g.coords.col(a).maxCoeff(), 1.0);
  }
}

TEST(Grid, RectangularOrderIsRowMajor) {
  const auto g = data::grid_2d(3, 5);
  EXPECT_DOUBLE_EQ(g.coords(1, 1), 0.3);  // second column of the first row
  EXPECT_DOUBLE_EQ(g.coords(5, 0), 0.5);  // first pixel of the second row
  EXPECT_THROW(data::grid_2d(0, 3), functa::ContractViolation);
}

TEST(Sphere, PolesAndEquator) {
  const double pi = std::numbers::pi;
  const auto pole = data::sphere_coords({pi / 2}, {0.0, 1.0, 2.5});
  for (int r = 0; r < 3; ++r) {
    EXPECT_NEAR(pole.coords(r, 0), 0.0, 1e-15);
    EXPECT_NEAR(pole.coords(r, 1), 0.0, 1e-15);
    EXPECT_EQ(pole.coords(r, 2), 1.0);
  }
  const auto eq = data::sphere_coords({0.0}, {0.0});
  EXPECT_EQ(eq.coords, (Tensor(1, 3) << 1.0, 0.0, 0.0).finished());
}

TEST(Sphere, UnitNormsAndSpacing) {
  const auto lat = data::latitudes(181);
  const auto lon = data::longitudes(360);
  EXPECT_DOUBLE_EQ(lat.front(), std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(lat.back(), -std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(lon.front(), 0.0);
  EXPECT_NEAR(lon.back(), 2 * std::numbers::pi * 359 / 360, 1e-15);
  const auto g = data::sphere_coords(lat, lon);
  EXPECT_LT((g.coords.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Blob, TinySigmaLightsOnePixel) {
  const Tensor img = data::blob_image(5, 5, {0.5, 0.5}, 1e-3, 1.0);
  EXPECT_EQ(img(12, 0), 1.0);
  EXPECT_EQ(img.sum(), 1.0);
}

TEST(Voxels, UnitScaleIsIdentity) {
  data::VoxelShape s{data::ShapeKind::kEllipsoid, {0.5, 0.45, 0.55}, {0.3, 0.2, 0.25}};
  EXPECT_EQ(data::voxelize(s, 16), data::voxelize(s, 16, Eigen::Vector3d::Ones()));
  EXPECT_NE(data::voxelize(s, 16), data::voxelize(s, 16, Eigen::Vector3d(1.2, 1.0, 1.0)));
}

TEST(Voxels, OccupancyMatchesPointwiseOracle) {
  data::VoxelShape s{data::ShapeKind::kBox, {0.5, 0.5, 0.5}, {0.2, 0.3, 0.1}};
  const Tensor occ = data::voxelize(s, 8, Eigen::Vector3d(1.1, 0.9, 1.25));
  int r = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k, ++r) {
        const double x = (i + 0.5) / 8, y = (j + 0.5) / 8, z = (k + 0.5) / 8;
        const bool in = std::abs(x - 0.5) <= 0.22 && std::abs(y - 0.5) <= 0.27 && std::abs(z - 0.5) <= 0.125;
        EXPECT_EQ(occ(r, 0), in ? 1.0 : 0.0);
      }
}

TEST(Scenes, ClosedFormCompositingMatchesRenderer) {
  functa::render::RenderConfig cfg;
  cfg.height = cfg.width = 12;
  cfg.num_points_per_ray = 24;
  cfg.near = 1.25;
  cfg.far = 2.75;
  for (unsigned seed = 1; seed <= 6; ++seed) {
    data::Sphere s;
    const Tensor v = random_tensor(1, 7, seed);
    s.center = Eigen::Vector3d(v(0, 0), v(0, 1), v(0, 2)) * 0.15;
    s.radius = 0.45 + 0.1 * v(0, 3);
    s.color = (Eigen::Vector3d(v(0, 4), v(0, 5), v(0, 6)).array() * 0.4 + 0.5).matrix();
    s.inside_raw = seed % 2 ? 8.0 : 3.0;
    cfg.white_background = seed % 3 != 0;
    const Tensor e = random_tensor(1, 3, seed + 50);
    const auto pose = functa::render::look_at(Eigen::Vector3d(e(0, 0), e(0, 1), e(0, 2)).normalized() * 2.0,
                                              Eigen::Vector3d::Zero(), 14.0);
    const Tensor a = functa::render::render_image(data::sphere_scene(s), pose, cfg);
    const Tensor b = data::render_sphere_closed_form(s, pose, cfg);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-4);
    EXPECT_GT((a.array() - 1.0).abs().maxCoeff(), 0.1);  // the sphere is visible
  }
}

TEST(Synthetic, DeterministicAndIndependentOfCount) {
  for (auto kind : {data::SyntheticKind::kBlobs, data::SyntheticKind::kVoxels, data::SyntheticKind::kScenes,
                    data::SyntheticKind::kSphereFields}) {
    data::SyntheticSpec spec;
    spec.kind = kind;
    spec.resolution = 8;
    spec.views = 2;
    spec.seed = 5;
    spec.count = 3;
    const auto a = data::make_synthetic(spec);
    spec.count = 6;
    const auto b = data::make_synthetic(spec);
    for (int i = 0; i < 3; ++i) {
      EXPECT_EQ(a.items[i].targets, b.items[i].targets);
      EXPECT_EQ(a.items[i].label, b.items[i].label);
      ASSERT_EQ(a.items[i].views.size(), b.items[i].views.size());
      for (std::size_t v = 0; v < a.items[i].views.size(); ++v) {
        EXPECT_EQ(a.items[i].views[v].image, b.items[i].views[v].image);
      }
    }
    const bool same = kind == data::SyntheticKind::kScenes
                          ? a.items[0].views[0].image == a.items[1].views[0].image
                          : a.items[0].targets == a.items[1].targets;
    EXPECT_FALSE(same);
  }
}

TEST(Synthetic, TargetsInUnitRangeAndAligned) {
  for (auto kind : {data::SyntheticKind::kBlobs, data::SyntheticKind::kVoxels, data::SyntheticKind::kSphereFields}) {
    data::SyntheticSpec spec{kind, 10, 12, 3};
    const auto ds = data::make_synthetic(spec);
    for (const auto& item : ds.items) {
      EXPECT_EQ(item.targets.rows(), ds.grid.size());
      EXPECT_GE(item.targets.minCoeff(), 0.0);
      EXPECT_LE(item.targets.maxCoeff(), 1.0);
    }
  }
}

TEST(Synthetic, BlobLabelIsQuadrantOfBrightestPixel) {
  const auto ds = data::make_synthetic({data::SyntheticKind::kBlobs, 40, 32, 9});
  for (const auto& item : ds.items) {
    Eigen::Index idx = 0;
    item.targets.col(0).maxCoeff(&idx);
    const int row = static_cast<int>(idx / 32), col = static_cast<int>(idx % 32);
    EXPECT_EQ(item.label, (row >= 16 ? 2 : 0) + (col >= 16 ? 1 : 0));
  }
}

TEST(Synthetic, ParseKindRoundTrip) {
  for (auto kind : {data::SyntheticKind::kBlobs, data::SyntheticKind::kVoxels, data::SyntheticKind::kScenes,
                    data::SyntheticKind::kSphereFields}) {
    EXPECT_EQ(data::parse_kind(data::kind_name(kind)), kind);
  }
  EXPECT_THROW(data::parse_kind("celeba"), functa::ConfigError);
}

TEST(ImageIo, RoundTripWithin8BitQuantisation) {
  for (int channels : {1, 3}) {
    data::Image img{7, 5, channels, (random_tensor(35, channels, 3).array() * 0.5 + 0.5).matrix()};
    const auto path = temp_path(channels == 1 ? "rt.pgm" : "rt.ppm");
    data::save_image(path, img);
    const auto back = data::load_image(path);
    EXPECT_EQ(back.height, 7);
    EXPECT_EQ(back.width, 5);
    EXPECT_EQ(back.channels, channels);
    EXPECT_LE((back.pixels - img.pixels).cwiseAbs().maxCoeff(), 1.0 / 255.0);
    EXPECT_EQ(std::filesystem::file_size(path), (channels == 1 ? 11u : 11u) + 35u * channels);
  }
}

TEST(ImageIo, HeaderWithCommentParsed) {
  const auto path = temp_path("comment.ppm");
  std::string bytes = "P6\n# a comment\n2 1\n255\n";
  bytes += std::string("\xff\x00\x80\x00\x00\xff", 6);
  functa::io::write_file(path, bytes);
  const auto img = data::load_image(path);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 1);
  EXPECT_EQ(img.pixels(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(img.pixels(0, 2), 128.0 / 255.0);
  EXPECT_EQ(img.pixels(1, 2), 1.0);
}

TEST(ImageIo, MalformedAndTruncatedFiles) {
  const auto path = temp_path("bad.pgm");
  functa::io::write_file(path, "P2\n2 2\n255\n");
  EXPECT_THROW(data::load_image(path), functa::FormatError);
  functa::io::write_file(path, "P5\n2 x\n255\n");
  EXPECT_THROW(data::load_image(path), functa::FormatError);
  functa::io::write_file(path, std::string("P5\n2 2\n255\n\x01\x02", 13));
  EXPECT_THROW(data::load_image(path), functa::TruncatedFile);
}

TEST(VoxelIo, PayloadSizeAndRoundTrip) {
  const Tensor occ = data::voxelize({}, 64);
  const auto path = temp_path("shape.vox");
  data::save_voxels(path, occ, 64);
  const std::string header = "FUNCTA-VOXELS 64\n";
  EXPECT_EQ(std::filesystem::file_size(path), header.size() + 262144u);
  int r = 0;
  EXPECT_EQ(data::load_voxels(path, &r), occ);
  EXPECT_EQ(r, 64);
  std::filesystem::resize_file(path, 1000);
  EXPECT_THROW(data::load_voxels(path), functa::TruncatedFile);
}

TEST(PoseIo, RoundTrip) {
  std::vector<functa::render::CameraPose> poses{
      functa::render::look_at({2, 0.5, 1}, {0, 0, 0}, 17.5),
      functa::render::look_at({-1, 1, -1.5}, {0, 0.1, 0}, 9.0)};
  const auto path = temp_path("poses.txt");
  data::save_poses(path, poses);
  const auto back = data::load_poses(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].matrix, poses[i].matrix);
    EXPECT_EQ(back[i].focal, poses[i].focal);
  }
  functa::io::write_file(path, "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n");
  EXPECT_THROW(data::load_poses(path), functa::FormatError);
}

}  // namespace
