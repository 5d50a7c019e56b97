#include "lhcalib/kabsch.hpp"
#include "lhcalib/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lhcalib;

namespace {

std::vector<Vec3> cloud(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(g(rng), g(rng), 0.5 * g(rng));
  return pts;
}

std::vector<Vec3> moved(const std::vector<Vec3>& pts, const Mat3& r, const Vec3& t) {
  std::vector<Vec3> out;
  for (const auto& p : pts) out.push_back(r * p + t);
  return out;
}

}  // namespace

TEST(Kabsch, RecoversRotationAboutZPlusShift) {
  std::mt19937_64 rng(1);
  const auto src = cloud(rng, 12);
  const Mat3 r = Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()).toRotationMatrix();
  const auto dst = moved(src, r, {1, 0, 0});
  const std::vector<double> w(src.size(), 1.0);
  const RigidFit fit = weighted_kabsch(src, dst, w);
  EXPECT_TRUE(fit.rotation.matrix().isApprox(r, 1e-12));
  EXPECT_TRUE(fit.translation.isApprox(Vec3(1, 0, 0), 1e-12));
  EXPECT_LT(fit.weighted_rmsd, 1e-12);
  EXPECT_GT(fit.conditioning, 0.0);
}

TEST(Kabsch, ResultIsProperRotation) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int k = 0; k < 30; ++k) {
    const auto src = cloud(rng, 20);
    const Pose6DoF p = fixtures::random_pose(rng);
    auto dst = moved(src, p.rotation().matrix(), p.position());
    for (auto& q : dst) q += Vec3(noise(rng), noise(rng), noise(rng));
    const RigidFit fit = weighted_kabsch(src, dst, std::vector<double>(src.size(), 1.0));
    const Mat3& r = fit.rotation.matrix();
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Kabsch, ReflectionIsCorrected) {
  std::mt19937_64 rng(3);
  const auto src = cloud(rng, 10);
  auto dst = src;
  for (auto& q : dst) q.z() = -q.z();  // a mirror, not a rotation
  const RigidFit fit = weighted_kabsch(src, dst, std::vector<double>(src.size(), 1.0));
  EXPECT_NEAR(fit.rotation.matrix().determinant(), 1.0, 1e-12);
}

TEST(Kabsch, WeightScalingInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const auto src = cloud(rng, 15);
  auto dst = moved(src, euler_to_rotation(0.3, 0.2, -0.1).matrix(), {0.5, 1, 2});
  for (auto& q : dst) q += Vec3(u(rng), u(rng), u(rng)) * 0.02;
  std::vector<double> w;
  for (std::size_t i = 0; i < src.size(); ++i) w.push_back(u(rng));
  const RigidFit a = weighted_kabsch(src, dst, w);
  for (double c : {1e-3, 7.0, 1e4}) {
    std::vector<double> wc = w;
    for (auto& x : wc) x *= c;
    const RigidFit b = weighted_kabsch(src, dst, wc);
    EXPECT_LT((a.rotation.matrix() - b.rotation.matrix()).norm(), 1e-10);
    EXPECT_LT((a.translation - b.translation).norm(), 1e-10);
    EXPECT_NEAR(a.weighted_rmsd, b.weighted_rmsd, 1e-12);
  }
}

TEST(Kabsch, OptimalUnderPerturbation) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  const auto src = cloud(rng, 25);
  auto dst = moved(src, euler_to_rotation(-0.4, 0.1, 0.7).matrix(), {2, -1, 0.3});
  for (auto& q : dst) q += 0.03 * Vec3(g(rng), g(rng), g(rng));
  std::vector<double> w;
  for (std::size_t i = 0; i < src.size(); ++i) w.push_back(0.5 + std::abs(g(rng)));
  const RigidFit fit = weighted_kabsch(src, dst, w);
  const double best = weighted_alignment_cost(src, dst, w, fit.rotation.matrix(), fit.translation);
  for (int k = 0; k < 200; ++k) {
    const Vec3 dr = 1e-3 * Vec3(g(rng), g(rng), g(rng));
    const Mat3 r = Eigen::AngleAxisd(dr.norm(), dr.normalized()).toRotationMatrix() * fit.rotation.matrix();
    const Vec3 t = fit.translation + 1e-3 * Vec3(g(rng), g(rng), g(rng));
    EXPECT_GE(weighted_alignment_cost(src, dst, w, r, t), best);
  }
}

TEST(Kabsch, ZeroWeightPointIsIgnored) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.01);
  const auto src = cloud(rng, 10);
  auto dst = moved(src, euler_to_rotation(0.2, 0.0, 0.1).matrix(), {0, 1, 0});
  for (auto& q : dst) q += Vec3(g(rng), g(rng), g(rng));
  std::vector<double> w(src.size(), 1.0);
  dst[4] += Vec3(1.0, 0, 0);
  w[4] = 0.0;
  const RigidFit all = weighted_kabsch(src, dst, w);
  std::vector<Vec3> s2 = src, d2 = dst;
  s2.erase(s2.begin() + 4);
  d2.erase(d2.begin() + 4);
  const RigidFit subset = weighted_kabsch(s2, d2, std::vector<double>(s2.size(), 1.0));
  EXPECT_LT((all.rotation.matrix() - subset.rotation.matrix()).norm(), 1e-12);
  EXPECT_LT((all.translation - subset.translation).norm(), 1e-12);
  EXPECT_NEAR(all.weighted_rmsd, subset.weighted_rmsd, 1e-12);
}

TEST(Kabsch, InputValidation) {
  const std::vector<Vec3> three{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(weighted_kabsch(two, two, std::vector<double>{1, 1}), Error);
  EXPECT_THROW(weighted_kabsch(three, two, std::vector<double>{1, 1, 1}), Error);
  EXPECT_THROW(weighted_kabsch(three, three, std::vector<double>{1, -1, 1}), Error);
  EXPECT_THROW(weighted_kabsch(three, three, std::vector<double>{1, 1, 0}), Error);
  EXPECT_THROW(weighted_kabsch(three, three, std::vector<double>{1, 1, std::nan("")}), Error);
}

TEST(Kabsch, CollinearIsDegenerate) {
  std::vector<Vec3> line;
  for (int i = 0; i < 10; ++i) line.emplace_back(0.1 * i, 0.2 * i, 0.0);
  try {
    weighted_kabsch(line, line, std::vector<double>(line.size(), 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}
