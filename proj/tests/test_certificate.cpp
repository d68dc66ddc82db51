#include "gridcert/certificate.hpp"
#include "gridcert/lindyn.hpp"
#include "gridcert/simlab.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

using namespace gridcert;
namespace gt = gridcert::testing;

namespace {

const BusOperatingPoint kBus1{1.0, 1.0, 0.2886};

PowerFlowSolution flow_from(const Network& net, const VectorXd& theta, const VectorXd& V) {
    PowerFlowSolution f;
    f.theta = theta;
    f.V = V;
    const auto pq = power_balance(theta, V, net.B);
    f.P = pq.P;
    f.Q = pq.Q;
    return f;
}

}  // namespace

TEST(Gamma, ZeroPowerBus) { EXPECT_NEAR(gamma({1.0, 0.0, 0.0}, 0.1, 0.069), 14.492753623188406, 1e-12); }

TEST(Gamma, Bus1) { EXPECT_NEAR(gamma(kBus1, 0.10, 0.069), 14.760884417, 1e-8); }

TEST(Gamma, IncreasesWithQ) {
    // phi depends on Q, so gamma is not literally affine; it must still rise with Q here.
    double prev = -1e300;
    for (double Q = -0.5; Q <= 1.0; Q += 0.05) {
        const double g = gamma({1.0, 1.0, Q}, 0.1, 0.069);
        EXPECT_GT(g, prev);
        prev = g;
    }
}

TEST(Gamma, OutsideCapabilityPropagates) { EXPECT_THROW(gamma({1.0, 1.0, -15.0}, 0.1, 0.069), DomainError); }

TEST(GammaBlock, ZeroPowerBus) {
    const Matrix2d G = gamma_block({1.0, 0.0, 0.0}, 0.1, 0.069);
    EXPECT_EQ(G(0, 0), 0.0);
    EXPECT_EQ(G(0, 1), 0.0);
    EXPECT_EQ(G(1, 0), 0.0);
    EXPECT_NEAR(G(1, 1), 1.0 / 0.1, 1e-12);
}

TEST(GammaBlock, Bus1) { EXPECT_NEAR(gamma_block(kBus1, 0.10, 0.069)(1, 1), 9.9055256, 1e-6); }

TEST(GammaBlock, NonPositiveGammaThrows) {
    // V = 0.8, large load angle and X_d >> X_q: capability holds but gamma < 0
    const BusOperatingPoint rho{0.8, 4.73, -2.49};
    ASSERT_LT(gamma(rho, 1.0, 0.25), 0.0);
    EXPECT_THROW(gamma_block(rho, 1.0, 0.25), DomainError);
}

TEST(GammaBlock, EqualsSchurComplementOfReducedBlocks) {
    std::mt19937_64 rng(31);
    for (int s = 0; s < 200; ++s) {
        const double X_d = gt::log_uniform(rng, 0.05, 1), X_q = gt::log_uniform(rng, 0.05, 1);
        const BusOperatingPoint rho{gt::uniform(rng, 0.9, 1.1), gt::uniform(rng, -2, 2), gt::uniform(rng, -0.3, 1)};
        const double g = gamma(rho, X_d, X_q);
        if (g <= 0) continue;
        const auto h = reduced_hessian_blocks(rho, X_d, X_q);
        EXPECT_NEAR(h.dd, g, 1e-10 * std::abs(g));
        const Matrix2d schur = h.vv - h.dv.transpose() * h.dv / h.dd;
        EXPECT_LT(gt::rel_error(gamma_block(rho, X_d, X_q), schur), 1e-10);
    }
}

TEST(LoadGammaBlock, Examples) {
    EXPECT_NEAR(load_gamma_block(-0.5, 0.9931)(1, 1), -0.5070, 5e-5);
    EXPECT_EQ(load_gamma_block(0.0, 1.1), Matrix2d::Zero());
    const Matrix2d G = load_gamma_block(0.3, 1.1);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix2d>(G).eigenvalues().minCoeff(), 0.0);
    EXPECT_EQ(G(0, 0), 0.0);
    EXPECT_EQ(G(0, 1), 0.0);
}

TEST(NetworkMatrix, FlatTwoBus) {
    const auto net = make_network(2, {{0, 1, 1.0}});
    const MatrixXd L = network_matrix(VectorXd::Zero(2), VectorXd::Ones(2), net.B);
    MatrixXd expect(4, 4);
    expect << 1, 0, -1, 0, 0, 1, 0, -1, -1, 0, 1, 0, 0, -1, 0, 1;
    EXPECT_LT((L - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NetworkMatrix, RotationNullAndHessianOfNetworkEnergy) {
    std::mt19937_64 rng(2);
    for (int s = 0; s < 100; ++s) {
        const auto r = gt::random_system(rng);
        const auto n = static_cast<Index>(r.sys.n_bus());
        const MatrixXd L = network_matrix(r.flow.theta, r.flow.V, r.sys.net.B);
        EXPECT_LT(max_asymmetry(L), 1e-12);
        EXPECT_LT((L * rotation_vector(n)).cwiseAbs().maxCoeff(), 1e-10);
        const auto U0 = [&](const VectorXd& v) { return network_energy(v, r.sys.net.B); };
        const MatrixXd H = gt::fd_hessian(U0, interleave(r.flow.theta, r.flow.V));
        EXPECT_LT(gt::rel_error(L, H), 1e-8);
    }
}

TEST(Certify, SingleGeneratorBus) {
    const auto net = make_network(1, {});
    const auto flow = flow_from(net, VectorXd::Zero(1), VectorXd::Ones(1));
    const std::vector<DeviceParams> dev{VsgParams{0.2, 1.0, 0.1, 0.069}};
    const auto rep = certify(flow, dev, net);
    EXPECT_EQ(rep.verdict, Verdict::stable);
    ASSERT_TRUE(rep.gammas[0]);
    EXPECT_NEAR(*rep.gammas[0], 1 / 0.069, 1e-12);
    EXPECT_FALSE(rep.witness);
}

TEST(Certify, ThreeBusGridFormingAgreesWithEigen) {
    const auto flow = gt::three_bus_flow();
    for (bool forming : {true, false}) {
        const auto sys = gt::three_bus_system(flow, forming);
        const auto rep = certify(flow, sys.devices, sys.net);
        const auto eig = eig_verdict(sys, make_equilibrium(sys, flow));
        EXPECT_EQ(rep.verdict, eig.verdict) << "forming=" << forming;
        EXPECT_EQ(rep.gammas[1].has_value(), forming);
    }
}

TEST(Certify, NegativeGammaReportsBus) {
    const auto net = make_network(2, {{0, 1, 20.0}});
    const auto flow = flow_from(net, Vector2d(0.3, 0.0), Vector2d(0.8, 1.0));
    const std::vector<DeviceParams> dev{VsgParams{0.2, 1.0, 1.0, 0.25}, VsgParams{0.2, 1.0, 0.1, 0.069}};
    const auto rep = certify(flow, dev, net);
    EXPECT_EQ(rep.verdict, Verdict::unstable);
    ASSERT_TRUE(rep.violating_bus);
    EXPECT_EQ(*rep.violating_bus, 0u);
}

TEST(Certify, CapabilityErrorCarriesBus) {
    const auto net = make_network(2, {{0, 1, 20.0}});
    const auto flow = flow_from(net, Vector2d(0.3, 0.0), Vector2d(0.8, 1.0));
    const std::vector<DeviceParams> dev{VsgParams{0.2, 1.0, 0.1, 0.069}, VsgParams{0.2, 1.0, 1.0, 1.0}};
    // bus 0 has Q = -2.49 at V = 0.8: inside capability for X_q = 0.069, outside for X_q = 1
    const std::vector<DeviceParams> bad{VsgParams{0.2, 1.0, 1.0, 1.0}, VsgParams{0.2, 1.0, 0.1, 0.069}};
    EXPECT_NO_THROW(certify(flow, dev, net));
    try {
        (void)certify(flow, bad, net);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        ASSERT_TRUE(e.bus());
        EXPECT_EQ(*e.bus(), 0u);
    }
}

TEST(Certify, SizeMismatchRejected) {
    const auto net = make_network(2, {{0, 1, 1.0}});
    const auto flow = flow_from(net, VectorXd::Zero(2), VectorXd::Ones(2));
    const std::vector<DeviceParams> dev{VsgParams{0.2, 1.0, 0.1, 0.069}};
    EXPECT_THROW(certify(flow, dev, net), std::invalid_argument);
}

TEST(Certify, InvariantsAtRandomEquilibria) {
    std::mt19937_64 rng(17);
    int checked = 0;
    for (int s = 0; s < 300; ++s) {
        const auto r = gt::random_system(rng);
        const auto rep = certify(r.flow, r.sys.devices, r.sys.net);
        if (rep.M_cond.size() == 0) continue;  // gamma condition failed first
        ++checked;
        const auto n = static_cast<Index>(r.sys.n_bus());
        EXPECT_LT(max_asymmetry(rep.M_cond), 1e-12);
        EXPECT_LT((rep.M_cond * rotation_vector(n)).cwiseAbs().maxCoeff(), 1e-10);

        // uniform phase shift
        PowerFlowSolution shifted = r.flow;
        shifted.theta.array() += gt::uniform(rng, -3, 3);
        const auto rep2 = certify(shifted, r.sys.devices, r.sys.net);
        if (gt::certificate_margin(rep) > 10) EXPECT_EQ(rep.verdict, rep2.verdict);
        EXPECT_NEAR(rep.min_eig, rep2.min_eig, 1e-9 * std::max(1.0, std::abs(rep.min_eig)));

        // swapping dynamic models at fixed reactances
        auto swapped = r.sys.devices;
        for (auto& d : swapped) d = gt::swap_kind(rng, d, static_cast<DeviceKind>(s % 3));
        EXPECT_EQ(certify(r.flow, swapped, r.sys.net).verdict, rep.verdict);

        if (rep.verdict == Verdict::unstable) {
            ASSERT_TRUE(rep.witness);
            const VectorXd& w = *rep.witness;
            EXPECT_NEAR(w.norm(), 1.0, 1e-10);
            EXPECT_NEAR(w.dot(rotation_vector(n)), 0.0, 1e-10);
            EXPECT_LT(w.dot(rep.M_cond * w), 0.0);
        }
    }
    EXPECT_GT(checked, 50);
}
