#pragma once

#include <array>

namespace gridloss::loads {

// Static ZIP load model: demand at voltage v (p.u.) is
//   S(v) = S0 * (Z*v^2 + I*v + P)
// with separate weight triples for the active and reactive channels.
// Weights of each channel must sum to one so that S(1) = S0.
struct ZipCoefficients {
    double z_p = 0.0, i_p = 0.0, p_p = 1.0;
    double z_q = 0.0, i_q = 0.0, p_q = 1.0;

    static constexpr double sum_tolerance = 1e-9;

    static ZipCoefficients constant_power() { return {}; }
    static ZipCoefficients uniform(double z, double i, double p) {
        return {z, i, p, z, i, p};
    }
    static ZipCoefficients from_array(const std::array<double, 6>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5]};
    }

    bool valid() const;
    // Throws std::invalid_argument naming the offending channel.
    void validate() const;
};

// Convex surrogate of ZIP used inside the conic constraints: demand is
// affine in the squared voltage,  S(v_sq) = S0 * (alpha*v_sq + beta).
// The constant-current term is split evenly between the two halves, which
// matches ZIP to first order around v = 1.
struct ZpCoefficients {
    double alpha_p = 0.0, beta_p = 1.0;
    double alpha_q = 0.0, beta_q = 1.0;
};

// Single-channel evaluations; callers pick the (Z,I,P) triple per channel.
double zip_eval(double s0, double z, double i, double p, double v);

double zip_power_p(double p0, const ZipCoefficients& c, double v);
double zip_power_q(double q0, const ZipCoefficients& c, double v);

ZpCoefficients linearize_to_zp(const ZipCoefficients& c);

double zp_eval(double s0, double alpha, double beta, double v_sq);
double zp_power_p(double p0, const ZpCoefficients& c, double v_sq);
double zp_power_q(double q0, const ZpCoefficients& c, double v_sq);

}  // namespace gridloss::loads
