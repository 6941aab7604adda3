#include "gridloss/zip.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gridloss::loads {

namespace {

bool channel_ok(double z, double i, double p) {
    if (!std::isfinite(z) || !std::isfinite(i) || !std::isfinite(p)) return false;
    return std::abs(z + i + p - 1.0) <= ZipCoefficients::sum_tolerance;
}

}  // namespace

bool ZipCoefficients::valid() const {
    return channel_ok(z_p, i_p, p_p) && channel_ok(z_q, i_q, p_q);
}

void ZipCoefficients::validate() const {
    if (!channel_ok(z_p, i_p, p_p))
        throw std::invalid_argument(
            "active ZIP weights must sum to 1, got " + std::to_string(z_p + i_p + p_p));
    if (!channel_ok(z_q, i_q, p_q))
        throw std::invalid_argument(
            "reactive ZIP weights must sum to 1, got " + std::to_string(z_q + i_q + p_q));
}

double zip_eval(double s0, double z, double i, double p, double v) {
    return s0 * (z * v * v + i * v + p);
}

double zip_power_p(double p0, const ZipCoefficients& c, double v) {
    return zip_eval(p0, c.z_p, c.i_p, c.p_p, v);
}

double zip_power_q(double q0, const ZipCoefficients& c, double v) {
    return zip_eval(q0, c.z_q, c.i_q, c.p_q, v);
}

ZpCoefficients linearize_to_zp(const ZipCoefficients& c) {
    c.validate();
    return {c.z_p + c.i_p / 2.0, c.p_p + c.i_p / 2.0,
            c.z_q + c.i_q / 2.0, c.p_q + c.i_q / 2.0};
}

double zp_eval(double s0, double alpha, double beta, double v_sq) {
    return s0 * (alpha * v_sq + beta);
}

double zp_power_p(double p0, const ZpCoefficients& c, double v_sq) {
    return zp_eval(p0, c.alpha_p, c.beta_p, v_sq);
}

double zp_power_q(double q0, const ZpCoefficients& c, double v_sq) {
    return zp_eval(q0, c.alpha_q, c.beta_q, v_sq);
}

}  // namespace gridloss::loads
