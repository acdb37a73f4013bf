#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <random>
#include <vector>

#include "satbh/csv.hpp"
#include "satbh/rng.hpp"
#include "satbh/scenario.hpp"

namespace satbh {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEarthRadiusM = 6378.137e3;
inline constexpr double kGeoRadiusM = 42164.0e3;

inline double deg2rad(double d) { return d * kPi / 180.0; }

struct UserGeometry {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    double rx_gain = 1.0;      // linear
    double slant_m = 0.0;      // satellite-user distance
};

// Distance from a GEO satellite at longitude orbit_lon to a ground point.
inline double slant_distance(double lat_deg, double lon_deg, double orbit_lon_deg) {
    double cos_psi = std::cos(deg2rad(lat_deg)) * std::cos(deg2rad(lon_deg - orbit_lon_deg));
    return std::sqrt(kEarthRadiusM * kEarthRadiusM + kGeoRadiusM * kGeoRadiusM -
                     2.0 * kEarthRadiusM * kGeoRadiusM * cos_psi);
}

// Free-space attenuation (lambda / 4 pi d)^2.
inline double path_loss(double d_m, double lambda_m) {
    if (d_m <= 0 || lambda_m <= 0) throw ContractViolation("path_loss: d, lambda must be > 0");
    double r = lambda_m / (4.0 * kPi * d_m);
    return r * r;
}

// Great-circle angular offset (degrees) between two lat/lon points.
inline double great_circle_deg(double lat1, double lon1, double lat2, double lon2) {
    double a = deg2rad(lat1), b = deg2rad(lat2);
    double c = std::sin(a) * std::sin(b) +
               std::cos(a) * std::cos(b) * std::cos(deg2rad(lon2 - lon1));
    return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / kPi;
}

// Beam radiation pattern: either a Gaussian-rolloff parametric model or a
// per-beam sampled gain grid ingested from CSV (beam,lat,lon,gain_db).
class BeamPattern {
public:
    static BeamPattern parametric(std::vector<std::pair<double, double>> boresights,
                                  double peak_gain, double rolloff_per_deg2) {
        BeamPattern p;
        p.parametric_ = true;
        p.boresights_ = std::move(boresights);
        p.peak_gain_ = peak_gain;
        p.rolloff_ = rolloff_per_deg2;
        return p;
    }

    static BeamPattern from_grid_csv(const std::string& path) {
        auto t = csv::read_file(path);
        int cb = t.col("beam"), cla = t.col("lat"), clo = t.col("lon"), cg = t.col("gain_db");
        BeamPattern p;
        p.parametric_ = false;
        std::map<int, std::map<std::pair<double, double>, double>> samples;
        for (const auto& row : t.rows) {
            int n = std::stoi(row[cb]);
            samples[n][{std::stod(row[cla]), std::stod(row[clo])}] =
                db_to_linear(std::stod(row[cg]));
        }
        for (auto& [n, pts] : samples) {
            Grid g;
            for (const auto& [ll, gain] : pts) {
                if (g.lats.empty() || g.lats.back() != ll.first) g.lats.push_back(ll.first);
            }
            for (const auto& [ll, gain] : pts)
                if (ll.first == g.lats.front()) g.lons.push_back(ll.second);
            g.gain = RMat::Zero(g.lats.size(), g.lons.size());
            for (const auto& [ll, gain] : pts) {
                auto it_la = std::lower_bound(g.lats.begin(), g.lats.end(), ll.first);
                auto it_lo = std::lower_bound(g.lons.begin(), g.lons.end(), ll.second);
                if (it_la == g.lats.end() || it_lo == g.lons.end())
                    throw ContractViolation("beam pattern grid: not rectangular");
                g.gain(it_la - g.lats.begin(), it_lo - g.lons.begin()) = gain;
            }
            p.grids_.push_back(std::move(g));
        }
        return p;
    }

    int n_beams() const {
        return parametric_ ? static_cast<int>(boresights_.size())
                           : static_cast<int>(grids_.size());
    }

    double gain(int n, double lat_deg, double lon_deg) const {
        if (n < 0 || n >= n_beams()) throw ContractViolation("beam_gain: beam index");
        if (parametric_) {
            double ang = great_circle_deg(boresights_[n].first, boresights_[n].second,
                                          lat_deg, lon_deg);
            return peak_gain_ * std::exp(-rolloff_ * ang * ang);
        }
        return grids_[n].interpolate(lat_deg, lon_deg);
    }

private:
    struct Grid {
        std::vector<double> lats, lons;  // sorted axes
        RMat gain;

        double interpolate(double lat, double lon) const {
            auto locate = [](const std::vector<double>& ax, double v) {
                if (v < ax.front() || v > ax.back())
                    throw ContractViolation("beam_gain: location outside grid");
                std::size_t i = std::upper_bound(ax.begin(), ax.end(), v) - ax.begin();
                if (i == 0) i = 1;
                if (i == ax.size()) i = ax.size() - 1;
                double f = (ax[i] == ax[i - 1]) ? 0.0 : (v - ax[i - 1]) / (ax[i] - ax[i - 1]);
                return std::pair<std::size_t, double>{i - 1, f};
            };
            auto [ia, fa] = locate(lats, lat);
            auto [io, fo] = locate(lons, lon);
            return (1 - fa) * (1 - fo) * gain(ia, io) + (1 - fa) * fo * gain(ia, io + 1) +
                   fa * (1 - fo) * gain(ia + 1, io) + fa * fo * gain(ia + 1, io + 1);
        }
    };

    bool parametric_ = true;
    std::vector<std::pair<double, double>> boresights_;
    double peak_gain_ = 1.0;
    double rolloff_ = 0.0;
    std::vector<Grid> grids_;
};

// AR(1)-style random-walk state for phase noise and NLoS fading:
// x[t+1] = (1 - zeta) x[t] + zeta * innovation.
struct RandomWalkState {
    double phi_geo = 0.0;   // shared satellite phase noise
    RVec phi_user;          // per-user ground phase noise
    CMat alpha;             // N x M complex NLoS fading
    double zeta = 0.05;
    double var_geo = 0.0;   // innovation variances
    double var_user = 0.0;
    double var_xi = 1.0;
};

inline std::complex<double> complex_gaussian(std::mt19937_64& rng, double variance) {
    std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
    double re = nd(rng);
    double im = nd(rng);
    return {re, im};
}

inline RandomWalkState step_random_walk(const RandomWalkState& s, std::mt19937_64& rng) {
    if (s.zeta < 0 || s.zeta > 1) throw ContractViolation("random walk: zeta outside [0,1]");
    RandomWalkState out = s;
    std::normal_distribution<double> d_geo(0.0, std::sqrt(s.var_geo));
    out.phi_geo = (1.0 - s.zeta) * s.phi_geo + s.zeta * d_geo(rng);
    std::normal_distribution<double> d_user(0.0, std::sqrt(s.var_user));
    for (int m = 0; m < s.phi_user.size(); ++m)
        out.phi_user(m) = (1.0 - s.zeta) * s.phi_user(m) + s.zeta * d_user(rng);
    for (int m = 0; m < s.alpha.cols(); ++m)
        for (int n = 0; n < s.alpha.rows(); ++n)
            out.alpha(n, m) =
                (1.0 - s.zeta) * s.alpha(n, m) + s.zeta * complex_gaussian(rng, s.var_xi);
    return out;
}

struct ChannelParams {
    double rician_factor = 10.0;     // L, linear
    double wavelength_m = 0.015;
    double zeta = 0.05;
    double var_geo = 0.0;
    double var_user = 0.0;
    double var_xi = 1.0;
    // The free-space term enters as a multiplicative attenuation by default;
    // `divide` reproduces the literal G/P_loss reading (amplifying).
    bool divide_by_path_loss = false;
};

struct ChannelRealization {
    std::vector<CMat> h;  // T entries of N x M
    std::uint64_t seed = 0;
    double rician_factor = 0.0;
    double wavelength_m = 0.0;
};

// One slot of the Rician channel: deterministic given the walk state.
inline CMat sample_channel_slot(const std::vector<UserGeometry>& geom,
                                const BeamPattern& pattern, const RandomWalkState& state,
                                const ChannelParams& par) {
    const int n_beams = pattern.n_beams();
    const int n_users = static_cast<int>(geom.size());
    const double L = par.rician_factor;
    const double los_w = std::sqrt(L / (L + 1.0));
    const double nlos_w = std::sqrt(1.0 / (L + 1.0));
    CMat H(n_beams, n_users);
    for (int m = 0; m < n_users; ++m) {
        const auto& u = geom[m];
        double att = path_loss(u.slant_m, par.wavelength_m);
        if (par.divide_by_path_loss) att = 1.0 / att;
        double amp = std::sqrt(u.rx_gain * att);
        double phase = -(2.0 * kPi * u.slant_m / par.wavelength_m + state.phi_geo +
                         state.phi_user(m));
        std::complex<double> rot = std::polar(1.0, phase);
        for (int n = 0; n < n_beams; ++n) {
            // both the direct and the scattered component pass through the
            // same antenna, so the beam gain scales the whole mixture
            double b = pattern.gain(n, u.lat_deg, u.lon_deg);
            H(n, m) = rot * amp * b * (los_w + nlos_w * state.alpha(n, m));
        }
    }
    return H;
}

// Full window: initialize the walk, then iterate T-1 steps, sampling each slot.
inline ChannelRealization generate_realization(const Scenario& sc,
                                               const std::vector<UserGeometry>& geom,
                                               const BeamPattern& pattern,
                                               const ChannelParams& par,
                                               std::uint64_t seed) {
    if (static_cast<int>(geom.size()) != sc.n_users)
        throw ContractViolation("channel: geometry size != n_users");
    if (pattern.n_beams() != sc.n_beams)
        throw ContractViolation("channel: pattern beams != n_beams");
    auto rng = make_stream(seed, "channel");

    RandomWalkState st;
    st.zeta = par.zeta;
    st.var_geo = par.var_geo;
    st.var_user = par.var_user;
    st.var_xi = par.var_xi;
    std::normal_distribution<double> d_geo(0.0, std::sqrt(par.var_geo));
    st.phi_geo = d_geo(rng);
    st.phi_user = RVec(sc.n_users);
    std::normal_distribution<double> d_user(0.0, std::sqrt(par.var_user));
    for (int m = 0; m < sc.n_users; ++m) st.phi_user(m) = d_user(rng);
    st.alpha = CMat(sc.n_beams, sc.n_users);
    for (int m = 0; m < sc.n_users; ++m)
        for (int n = 0; n < sc.n_beams; ++n) st.alpha(n, m) = complex_gaussian(rng, 1.0);

    ChannelRealization cr;
    cr.seed = seed;
    cr.rician_factor = par.rician_factor;
    cr.wavelength_m = par.wavelength_m;
    cr.h.push_back(sample_channel_slot(geom, pattern, st, par));
    for (int t = 1; t < sc.n_slots; ++t) {
        st = step_random_walk(st, rng);
        cr.h.push_back(sample_channel_slot(geom, pattern, st, par));
    }
    return cr;
}

// External interfaces: geometry CSV (user,lat,lon,rx_gain_db) and channel
// tensor export (t,n,m,re,im) for cross-language verification.
inline std::vector<UserGeometry> load_geometry_csv(const std::string& path,
                                                   double orbit_lon_deg) {
    auto t = csv::read_file(path);
    int cla = t.col("lat"), clo = t.col("lon"), cg = t.col("rx_gain_db");
    std::vector<UserGeometry> out;
    for (const auto& row : t.rows) {
        UserGeometry u;
        u.lat_deg = std::stod(row[cla]);
        u.lon_deg = std::stod(row[clo]);
        u.rx_gain = db_to_linear(std::stod(row[cg]));
        u.slant_m = slant_distance(u.lat_deg, u.lon_deg, orbit_lon_deg);
        out.push_back(u);
    }
    return out;
}

inline void export_channel_csv(const ChannelRealization& cr, const std::string& path) {
    std::ofstream out(path);
    out << "t,n,m,re,im\n";
    for (std::size_t t = 0; t < cr.h.size(); ++t)
        for (int n = 0; n < cr.h[t].rows(); ++n)
            for (int m = 0; m < cr.h[t].cols(); ++m)
                out << t << ',' << n << ',' << m << ',' << csv::fmt(cr.h[t](n, m).real())
                    << ',' << csv::fmt(cr.h[t](n, m).imag()) << '\n';
}

}  // namespace satbh
