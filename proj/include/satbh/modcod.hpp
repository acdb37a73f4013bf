#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "satbh/config.hpp"
#include "satbh/csv.hpp"
#include "satbh/errors.hpp"

namespace satbh {

struct ModcodEntry {
    std::string label;
    double gamma;  // minimum working SINR, linear
    double rate;   // spectral efficiency, bit/s/Hz
};

// Ordered DVB-S2X MODCOD ladder. Omega = {0, gamma_1, ..., gamma_L} with the
// implicit zero entry meaning "no transmission".
class ModcodTable {
public:
    explicit ModcodTable(std::vector<ModcodEntry> entries) : entries_(std::move(entries)) {
        if (entries_.empty()) throw ContractViolation("modcod: empty table");
        for (std::size_t l = 0; l < entries_.size(); ++l) {
            if (entries_[l].gamma <= 0 || entries_[l].rate <= 0)
                throw ContractViolation("modcod: entries must be positive");
            if (l > 0 && (entries_[l].gamma <= entries_[l - 1].gamma ||
                          entries_[l].rate <= entries_[l - 1].rate))
                throw ContractViolation("modcod: table must be strictly increasing");
        }
    }

    static ModcodTable from_csv(const std::string& path) {
        auto t = csv::read_file(path);
        int cl = t.col("label"), cs = t.col("esn0_db"), cr = t.col("spectral_efficiency");
        std::vector<ModcodEntry> entries;
        for (const auto& row : t.rows)
            entries.push_back({row[cl], db_to_linear(std::stod(row[cs])), std::stod(row[cr])});
        return ModcodTable(std::move(entries));
    }

    int size() const { return static_cast<int>(entries_.size()); }  // L
    const std::vector<ModcodEntry>& entries() const { return entries_; }

    // Omega by 0-based Omega-index: omega(0) = 0, omega(l) = gamma_l.
    double omega(int l) const {
        if (l < 0 || l > size()) throw ContractViolation("modcod: omega index out of range");
        return l == 0 ? 0.0 : entries_[l - 1].gamma;
    }
    double rate_of_index(int l) const {
        if (l < 0 || l > size()) throw ContractViolation("modcod: rate index out of range");
        return l == 0 ? 0.0 : entries_[l - 1].rate;
    }
    double rate_max() const { return entries_.back().rate; }   // R_L
    double gamma_max() const { return entries_.back().gamma; }  // gamma_L

    // Omega-index of a value that must already be a member (within fp slack).
    int index_of(double g) const {
        if (g == 0.0) return 0;
        for (int l = 1; l <= size(); ++l)
            if (std::abs(g - omega(l)) <= 1e-9 * std::max(1.0, omega(l))) return l;
        throw ContractViolation("modcod: value not in Omega");
    }

    // f_DVB: exact discrete lookup, defined only on Omega.
    double f_dvb(double g) const { return rate_of_index(index_of(g)); }

    // Nearest Omega member in linear scale; exact midpoints round upward
    // (bias toward meeting demand, the repair loop may lower later).
    double round_to_omega(double g_star) const {
        if (g_star < 0) throw ContractViolation("modcod: negative SINR target");
        int best = 0;
        double best_d = g_star;
        for (int l = 1; l <= size(); ++l) {
            double d = std::abs(g_star - omega(l));
            if (d < best_d || (d == best_d && omega(l) > omega(best))) {
                best = l;
                best_d = d;
            }
        }
        return omega(best);
    }
    int round_to_omega_index(double g_star) const { return index_of(round_to_omega(g_star)); }

private:
    std::vector<ModcodEntry> entries_;
};

// Continuous Shannon-style surrogate for the discrete rate map.
struct ShannonFit {
    double xi_fit = 1.0;  // SNR gap to capacity, linear
    double rmse = 0.0;    // bit/s/Hz
    double r_max = 0.0;   // R_L
};

// f_SN(g) = min[R_L, log2(1 + g/xi_fit)]
inline double f_sn(double g, const ShannonFit& fit) {
    if (g < 0) throw ContractViolation("f_sn: negative SINR");
    return std::min(fit.r_max, std::log2(1.0 + g / fit.xi_fit));
}

// Least-squares fit of the single gap parameter xi by golden-section search
// on sum_l (R_l - min[R_L, log2(1+gamma_l/xi)])^2.
inline ShannonFit fit_xi(const ModcodTable& table) {
    if (table.size() < 2) throw ContractViolation("fit_xi: need at least two table rows");
    const double r_max = table.rate_max();
    auto sse = [&](double xi) {
        double s = 0.0;
        for (const auto& e : table.entries()) {
            double d = e.rate - std::min(r_max, std::log2(1.0 + e.gamma / xi));
            s += d * d;
        }
        return s;
    };
    double lo = 1e-4, hi = 1e4;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = sse(x1), f2 = sse(x2);
    while (b - a > 1e-10 * std::max(1.0, a)) {
        if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a); f1 = sse(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a); f2 = sse(x2);
        }
    }
    ShannonFit fit;
    fit.xi_fit = 0.5 * (a + b);
    fit.rmse = std::sqrt(sse(fit.xi_fit) / table.size());
    fit.r_max = r_max;
    return fit;
}

}  // namespace satbh
