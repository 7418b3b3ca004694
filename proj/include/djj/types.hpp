#pragma once
// Shared model types: lattice parameters, tunneling-suppression models,
// chemical potential.  All energies are angular rates in s^-1 (hbar = 1).

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace djj {

using cdouble = std::complex<double>;

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

inline bool finite(double x) { return std::isfinite(x); }

struct LatticeParams {
    int    n_sites     = 41;     // odd, lossy site central
    double j_coupling  = 230.0;  // J/hbar
    double u_interaction = 0.5;  // U/hbar per atom
    double gamma       = 0.0;    // loss rate on the lossy site
    int    lossy_site  = 20;
    double n0          = 700.0;  // reservoir filling per site

    void validate() const {
        require(n_sites > 0, "n_sites must be positive");
        require(lossy_site >= 0 && lossy_site < n_sites, "lossy_site out of range");
        require(finite(j_coupling) && j_coupling > 0, "j_coupling must be > 0");
        require(finite(u_interaction) && u_interaction >= 0, "u_interaction must be >= 0");
        require(finite(gamma) && gamma >= 0, "gamma must be >= 0");
        require(finite(n0) && n0 > 0, "n0 must be > 0");
    }
};

enum class CouplingVariant { Constant, FranckCondon };

// J'(dN): tunneling onto a partially emptied site is suppressed by the
// mismatch of on-site wavefunctions; modeled as a Gaussian in dN = N0 - N.
struct CouplingModel {
    CouplingVariant variant = CouplingVariant::FranckCondon;
    double fc_width = 350.0;   // sigma, atoms; default N0/2

    void validate() const {
        if (variant == CouplingVariant::FranckCondon)
            require(finite(fc_width) && fc_width > 0, "fc_width must be > 0");
    }
};

inline double effective_coupling(const CouplingModel& m, double j, double delta_n) {
    require(j > 0, "effective_coupling: j must be > 0");
    require(finite(delta_n), "effective_coupling: delta_n must be finite");
    if (m.variant == CouplingVariant::Constant) return j;
    double d = std::max(delta_n, 0.0) / m.fc_width;
    return j * std::exp(-d * d);
}

enum class MuVariant { Linear };

struct ChemicalPotentialModel {
    MuVariant variant = MuVariant::Linear;
    double u = 0.5;            // mu(N) = u*N

    void validate() const { require(finite(u) && u >= 0, "mu model: u must be >= 0"); }
    double mu(double n) const { return u * n; }
};

inline double chemical_potential_difference(const ChemicalPotentialModel& m,
                                            double n_reservoir, double n_site) {
    require(n_reservoir >= 0 && n_site >= 0 && finite(n_reservoir) && finite(n_site),
            "chemical_potential_difference: fillings must be >= 0");
    return m.mu(n_reservoir) - m.mu(n_site);
}

} // namespace djj
