#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hjb/error.hpp"

namespace hjb {

/// Square band matrix with equal lower and upper bandwidth, stored by rows.
/// Solved by LU without pivoting, which is stable for the diagonally
/// dominant M-matrices produced by the implicit scheme.
class BandMatrix {
public:
    BandMatrix(std::size_t n, std::size_t bandwidth) : n_(n), bw_(bandwidth), w_(2 * bandwidth + 1), data_(n * w_, 0.0) {}

    std::size_t size() const { return n_; }
    std::size_t bandwidth() const { return bw_; }

    double& at(std::size_t i, std::size_t j) { return data_[i * w_ + (j + bw_ - i)]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * w_ + (j + bw_ - i)]; }

    void clear() { std::fill(data_.begin(), data_.end(), 0.0); }

    /// Solves A x = rhs in place; A is overwritten by its LU factors.
    void solve(std::vector<double>& rhs) {
        for (std::size_t k = 0; k < n_; ++k) {
            const double piv = at(k, k);
            if (!(std::fabs(piv) > 0.0) || !std::isfinite(piv)) throw NumericalError("banded solve: zero pivot");
            const std::size_t iend = std::min(n_, k + bw_ + 1);
            for (std::size_t i = k + 1; i < iend; ++i) {
                double& lik = at(i, k);
                if (lik == 0.0) continue;
                lik /= piv;
                for (std::size_t j = k + 1; j < iend; ++j) at(i, j) -= lik * at(k, j);
                rhs[i] -= lik * rhs[k];
            }
        }
        for (std::size_t k = n_; k-- > 0;) {
            double s = rhs[k];
            const std::size_t jend = std::min(n_, k + bw_ + 1);
            for (std::size_t j = k + 1; j < jend; ++j) s -= at(k, j) * rhs[j];
            rhs[k] = s / at(k, k);
        }
    }

private:
    std::size_t n_, bw_, w_;
    std::vector<double> data_;
};

}  // namespace hjb
