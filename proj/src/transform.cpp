#include "dcmsearch/transform.hpp"

#include <cmath>

namespace dcmsearch {

double apply_transform(Transformation t, double x, double lambda) {
    switch (t) {
        case Transformation::linear:
            return x;
        case Transformation::log1p:
            if (!(x > -1.0)) throw DomainError("log1p transform requires x > -1");
            return std::log1p(x);
        case Transformation::boxcox:
            if (!(x > 0.0)) throw DomainError("Box-Cox transform requires x > 0");
            if (std::abs(lambda) < kBoxCoxLimit) return std::log(x);
            return std::expm1(lambda * std::log(x)) / lambda;
    }
    return x;
}

double transform_dlambda(double x, double lambda) {
    if (!(x > 0.0)) throw DomainError("Box-Cox transform requires x > 0");
    const double lx = std::log(x);
    if (std::abs(lambda) < kBoxCoxLimit) return 0.5 * lx * lx;
    if (std::abs(lambda * lx) < 1.0) {
        // sum_{k>=1} k lambda^{k-1} lx^{k+1} / (k+1)!; the closed form cancels badly here
        double sum = 0.0, term = lx * lx / 2.0;  // lambda^{k-1} lx^{k+1} / (k+1)! at k = 1
        for (int k = 1; k <= 24; ++k) {
            sum += k * term;
            term *= lambda * lx / (k + 2);
        }
        return sum;
    }
    const double xl = std::exp(lambda * lx);
    // (lambda x^lambda ln x - x^lambda + 1) / lambda^2, with expm1 for the last two terms
    return (lambda * xl * lx - std::expm1(lambda * lx)) / (lambda * lambda);
}

std::string_view to_string(Transformation t) {
    switch (t) {
        case Transformation::linear: return "linear";
        case Transformation::log1p: return "log";
        case Transformation::boxcox: return "boxcox";
    }
    return "?";
}

Transformation transformation_from_string(std::string_view s) {
    if (s == "linear") return Transformation::linear;
    if (s == "log" || s == "log1p") return Transformation::log1p;
    if (s == "boxcox" || s == "box-cox") return Transformation::boxcox;
    throw std::invalid_argument("unknown transformation '" + std::string(s) + "'");
}

}  // namespace dcmsearch
