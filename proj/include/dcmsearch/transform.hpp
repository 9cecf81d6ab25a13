#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dcmsearch {

enum class Transformation { linear, log1p, boxcox };

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// |lambda| below this uses the ln(x) limit of Box-Cox.
inline constexpr double kBoxCoxLimit = 1e-8;

/// f(x) = x, ln(1 + x), or (x^lambda - 1) / lambda.
double apply_transform(Transformation t, double x, double lambda = 1.0);

/// d/dlambda of the Box-Cox transform; (ln x)^2 / 2 at lambda = 0.
double transform_dlambda(double x, double lambda);

std::string_view to_string(Transformation t);
Transformation transformation_from_string(std::string_view s);

}  // namespace dcmsearch
