#pragma once

#include <string>
#include <string_view>

namespace cfdist {

enum class Link { logit, probit };

/// Largest absolute linear index used when evaluating a link; beyond it the
/// fit is treated as separated.
inline constexpr double kIndexCap = 30.0;
/// Fitted probabilities of separated grid points are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-10;

double link_cdf(Link link, double index);
double link_pdf(Link link, double index);

/// log Lambda(index) and log(1 - Lambda(index)), accurate in both tails.
double link_log_cdf(Link link, double index);
double link_log_ccdf(Link link, double index);

/// lambda / (Lambda (1 - Lambda)): the factor turning a residual into a score
/// contribution. Equal to one for the logit link.
double link_score_factor(Link link, double index);

std::string to_string(Link link);
Link parse_link(std::string_view name);

} // namespace cfdist
