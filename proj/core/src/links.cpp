#include "cfdist/links.hpp"

#include <cmath>
#include <numbers>

#include "cfdist/error.hpp"

namespace cfdist {

namespace {

// std::erfc carries ~1 ulp relative error across the range we evaluate,
// comfortably inside the 1e-12 target for the probit link.
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// log Phi(z) for very negative z via the asymptotic Mills ratio.
double normal_log_cdf(double z) {
    if (z > -30.0) {
        return std::log(normal_cdf(z));
    }
    const double z2 = z * z;
    return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) +
           std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

} // namespace

double link_cdf(Link link, double index) {
    switch (link) {
    case Link::logit:
        if (index >= 0.0) {
            return 1.0 / (1.0 + std::exp(-index));
        } else {
            const double e = std::exp(index);
            return e / (1.0 + e);
        }
    case Link::probit:
        return normal_cdf(index);
    }
    return 0.0;
}

double link_pdf(Link link, double index) {
    switch (link) {
    case Link::logit: {
        const double e = std::exp(-std::abs(index));
        return e / ((1.0 + e) * (1.0 + e));
    }
    case Link::probit:
        return normal_pdf(index);
    }
    return 0.0;
}

double link_log_cdf(Link link, double index) {
    switch (link) {
    case Link::logit:
        return index >= 0.0 ? -std::log1p(std::exp(-index)) : index - std::log1p(std::exp(index));
    case Link::probit:
        return normal_log_cdf(index);
    }
    return 0.0;
}

double link_log_ccdf(Link link, double index) { return link_log_cdf(link, -index); }

double link_score_factor(Link link, double index) {
    switch (link) {
    case Link::logit:
        return 1.0;
    case Link::probit: {
        const double p = normal_cdf(index);
        const double q = normal_cdf(-index);
        const double denom = p * q;
        if (denom < 1e-300) {
            // Tail limit of phi / (Phi (1 - Phi)) is |z|.
            return std::abs(index);
        }
        return normal_pdf(index) / denom;
    }
    }
    return 1.0;
}

std::string to_string(Link link) { return link == Link::logit ? "logit" : "probit"; }

Link parse_link(std::string_view name) {
    if (name == "logit") {
        return Link::logit;
    }
    if (name == "probit") {
        return Link::probit;
    }
    throw ConfigError("unknown link '" + std::string(name) + "' (expected logit or probit)");
}

} // namespace cfdist
