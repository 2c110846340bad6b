#include "p3d/provider.hpp"

#include <cmath>
#include <string>

#include "p3d/wavelet.hpp"

namespace p3d {

FeatureMap to_domain(const Image& img, Domain domain) {
    return domain == Domain::Wavelet ? stack_subbands(dwt2(img)) : to_feature_map(img);
}

Image from_domain(const FeatureMap& state, Domain domain) {
    return domain == Domain::Wavelet ? idwt2(unstack_subbands(state)) : to_image(state);
}

void NoiseStore::put(int t, Plane plane, std::size_t slice, FeatureMap eps) {
    std::lock_guard lock(mu_);
    entries_.insert_or_assign(Key{t, plane, slice}, std::move(eps));
}

const FeatureMap& NoiseStore::get(int t, Plane plane, std::size_t slice) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(Key{t, plane, slice});
    if (it == entries_.end()) {
        throw LookupError("no recorded noise for step " + std::to_string(t) + ", plane " +
                          std::string(to_string(plane)) + ", slice " + std::to_string(slice));
    }
    return it->second;
}

std::size_t NoiseStore::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

FeatureMap OracleProvider::predict(const NoiseQuery& q) const {
    const FeatureMap& eps = store_->get(q.t, q.plane, q.slice);
    if (!eps.same_shape(q.x_t)) throw DimensionError("recorded noise shape does not match the query state");
    return eps;
}

FeatureMap RecordingProvider::predict(const NoiseQuery& q) const {
    FeatureMap eps = inner_.predict(q);
    store_->put(q.t, q.plane, q.slice, eps);
    return eps;
}

double gaussian_marginal_mean(double m, double mu, int t, const NoiseSchedule& sched) {
    return mu + (m - mu) * std::exp(-sched.theta_bar.at(static_cast<std::size_t>(t)));
}

double gaussian_marginal_variance(double s2, int t, const NoiseSchedule& sched) {
    const double tb = sched.theta_bar.at(static_cast<std::size_t>(t));
    return s2 * std::exp(-2.0 * tb) + sched.v[static_cast<std::size_t>(t)];
}

double gaussian_score(double x, double m, double mu, double s2, int t, const NoiseSchedule& sched) {
    return -(x - gaussian_marginal_mean(m, mu, t, sched)) / gaussian_marginal_variance(s2, t, sched);
}

GaussianProvider::GaussianProvider(Volume mean, double s2, NoiseSchedule sched)
    : mean_(std::move(mean)), s2_(s2), sched_(std::move(sched)) {
    if (!(s2_ >= 0.0)) throw ParameterError("gaussian provider variance must be >= 0");
}

FeatureMap GaussianProvider::predict(const NoiseQuery& q) const {
    if (q.t < 1 || q.t > sched_.T) throw StepError("gaussian provider queried at step " + std::to_string(q.t));
    if (!q.x_t.same_shape(q.mu)) throw DimensionError("gaussian provider: state and condition shapes differ");
    const FeatureMap m = to_domain(slice(mean_, q.plane, q.slice).pixels, q.domain);
    if (!m.same_shape(q.x_t)) throw DimensionError("gaussian provider: mean slice shape does not match the query");

    const double decay = std::exp(-sched_.theta_bar[q.t]);
    const double var = gaussian_marginal_variance(s2_, q.t, sched_);
    const double sd = std::sqrt(sched_.v[q.t]);
    FeatureMap eps(q.x_t.channels(), q.x_t.height(), q.x_t.width());
    auto x = q.x_t.values();
    auto mu = q.mu.values();
    auto mv = m.values();
    auto out = eps.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mean = mu[i] + (mv[i] - mu[i]) * decay;
        out[i] = sd * (x[i] - mean) / var;
    }
    return eps;
}

NetworkProvider::NetworkProvider(DenoiserNet net, NoiseSchedule sched) : net_(std::move(net)), sched_(std::move(sched)) {
    if (sched_.T < 1) throw ParameterError("network provider needs T >= 1");
}

FeatureMap NetworkProvider::predict(const NoiseQuery& q) const {
    return net_.predict(q.x_t, q.mu, q.t, sched_);
}

std::unique_ptr<NoiseProvider> oracle_provider(std::shared_ptr<const NoiseStore> store) {
    return std::make_unique<OracleProvider>(std::move(store));
}

std::unique_ptr<NoiseProvider> gaussian_provider(Volume mean, double s2, const NoiseSchedule& sched) {
    return std::make_unique<GaussianProvider>(std::move(mean), s2, sched);
}

}  // namespace p3d
