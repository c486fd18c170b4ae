#include "fvdm/eval.hpp"

#include <cmath>
#include <sstream>

#include "fvdm/linalg.hpp"

namespace fvdm {

namespace {

constexpr std::size_t kRawFeatureLimit = 256;

struct Moments {
    Tensor mean;
    Tensor cov;
};

Moments empirical(const std::vector<std::vector<double>>& rows)
{
    const std::size_t n = rows.size(), k = rows.front().size();
    Moments m{Tensor({k}), Tensor({k, k})};
    for (const auto& r : rows) {
        for (std::size_t a = 0; a < k; ++a) m.mean[a] += r[a];
    }
    for (std::size_t a = 0; a < k; ++a) m.mean[a] /= static_cast<double>(n);
    std::vector<double> c(k);
    for (const auto& r : rows) {
        for (std::size_t a = 0; a < k; ++a) c[a] = r[a] - m.mean[a];
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a; b < k; ++b) m.cov.at(a, b) += c[a] * c[b];
        }
    }
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
            m.cov.at(a, b) /= static_cast<double>(n - 1);
            m.cov.at(b, a) = m.cov.at(a, b);
        }
    }
    return m;
}

MomentReport compare(const Moments& m, const Tensor& mean, const Tensor& cov, std::size_t n)
{
    MomentReport r;
    r.samples = n;
    for (std::size_t a = 0; a < mean.size(); ++a) {
        r.mean_abs_error = std::max(r.mean_abs_error, std::abs(m.mean[a] - mean[a]));
    }
    r.cov_rel_frobenius = frobenius_norm(m.cov - cov) / frobenius_norm(cov);
    return r;
}

// Symmetric PSD square root with eigenvalues clamped at 0.
Tensor psd_sqrt(const Tensor& a)
{
    const auto e = sym_eigen(a);
    const std::size_t n = a.rows();
    Tensor out({n, n});
    for (std::size_t k = 0; k < n; ++k) {
        const double s = std::sqrt(std::max(e.eigenvalues[k], 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = e.eigenvectors.at(i, k) * s;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += vi * e.eigenvectors.at(j, k);
        }
    }
    return out;
}

Tensor symmetrized(const Tensor& a)
{
    return 0.5 * (a + transpose(a));
}

}  // namespace

MomentReport moment_check(std::span<const VideoTensor> samples, const GaussianVideoModel& law)
{
    law.validate();
    std::vector<std::size_t> all(law.dim());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return moment_check(samples, all, GaussianLaw{law.mean, law.cov});
}

MomentReport moment_check(std::span<const VideoTensor> samples, std::span<const std::size_t> coords,
                          const GaussianLaw& law)
{
    if (samples.size() < 2) throw EvalError("moment_check needs at least 2 samples");
    if (law.mean.size() != coords.size() || law.cov.shape() != Shape{coords.size(), coords.size()}) {
        throw EvalError("law dimension does not match the selected coordinates");
    }
    const std::size_t total = samples.front().tensor().size();
    std::vector<std::vector<double>> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.tensor().size() != total) throw EvalError("samples differ in dimension");
        const auto flat = s.tensor().data();
        std::vector<double> r(coords.size());
        for (std::size_t a = 0; a < coords.size(); ++a) {
            if (coords[a] >= total) throw EvalError("coordinate out of range for the samples");
            r[a] = flat[coords[a]];
        }
        rows.push_back(std::move(r));
    }
    return compare(empirical(rows), law.mean, law.cov, samples.size());
}

std::vector<double> clip_features(const VideoTensor& clip)
{
    const auto flat = clip.tensor().data();
    if (flat.size() <= kRawFeatureLimit) return {flat.begin(), flat.end()};
    const std::size_t n = clip.n_frames(), d = clip.frame_dim();
    std::vector<double> f;
    f.reserve(3 * n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto fr = clip.frame(i);
        double m = 0.0;
        for (double v : fr) m += v;
        m /= static_cast<double>(d);
        double s = 0.0;
        for (double v : fr) s += (v - m) * (v - m);
        f.push_back(m);
        f.push_back(std::sqrt(s / static_cast<double>(d)));
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = clip.frame(i + 1)[j] - clip.frame(i)[j];
            s += diff * diff;
        }
        f.push_back(std::sqrt(s));
    }
    return f;
}

double frechet_distance(const Tensor& mu1, const Tensor& c1, const Tensor& mu2, const Tensor& c2)
{
    double d2 = 0.0;
    for (std::size_t a = 0; a < mu1.size(); ++a) d2 += (mu1[a] - mu2[a]) * (mu1[a] - mu2[a]);
    const Tensor s1 = psd_sqrt(c1);
    const Tensor cross = psd_sqrt(symmetrized(matmul(matmul(s1, c2), s1)));
    for (std::size_t a = 0; a < mu1.size(); ++a) d2 += c1.at(a, a) + c2.at(a, a) - 2.0 * cross.at(a, a);
    return d2;
}

FrechetReport frechet_toy(std::span<const VideoTensor> set_a, std::span<const VideoTensor> set_b)
{
    if (set_a.empty() || set_b.empty()) throw EvalError("frechet_toy needs two non-empty sets");
    std::vector<std::vector<double>> fa, fb;
    for (const auto& c : set_a) fa.push_back(clip_features(c));
    for (const auto& c : set_b) fb.push_back(clip_features(c));
    const std::size_t k = fa.front().size();
    for (const auto* set : {&fa, &fb}) {
        for (const auto& f : *set) {
            if (f.size() != k) throw EvalError("clips differ in feature dimension");
        }
    }
    if (fa.size() < k + 1 || fb.size() < k + 1) {
        throw EvalError("frechet_toy needs at least " + std::to_string(k + 1) + " clips per set (feature dim " +
                        std::to_string(k) + "), got " + std::to_string(fa.size()) + " and " +
                        std::to_string(fb.size()));
    }
    const Moments a = empirical(fa), b = empirical(fb);
    FrechetReport r;
    r.raw = frechet_distance(a.mean, a.cov, b.mean, b.cov);
    r.distance = std::max(r.raw, 0.0);
    r.feature_dim = k;
    r.count_a = fa.size();
    r.count_b = fb.size();
    return r;
}

std::vector<double> conditioning_mse(const VideoTensor& generated, const TaskSpec& task)
{
    if (task.frozen.empty()) throw EvalError("conditioning_mse needs a task with frozen frames");
    if (generated.n_frames() != task.n_frames) throw EvalError("clip frame count does not match the task");
    std::vector<double> out;
    for (auto f : task.frozen) {
        const auto want = task.content(f);
        const auto got = generated.frame(f);
        if (want.size() != got.size()) throw EvalError("frame dimension does not match the conditioning content");
        double s = 0.0;
        for (std::size_t j = 0; j < got.size(); ++j) s += (got[j] - want[j]) * (got[j] - want[j]);
        out.push_back(s / static_cast<double>(got.size()));
    }
    return out;
}

std::string to_key_values(const MomentReport& r)
{
    std::ostringstream os;
    os.precision(17);
    os << "mean_abs_error=" << r.mean_abs_error << "\ncov_rel_frobenius=" << r.cov_rel_frobenius
       << "\nsamples=" << r.samples << "\n";
    return os.str();
}

std::string to_key_values(const FrechetReport& r)
{
    std::ostringstream os;
    os.precision(17);
    os << "frechet_d2=" << r.distance << "\nfrechet_raw=" << r.raw << "\nfeature_dim=" << r.feature_dim
       << "\ncount_a=" << r.count_a << "\ncount_b=" << r.count_b << "\n";
    return os.str();
}

}  // namespace fvdm
