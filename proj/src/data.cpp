#include "fvdm/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <numbers>

namespace fvdm {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kDataStream = 0x64617461;  // "data"
constexpr int kSuper = 8;                          // subpixels per axis for disc coverage

void reflect(double& pos, double& vel, double lo, double hi)
{
    for (int guard = 0; guard < 64 && (pos < lo || pos > hi); ++guard) {
        if (pos < lo) pos = 2.0 * lo - pos;
        if (pos > hi) pos = 2.0 * hi - pos;
        vel = -vel;
    }
}

void render_disc(std::span<double> frame, std::size_t h, std::size_t w, double cx, double cy, double r)
{
    const double r2 = r * r;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            int inside = 0;
            for (int sy = 0; sy < kSuper; ++sy) {
                const double py = static_cast<double>(y) + (sy + 0.5) / kSuper - cy;
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = static_cast<double>(x) + (sx + 0.5) / kSuper - cx;
                    inside += (px * px + py * py <= r2) ? 1 : 0;
                }
            }
            frame[y * w + x] = 2.0 * inside / (kSuper * kSuper) - 1.0;
        }
    }
}

VideoTensor bouncing_ball(const DatasetSpec& spec, RngStream& rng)
{
    const double r = spec.ball_radius;
    const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
    double cx = r + (w - 2.0 * r) * rng.uniform();
    double cy = r + (h - 2.0 * r) * rng.uniform();
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    double vx = spec.ball_speed * std::cos(theta), vy = spec.ball_speed * std::sin(theta);
    VideoTensor clip(spec.n_frames, spec.dim());
    for (std::size_t i = 0; i < spec.n_frames; ++i) {
        if (i > 0) {
            cx += vx;
            cy += vy;
            reflect(cx, vx, r, w - r);
            reflect(cy, vy, r, h - r);
        }
        render_disc(clip.frame(i), spec.height, spec.width, cx, cy, r);
    }
    return clip;
}

double overlap(double a0, double a1, double b0, double b1)
{
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

VideoTensor moving_bar(const DatasetSpec& spec, RngStream& rng)
{
    const double w = static_cast<double>(spec.width);
    const double start = w * rng.uniform();
    VideoTensor clip(spec.n_frames, spec.dim());
    for (std::size_t i = 0; i < spec.n_frames; ++i) {
        // Reduce the displacement first so whole wraps are exact.
        double left = std::fmod(start + std::fmod(static_cast<double>(i) * spec.bar_velocity, w), w);
        if (left < 0.0) left += w;
        auto frame = clip.frame(i);
        for (std::size_t c = 0; c < spec.width; ++c) {
            const double c0 = static_cast<double>(c);
            double cover = 0.0;
            for (int k = -1; k <= 1; ++k) {
                const double a = left + k * w;
                cover += overlap(a, a + spec.bar_width, c0, c0 + 1.0);
            }
            const double v = 2.0 * std::min(cover, 1.0) - 1.0;
            for (std::size_t y = 0; y < spec.height; ++y) frame[y * spec.width + c] = v;
        }
    }
    return clip;
}

VideoTensor gaussian_ar1(const DatasetSpec& spec, RngStream& rng)
{
    const double sd = std::sqrt(spec.variance);
    const double innov = std::sqrt(1.0 - spec.rho * spec.rho);
    VideoTensor clip(spec.n_frames, spec.frame_dim);
    for (std::size_t i = 0; i < spec.n_frames; ++i) {
        auto frame = clip.frame(i);
        for (std::size_t j = 0; j < spec.frame_dim; ++j) {
            const double z = sd * rng.normal();
            frame[j] = i == 0 ? z : spec.rho * clip.frame(i - 1)[j] + innov * z;
        }
    }
    return clip;
}

void put_u64(std::ostream& out, std::uint64_t v)
{
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path)
{
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError(path.string() + ": truncated file");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
}

template <class T>
T unsigned_of(const json& v)
{
    if (!v.is_number_unsigned()) throw DataError("expected a non-negative integer");
    return v.get<T>();
}

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

}  // namespace

const char* dataset_kind_name(DatasetKind kind)
{
    switch (kind) {
    case DatasetKind::bouncing_ball: return "bouncing_ball";
    case DatasetKind::moving_bar: return "moving_bar";
    case DatasetKind::gaussian_ar1: return "gaussian_ar1";
    }
    return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& name)
{
    for (auto k : {DatasetKind::bouncing_ball, DatasetKind::moving_bar, DatasetKind::gaussian_ar1}) {
        if (name == dataset_kind_name(k)) return k;
    }
    throw DataError("unknown dataset kind '" + name + "'");
}

std::optional<ImageGeometry> DatasetSpec::geometry() const
{
    if (!is_image()) return std::nullopt;
    return ImageGeometry{height, width, 1};
}

void DatasetSpec::validate() const
{
    if (n_frames < 1) throw DataError("dataset n_frames must be positive");
    if (count < 1) throw DataError("dataset count must be positive");
    if (is_image()) {
        if (height < 1 || width < 1) throw DataError("dataset height and width must be positive");
    } else if (frame_dim < 1) {
        throw DataError("dataset frame_dim must be positive");
    }
    switch (kind) {
    case DatasetKind::bouncing_ball:
        if (!(ball_radius > 0.0) || 2.0 * ball_radius > static_cast<double>(std::min(height, width))) {
            throw DataError("ball_radius must be positive and fit inside the frame");
        }
        if (!(ball_speed >= 0.0) || !std::isfinite(ball_speed)) throw DataError("ball_speed must be >= 0");
        break;
    case DatasetKind::moving_bar:
        if (!(bar_width > 0.0) || bar_width > static_cast<double>(width)) {
            throw DataError("bar_width must lie in (0, width]");
        }
        if (!std::isfinite(bar_velocity)) throw DataError("bar_velocity must be finite");
        break;
    case DatasetKind::gaussian_ar1:
        if (!(rho > -1.0 && rho < 1.0)) throw DataError("ar1 rho must lie in (-1, 1); |rho| = 1 is singular");
        if (!(variance > 0.0) || !std::isfinite(variance)) throw DataError("ar1 variance must be positive");
        break;
    }
}

VideoTensor generate(const DatasetSpec& spec, std::size_t index)
{
    spec.validate();
    if (index >= spec.count) {
        throw DataError("clip index " + std::to_string(index) + " out of range for " + std::to_string(spec.count) +
                        " clips");
    }
    RngStream rng = RngStream{spec.seed, kDataStream}.substream(index);
    VideoTensor clip;
    switch (spec.kind) {
    case DatasetKind::bouncing_ball: clip = bouncing_ball(spec, rng); break;
    case DatasetKind::moving_bar: clip = moving_bar(spec, rng); break;
    case DatasetKind::gaussian_ar1: clip = gaussian_ar1(spec, rng); break;
    }
    clip.set_geometry(spec.geometry());
    return clip;
}

GaussianVideoModel ar1_law(const DatasetSpec& spec)
{
    if (spec.kind != DatasetKind::gaussian_ar1) throw DataError("ar1_law needs a gaussian_ar1 dataset");
    spec.validate();
    const std::size_t n = spec.n_frames, d = spec.frame_dim;
    GaussianVideoModel m{n, d, Tensor({n * d}), Tensor({n * d, n * d})};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto lag = static_cast<int>(i > k ? i - k : k - i);
            const double c = spec.variance * std::pow(spec.rho, lag);
            for (std::size_t a = 0; a < d; ++a) m.cov.at(i * d + a, k * d + a) = c;
        }
    }
    m.validate();
    return m;
}

std::string dataset_spec_to_json(const DatasetSpec& spec)
{
    json j;
    j["kind"] = dataset_kind_name(spec.kind);
    j["n_frames"] = spec.n_frames;
    j["height"] = spec.height;
    j["width"] = spec.width;
    j["frame_dim"] = spec.frame_dim;
    j["ball_radius"] = spec.ball_radius;
    j["ball_speed"] = spec.ball_speed;
    j["bar_width"] = spec.bar_width;
    j["bar_velocity"] = spec.bar_velocity;
    j["rho"] = spec.rho;
    j["variance"] = spec.variance;
    j["count"] = spec.count;
    j["seed"] = spec.seed;
    return j.dump(2);
}

DatasetSpec dataset_spec_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("dataset: ") + e.what());
    }
    if (!j.is_object()) throw DataError("dataset: expected an object");
    DatasetSpec s;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "kind") s.kind = parse_dataset_kind(value.get<std::string>());
            else if (key == "n_frames") s.n_frames = unsigned_of<std::size_t>(value);
            else if (key == "height") s.height = unsigned_of<std::size_t>(value);
            else if (key == "width") s.width = unsigned_of<std::size_t>(value);
            else if (key == "frame_dim") s.frame_dim = unsigned_of<std::size_t>(value);
            else if (key == "ball_radius") s.ball_radius = value.get<double>();
            else if (key == "ball_speed") s.ball_speed = value.get<double>();
            else if (key == "bar_width") s.bar_width = value.get<double>();
            else if (key == "bar_velocity") s.bar_velocity = value.get<double>();
            else if (key == "rho") s.rho = value.get<double>();
            else if (key == "variance") s.variance = value.get<double>();
            else if (key == "count") s.count = unsigned_of<std::size_t>(value);
            else if (key == "seed") s.seed = unsigned_of<std::uint64_t>(value);
            else throw DataError("unknown key");
        } catch (const json::exception& e) {
            throw DataError("dataset." + key + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("dataset." + key + ": " + e.what());
        }
    }
    s.validate();
    return s;
}

void export_clip(const VideoTensor& x, const std::filesystem::path& path, ClipFormat format)
{
    if (format == ClipFormat::f64_raw) {
        auto out = open_out(path);
        put_u64(out, x.n_frames());
        put_u64(out, x.frame_dim());
        for (double v : x.tensor().data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
        if (!out) throw DataError("write failed for " + path.string());
        return;
    }
    if (!x.geometry() || x.geometry()->channels != 1) {
        throw DataError("pgm_strip export needs single-channel image geometry");
    }
    const auto g = *x.geometry();
    const std::size_t n = x.n_frames(), strip_w = g.width * n;
    std::vector<unsigned char> pixels(g.height * strip_w);
    const VideoTensor c = x.clamped(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = c.frame(i);
        for (std::size_t y = 0; y < g.height; ++y) {
            for (std::size_t px = 0; px < g.width; ++px) {
                const double v = (f[y * g.width + px] + 1.0) * 127.5;
                pixels[y * strip_w + i * g.width + px] = static_cast<unsigned char>(std::lround(v));
            }
        }
    }
    auto out = open_out(path);
    out << "P5\n" << strip_w << " " << g.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

VideoTensor read_f64_raw(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    const std::uint64_t n = get_u64(in, path), d = get_u64(in, path);
    if (n == 0 || d == 0 || n > (1u << 20) || d > (1u << 24) || n * d > (1u << 28)) {
        throw DataError(path.string() + ": implausible clip shape " + std::to_string(n) + " x " + std::to_string(d));
    }
    std::vector<double> values(n * d);
    for (double& v : values) v = std::bit_cast<double>(get_u64(in, path));
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
    return VideoTensor(Tensor({n, d}, std::move(values)));
}

VideoTensor read_pgm_strip(const std::filesystem::path& path, std::size_t frames)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    auto skip_comments = [&] {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string line;
            std::getline(in, line);
            in >> std::ws;
        }
    };
    in >> magic;
    skip_comments();
    in >> w;
    skip_comments();
    in >> h;
    skip_comments();
    in >> maxval;
    if (!in || magic != "P5" || w == 0 || h == 0 || maxval != 255) {
        throw DataError(path.string() + ": not an 8-bit binary PGM (P5)");
    }
    in.get();
    if (frames < 1 || w % frames != 0) throw DataError(path.string() + ": width does not split into frames");
    std::vector<unsigned char> pixels(w * h);
    if (!in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw DataError(path.string() + ": truncated pixel data");
    }
    const std::size_t fw = w / frames;
    VideoTensor clip(frames, fw * h);
    for (std::size_t i = 0; i < frames; ++i) {
        auto f = clip.frame(i);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < fw; ++x) f[y * fw + x] = pixels[y * w + i * fw + x] / 127.5 - 1.0;
        }
    }
    clip.set_geometry(ImageGeometry{h, fw, 1});
    return clip;
}

void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir)
{
    spec.validate();
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < spec.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "clip_%06zu.f64", i);
        export_clip(generate(spec, i), dir / name, ClipFormat::f64_raw);
    }
    auto out = open_out(dir / "manifest.json");
    out << dataset_spec_to_json(spec) << "\n";
}

std::vector<VideoTensor> read_clip_dir(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".f64") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError(dir.string() + " contains no .f64 clips");
    std::vector<VideoTensor> clips;
    for (const auto& f : files) {
        clips.push_back(read_f64_raw(f));
        if (clips.back().tensor().shape() != clips.front().tensor().shape()) {
            throw DataError(f.string() + " has a different clip shape from " + files.front().string());
        }
    }
    return clips;
}

}  // namespace fvdm
