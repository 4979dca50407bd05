#include "meshderiv/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "meshderiv/errors.hpp"

namespace meshderiv {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint truncated");
    return v;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
    put<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_vec(std::istream& is) {
    const auto n = get<std::uint64_t>(is);
    if (n > (1ull << 32)) throw IoError("checkpoint vector too long");
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated");
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const ModelParams& m, const OptimizerState* opt) {
    const ModelConfig& c = m.config;
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kVersion);
    put<std::int32_t>(os, c.n_channels);
    put<std::int32_t>(os, c.n_globals);
    put<std::uint8_t>(os, c.use_mls ? 1 : 0);
    put<std::uint8_t>(os, c.edge_geometry ? 1 : 0);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(c.integrator));
    put<std::int32_t>(os, c.mp_rounds);
    put<std::int32_t>(os, c.mp_hidden);
    put<std::int32_t>(os, c.message_width);
    put<std::int32_t>(os, c.source_width);
    put<std::int32_t>(os, c.fusion_hidden);
    put<std::int32_t>(os, c.fusion_depth);
    const Normalization& nz = m.norm;
    for (const auto* v : {&nz.state_mean, &nz.state_std, &nz.global_mean, &nz.global_std, &nz.grad_scale,
                          &nz.lap_scale, &nz.out_scale}) {
        put_vec(os, *v);
    }
    put<double>(os, nz.length_scale);
    put_vec(os, m.theta);
    put<std::uint8_t>(os, opt ? 1 : 0);
    if (opt) {
        const AdamWConfig& a = opt->config;
        for (double x : {a.lr, a.beta1, a.beta2, a.eps, a.weight_decay, a.min_lr_ratio}) put<double>(os, x);
        put<std::uint64_t>(os, a.total_steps);
        put<std::uint64_t>(os, opt->step);
        put_vec(os, opt->m);
        put_vec(os, opt->v);
    }
    if (!os) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file");
    if (get<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version");
    ModelConfig c;
    c.n_channels = get<std::int32_t>(is);
    c.n_globals = get<std::int32_t>(is);
    c.use_mls = get<std::uint8_t>(is) != 0;
    c.edge_geometry = get<std::uint8_t>(is) != 0;
    const auto integ = get<std::uint8_t>(is);
    if (integ > 2) throw IoError("bad integrator tag in checkpoint");
    c.integrator = static_cast<IntegratorKind>(integ);
    c.mp_rounds = get<std::int32_t>(is);
    c.mp_hidden = get<std::int32_t>(is);
    c.message_width = get<std::int32_t>(is);
    c.source_width = get<std::int32_t>(is);
    c.fusion_hidden = get<std::int32_t>(is);
    c.fusion_depth = get<std::int32_t>(is);

    Checkpoint ck;
    ck.model = layout_model(c);
    Normalization& nz = ck.model.norm;
    for (auto* v : {&nz.state_mean, &nz.state_std, &nz.global_mean, &nz.global_std, &nz.grad_scale, &nz.lap_scale,
                    &nz.out_scale}) {
        *v = get_vec(is);
    }
    nz.length_scale = get<double>(is);
    auto theta = get_vec(is);
    if (theta.size() != ck.model.theta.size()) throw IoError("checkpoint parameter count does not match its config");
    ck.model.theta = std::move(theta);
    if (get<std::uint8_t>(is) != 0) {
        AdamWConfig a;
        a.lr = get<double>(is);
        a.beta1 = get<double>(is);
        a.beta2 = get<double>(is);
        a.eps = get<double>(is);
        a.weight_decay = get<double>(is);
        a.min_lr_ratio = get<double>(is);
        a.total_steps = get<std::uint64_t>(is);
        OptimizerState st;
        st.config = a;
        st.step = get<std::uint64_t>(is);
        st.m = get_vec(is);
        st.v = get_vec(is);
        ck.optimizer = std::move(st);
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& m, const OptimizerState* opt) {
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, m, opt);
    write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return read_checkpoint(is);
}

}  // namespace meshderiv
