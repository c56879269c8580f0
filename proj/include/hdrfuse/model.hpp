#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdrfuse/autograd.hpp"
#include "hdrfuse/checkpoint.hpp"
#include "hdrfuse/hdr_math.hpp"
#include "hdrfuse/rng.hpp"
#include "hdrfuse/tensor.hpp"

namespace hdrfuse {

struct ModelConfig {
    std::int64_t embed_dim = 24;  // C; divisible by 3 and by heads
    std::int64_t num_layers = 2;  // L attention-block pairs
    std::int64_t window = 4;      // spatial attention window side
    std::int64_t heads = 3;       // heads of the windowed self-attention
    std::int64_t cross_heads = 1;  // heads of the channel cross-attention
    std::int64_t mlp_ratio = 4;
    std::int64_t patch_size = 1;  // 1x1 tokenization: every pixel is a token

    void validate() const {
        if (embed_dim <= 0 || embed_dim % 3 != 0)
            throw std::invalid_argument("embed_dim must be positive and divisible by 3");
        if (heads <= 0 || embed_dim % heads != 0)
            throw std::invalid_argument("embed_dim must be divisible by heads");
        if (cross_heads <= 0 || (embed_dim / 3) % cross_heads != 0)
            throw std::invalid_argument("embed_dim/3 must be divisible by cross_heads");
        if (num_layers <= 0 || window <= 0 || mlp_ratio <= 0)
            throw std::invalid_argument("num_layers, window and mlp_ratio must be positive");
        if (patch_size != 1) throw std::invalid_argument("only 1x1 patch tokenization is supported");
    }

    std::int64_t group_dim() const { return embed_dim / 3; }

    // Small configuration that trains in seconds on a CPU.
    static ModelConfig desk() { return ModelConfig{}; }

    // Larger configuration in the spirit of the published network scale.
    static ModelConfig paper_shaped() {
        ModelConfig c;
        c.embed_dim = 60;
        c.num_layers = 3;
        c.window = 8;
        c.heads = 6;
        return c;
    }
};

// Named parameter set. Iteration order is the schema order, which also
// fixes the initialization stream and the checkpoint layout.
template <typename T>
class ParamStore {
public:
    ag::Var<T>& add(const std::string& name, Tensor<T> value) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        index_[name] = params_.size();
        params_.emplace_back(name, ag::Var<T>::param(std::move(value)));
        return params_.back().second;
    }

    ag::Var<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
        return params_[it->second].second;
    }

    const ag::Var<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
        return params_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const { return params_.size(); }
    std::int64_t total_scalars() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p.second.value().numel();
        return n;
    }

    std::vector<std::pair<std::string, ag::Var<T>>>& entries() { return params_; }
    const std::vector<std::pair<std::string, ag::Var<T>>>& entries() const { return params_; }

    void zero_grads() {
        for (auto& p : params_) p.second.zero_grad();
    }

private:
    std::vector<std::pair<std::string, ag::Var<T>>> params_;
    std::map<std::string, std::size_t> index_;
};

namespace detail_model {

enum class InitKind { TruncNormal, ConvFanIn, Zero, One };

template <typename T>
Tensor<T> init_tensor(const Shape& shape, InitKind kind, Rng& rng) {
    Tensor<T> t(shape);
    switch (kind) {
        case InitKind::Zero:
            break;
        case InitKind::One:
            t.fill(T(1));
            break;
        case InitKind::TruncNormal:
            for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.truncated_normal(0.02));
            break;
        case InitKind::ConvFanIn: {
            std::int64_t fan_in = 1;
            for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
            const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, sigma));
            break;
        }
    }
    return t;
}

// Schema walker: visits every parameter in a fixed order.
template <typename F>
void walk_schema(const ModelConfig& cfg, F&& visit) {
    const std::int64_t c = cfg.embed_dim, g = cfg.group_dim(), hid = cfg.embed_dim * cfg.mlp_ratio;
    for (int i = 0; i < 3; ++i) {
        const std::string p = "shallow." + std::to_string(i) + ".";
        visit(p + "weight", Shape{g, 6, 3, 3}, InitKind::ConvFanIn);
        visit(p + "bias", Shape{g}, InitKind::Zero);
    }
    for (std::int64_t j = 0; j < cfg.num_layers; ++j) {
        const std::string lp = "layers." + std::to_string(j) + ".";
        const std::string sp = lp + "spatial.";
        visit(sp + "norm1.gamma", Shape{c}, InitKind::One);
        visit(sp + "norm1.beta", Shape{c}, InitKind::Zero);
        for (const char* nm : {"q", "k", "v", "proj"}) {
            visit(sp + "attn." + nm + ".weight", Shape{c, c}, InitKind::TruncNormal);
            visit(sp + "attn." + nm + ".bias", Shape{c}, InitKind::Zero);
        }
        visit(sp + "norm2.gamma", Shape{c}, InitKind::One);
        visit(sp + "norm2.beta", Shape{c}, InitKind::Zero);
        visit(sp + "mlp.fc1.weight", Shape{hid, c}, InitKind::TruncNormal);
        visit(sp + "mlp.fc1.bias", Shape{hid}, InitKind::Zero);
        visit(sp + "mlp.fc2.weight", Shape{c, hid}, InitKind::TruncNormal);
        visit(sp + "mlp.fc2.bias", Shape{c}, InitKind::Zero);
        const std::string cp = lp + "cross.";
        for (const char* pair : {"short", "long"}) {
            for (const char* nm : {"q", "k", "v"}) {
                visit(cp + pair + "." + nm + ".weight", Shape{g, g}, InitKind::TruncNormal);
                visit(cp + pair + "." + nm + ".bias", Shape{g}, InitKind::Zero);
            }
        }
        visit(cp + "merge.weight", Shape{c, c}, InitKind::TruncNormal);
        visit(cp + "merge.bias", Shape{c}, InitKind::Zero);
        visit(cp + "norm.gamma", Shape{c}, InitKind::One);
        visit(cp + "norm.beta", Shape{c}, InitKind::Zero);
        visit(cp + "mlp.fc1.weight", Shape{hid, c}, InitKind::TruncNormal);
        visit(cp + "mlp.fc1.bias", Shape{hid}, InitKind::Zero);
        visit(cp + "mlp.fc2.weight", Shape{c, hid}, InitKind::TruncNormal);
        visit(cp + "mlp.fc2.bias", Shape{c}, InitKind::Zero);
    }
    visit("skip.weight", Shape{c, g, 3, 3}, InitKind::ConvFanIn);
    visit("skip.bias", Shape{c}, InitKind::Zero);
    visit("head.weight", Shape{3, c, 3, 3}, InitKind::ConvFanIn);
    visit("head.bias", Shape{3}, InitKind::Zero);
}

} // namespace detail_model

template <typename T>
struct Network {
    ModelConfig config;
    ParamStore<T> params;
};

template <typename T>
Network<T> make_network(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Network<T> net;
    net.config = cfg;
    Rng rng = Rng::stream(seed, 0x1417);
    detail_model::walk_schema(cfg, [&](const std::string& name, const Shape& shape, detail_model::InitKind kind) {
        net.params.add(name, detail_model::init_tensor<T>(shape, kind, rng));
    });
    return net;
}

// ---- checkpoint binding ----------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> config_keys(const ModelConfig& cfg) {
    return {{"embed_dim", std::to_string(cfg.embed_dim)},   {"num_layers", std::to_string(cfg.num_layers)},
            {"window", std::to_string(cfg.window)},         {"heads", std::to_string(cfg.heads)},
            {"cross_heads", std::to_string(cfg.cross_heads)}, {"mlp_ratio", std::to_string(cfg.mlp_ratio)},
            {"patch_size", std::to_string(cfg.patch_size)}};
}

inline ModelConfig config_from_checkpoint(const Checkpoint& ck) {
    ModelConfig cfg;
    cfg.embed_dim = std::stoll(ck.config_value("embed_dim"));
    cfg.num_layers = std::stoll(ck.config_value("num_layers"));
    cfg.window = std::stoll(ck.config_value("window"));
    cfg.heads = std::stoll(ck.config_value("heads"));
    cfg.cross_heads = std::stoll(ck.config_value("cross_heads"));
    cfg.mlp_ratio = std::stoll(ck.config_value("mlp_ratio"));
    cfg.patch_size = std::stoll(ck.config_value("patch_size"));
    return cfg;
}

template <typename T>
Checkpoint to_checkpoint(const Network<T>& net) {
    Checkpoint ck;
    ck.config = config_keys(net.config);
    for (const auto& [name, var] : net.params.entries()) {
        CheckpointRecord r;
        r.name = name;
        r.shape = var.value().shape();
        r.data.resize(static_cast<std::size_t>(var.value().numel()));
        for (std::int64_t i = 0; i < var.value().numel(); ++i) r.data[static_cast<std::size_t>(i)] =
            static_cast<float>(var.value()[i]);
        ck.records.push_back(std::move(r));
    }
    return ck;
}

// Builds a network from checkpoint weights, verifying the schema: every
// expected name present with the right shape, no extras.
template <typename T>
Network<T> from_checkpoint(const Checkpoint& ck) {
    const ModelConfig cfg = config_from_checkpoint(ck);
    cfg.validate();
    Network<T> net;
    net.config = cfg;
    std::size_t used = 0;
    detail_model::walk_schema(cfg, [&](const std::string& name, const Shape& shape, detail_model::InitKind) {
        const CheckpointRecord* r = ck.find(name);
        if (!r) throw std::runtime_error("checkpoint schema error: missing parameter '" + name + "'");
        if (r->shape != shape)
            throw std::runtime_error("checkpoint schema error: parameter '" + name + "' has shape " +
                                     shape_str(r->shape) + ", expected " + shape_str(shape));
        Tensor<T> t(shape);
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(r->data[static_cast<std::size_t>(i)]);
        net.params.add(name, std::move(t));
        ++used;
    });
    if (used != ck.records.size()) {
        std::map<std::string, int> seen;
        for (const auto& r : ck.records) {
            if (!net.params.has(r.name))
                throw std::runtime_error("checkpoint schema error: unexpected parameter '" + r.name + "'");
            if (++seen[r.name] > 1)
                throw std::runtime_error("checkpoint schema error: duplicate parameter '" + r.name + "'");
        }
    }
    return net;
}

// ---- network input ----------------------------------------------------------

// I_i = concat(L_i, L_i^gamma / t_i) along channels: 6xHxW per exposure.
template <typename T>
Tensor<T> make_input(const LdrImage& ldr, float gamma = kGamma) {
    const HdrImage proj = gamma_project(ldr, gamma);
    const std::int64_t h = ldr.height(), w = ldr.width();
    Tensor<T> out({6, h, w});
    for (std::int64_t i = 0; i < 3 * h * w; ++i) {
        out[i] = static_cast<T>(ldr.pixels[i]);
        out[3 * h * w + i] = static_cast<T>(proj.pixels[i]);
    }
    return out;
}

// ---- token/window bookkeeping ----------------------------------------------

using IndexVec = std::shared_ptr<const std::vector<std::int64_t>>;

namespace detail_model {

inline std::int64_t reflect_fold(std::int64_t i, std::int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

} // namespace detail_model

// Index plans mapping between image layout [C,H,W], token layout [N,C] and
// the window-ordered padded token layout used by the spatial attention.
struct TokenPlan {
    std::int64_t h = 0, w = 0, c = 0;
    std::int64_t hp = 0, wp = 0;          // padded extents (multiples of window)
    std::int64_t tokens_per_window = 0;   // window^2
    IndexVec image_to_tokens;             // [N*C] flat gather indices
    IndexVec tokens_to_image;             // [C*H*W]
    IndexVec window_gather;               // tokens -> padded window-ordered tokens
    IndexVec window_scatter;              // padded window-ordered tokens -> tokens
};

inline TokenPlan make_token_plan(std::int64_t h, std::int64_t w, std::int64_t c, std::int64_t window) {
    TokenPlan plan;
    plan.h = h;
    plan.w = w;
    plan.c = c;
    plan.hp = (h + window - 1) / window * window;
    plan.wp = (w + window - 1) / window * window;
    plan.tokens_per_window = window * window;

    auto i2t = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(h * w * c));
    auto t2i = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(c * h * w));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const std::int64_t tok = (y * w + x) * c + ch;
                const std::int64_t img = (ch * h + y) * w + x;
                (*i2t)[static_cast<std::size_t>(tok)] = img;
                (*t2i)[static_cast<std::size_t>(img)] = tok;
            }
    plan.image_to_tokens = i2t;
    plan.tokens_to_image = t2i;

    const std::int64_t wy = plan.hp / window, wx = plan.wp / window;
    auto gather = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(plan.hp * plan.wp * c));
    auto scatter = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(h * w * c));
    std::size_t pos = 0;
    for (std::int64_t by = 0; by < wy; ++by)
        for (std::int64_t bx = 0; bx < wx; ++bx)
            for (std::int64_t ty = 0; ty < window; ++ty)
                for (std::int64_t tx = 0; tx < window; ++tx) {
                    const std::int64_t py = by * window + ty, px = bx * window + tx;
                    const std::int64_t sy = detail_model::reflect_fold(py, h);
                    const std::int64_t sx = detail_model::reflect_fold(px, w);
                    const std::int64_t srow = sy * w + sx;
                    const std::int64_t prow = static_cast<std::int64_t>(pos) / c;
                    for (std::int64_t ch = 0; ch < c; ++ch)
                        (*gather)[pos++] = srow * c + ch;
                    if (py < h && px < w)
                        for (std::int64_t ch = 0; ch < c; ++ch)
                            (*scatter)[static_cast<std::size_t>(srow * c + ch)] = prow * c + ch;
                }
    plan.window_gather = gather;
    plan.window_scatter = scatter;
    return plan;
}

// ---- forward pass ------------------------------------------------------------

namespace detail_model {

template <typename T>
ag::Var<T> gsab_block(const ag::Var<T>& tokens, Network<T>& net, std::int64_t layer, const TokenPlan& plan,
                      ag::MacCounter* macs) {
    auto& ps = net.params;
    const std::string sp = "layers." + std::to_string(layer) + ".spatial.";
    const std::int64_t np = plan.hp * plan.wp;
    ag::Var<T> zp = ag::gather_flat(tokens, plan.window_gather, Shape{np, plan.c});
    ag::Var<T> h = ag::layernorm(zp, ps.get(sp + "norm1.gamma"), ps.get(sp + "norm1.beta"));
    ag::Var<T> q = ag::linear(h, ps.get(sp + "attn.q.weight"), ps.get(sp + "attn.q.bias"));
    ag::Var<T> k = ag::linear(h, ps.get(sp + "attn.k.weight"), ps.get(sp + "attn.k.bias"));
    ag::Var<T> v = ag::linear(h, ps.get(sp + "attn.v.weight"), ps.get(sp + "attn.v.bias"));
    ag::Var<T> att = ag::spatial_attention_core(q, k, v, plan.tokens_per_window, net.config.heads, macs);
    att = ag::linear(att, ps.get(sp + "attn.proj.weight"), ps.get(sp + "attn.proj.bias"));
    ag::Var<T> zhat = ag::add(att, zp);
    ag::Var<T> m = ag::mlp(ag::layernorm(zhat, ps.get(sp + "norm2.gamma"), ps.get(sp + "norm2.beta")),
                           ps.get(sp + "mlp.fc1.weight"), ps.get(sp + "mlp.fc1.bias"),
                           ps.get(sp + "mlp.fc2.weight"), ps.get(sp + "mlp.fc2.bias"));
    ag::Var<T> zout = ag::add(m, zhat);
    return ag::gather_flat(zout, plan.window_scatter, Shape{plan.h * plan.w, plan.c});
}

template <typename T>
ag::Var<T> scab_block(const ag::Var<T>& tokens, const std::array<ag::Var<T>, 3>& shallow_tokens, Network<T>& net,
                      std::int64_t layer, ag::MacCounter* macs) {
    auto& ps = net.params;
    const std::string cp = "layers." + std::to_string(layer) + ".cross.";
    const std::int64_t g = net.config.group_dim();

    ag::Var<T> z11 = ag::slice_cols(tokens, 0, g);
    ag::Var<T> z22 = ag::slice_cols(tokens, g, 2 * g);
    ag::Var<T> z33 = ag::slice_cols(tokens, 2 * g, 3 * g);
    ag::Var<T> l1 = ag::add(z11, shallow_tokens[0]);
    ag::Var<T> l2 = ag::add(z22, shallow_tokens[1]);
    ag::Var<T> l3 = ag::add(z33, shallow_tokens[2]);

    auto cross = [&](const char* pair, const ag::Var<T>& kv_src) {
        const std::string pp = cp + pair + ".";
        ag::Var<T> q = ag::linear(l2, ps.get(pp + "q.weight"), ps.get(pp + "q.bias"));
        ag::Var<T> k = ag::linear(kv_src, ps.get(pp + "k.weight"), ps.get(pp + "k.bias"));
        ag::Var<T> v = ag::linear(kv_src, ps.get(pp + "v.weight"), ps.get(pp + "v.bias"));
        return ag::channel_attention_core(q, k, v, net.config.cross_heads, macs);
    };
    ag::Var<T> z12 = cross("short", l1);
    ag::Var<T> z32 = cross("long", l3);

    // the reference sub-group passes to the merge untouched
    ag::Var<T> merged = ag::hstack<T>({z12, z22, z32});
    ag::Var<T> y = ag::linear(merged, ps.get(cp + "merge.weight"), ps.get(cp + "merge.bias"));
    ag::Var<T> m = ag::mlp(ag::layernorm(y, ps.get(cp + "norm.gamma"), ps.get(cp + "norm.beta")),
                           ps.get(cp + "mlp.fc1.weight"), ps.get(cp + "mlp.fc1.bias"),
                           ps.get(cp + "mlp.fc2.weight"), ps.get(cp + "mlp.fc2.bias"));
    return ag::add(m, y);
}

} // namespace detail_model

// Full network: shallow per-EV convolutions, L pairs of spatial/channel
// attention blocks, reference-feature skip, 3x3 head with sigmoid.
template <typename T>
ag::Var<T> forward(Network<T>& net, const std::array<ag::Var<T>, 3>& inputs, ag::MacCounter* macs = nullptr) {
    net.config.validate();
    const std::int64_t h = inputs[0].value().dim(1), w = inputs[0].value().dim(2);
    for (const auto& in : inputs)
        if (in.value().rank() != 3 || in.value().dim(0) != 6 || in.value().dim(1) != h || in.value().dim(2) != w)
            throw std::invalid_argument("network input must be three 6xHxW tensors of one shape");
    const std::int64_t c = net.config.embed_dim, g = net.config.group_dim();
    const TokenPlan plan_g = make_token_plan(h, w, g, net.config.window);
    const TokenPlan plan = make_token_plan(h, w, c, net.config.window);

    std::array<ag::Var<T>, 3> f_img;
    std::array<ag::Var<T>, 3> f_tok;
    for (int i = 0; i < 3; ++i) {
        const std::string sp = "shallow." + std::to_string(i) + ".";
        f_img[i] = ag::conv2d(inputs[static_cast<std::size_t>(i)], net.params.get(sp + "weight"),
                              net.params.get(sp + "bias"), 1, 1);
        f_tok[i] = ag::gather_flat(f_img[i], plan_g.image_to_tokens, Shape{h * w, g});
    }
    ag::Var<T> z = ag::hstack<T>({f_tok[0], f_tok[1], f_tok[2]});

    for (std::int64_t j = 0; j < net.config.num_layers; ++j) {
        z = detail_model::gsab_block(z, net, j, plan, macs);
        z = detail_model::scab_block(z, f_tok, net, j, macs);
    }

    ag::Var<T> zimg = ag::gather_flat(z, plan.tokens_to_image, Shape{c, h, w});
    ag::Var<T> skip = ag::conv2d(f_img[1], net.params.get("skip.weight"), net.params.get("skip.bias"), 1, 1);
    zimg = ag::add(zimg, skip);
    ag::Var<T> out = ag::conv2d(zimg, net.params.get("head.weight"), net.params.get("head.bias"), 1, 1);
    return ag::sigmoid(out);
}

template <typename T>
ag::Var<T> forward(Network<T>& net, const LdrBracket& bracket, ag::MacCounter* macs = nullptr) {
    std::array<ag::Var<T>, 3> inputs;
    for (int i = 0; i < 3; ++i) inputs[i] = ag::Var<T>::constant(make_input<T>(bracket.at(i)));
    return forward(net, inputs, macs);
}

// Inference without graph recording; returns the prediction tensor.
template <typename T>
Tensor<T> predict(Network<T>& net, const LdrBracket& bracket) {
    ag::NoGradGuard ng;
    return forward(net, bracket).value();
}

// ---- analytic cost model -----------------------------------------------------

// Multiply-accumulate counts for one block pair at resolution HxW.
// N is the token count (spatial resolution). One channel cross-attention
// application costs 2*(C/3)^2*N over its score and value products; the
// single-product reading of the same cost is C^2*N/9, reported alongside.
struct MacReport {
    std::int64_t n_tokens = 0;          // H*W
    std::int64_t n_tokens_padded = 0;   // attention runs on the padded grid
    std::int64_t channel_score = 0;        // one application, score product
    std::int64_t channel_value = 0;        // one application, value product
    std::int64_t channel_application = 0;  // score + value
    std::int64_t channel_single_product = 0;  // C^2*N/9 single-product reading
    std::int64_t channel_per_block = 0;           // two applications per block
    std::int64_t window_core_per_block = 0;      // score + value over all windows
    std::int64_t projections_per_block = 0;    // q/k/v/proj + cross q/k/v + merge
    std::int64_t mlp_per_block = 0;            // both MLPs of the pair
    std::int64_t conv_total = 0;               // shallow + skip + head
    std::int64_t per_block_total = 0;
    std::int64_t network_total = 0;
};

inline MacReport count_macs(const ModelConfig& cfg, std::int64_t h, std::int64_t w) {
    cfg.validate();
    MacReport r;
    const std::int64_t c = cfg.embed_dim, g = cfg.group_dim(), win = cfg.window;
    const std::int64_t hp = (h + win - 1) / win * win, wp = (w + win - 1) / win * win;
    r.n_tokens = h * w;
    r.n_tokens_padded = hp * wp;
    const std::int64_t dh = g / cfg.cross_heads;
    r.channel_score = cfg.cross_heads * dh * dh * r.n_tokens;
    r.channel_value = r.channel_score;
    r.channel_application = r.channel_score + r.channel_value;
    r.channel_single_product = c * c * r.n_tokens / 9;
    r.channel_per_block = 2 * r.channel_application;
    r.window_core_per_block = 2 * r.n_tokens_padded * win * win * c;
    r.projections_per_block = 4 * r.n_tokens_padded * c * c    // spatial q/k/v/proj
                              + 6 * r.n_tokens * g * g         // cross q/k/v for two pairs
                              + r.n_tokens * c * c;            // merge
    r.mlp_per_block = 2 * (r.n_tokens_padded + r.n_tokens) * c * (c * cfg.mlp_ratio);
    r.conv_total = 3 * r.n_tokens * g * 6 * 9 + r.n_tokens * c * g * 9 + r.n_tokens * 3 * c * 9;
    r.per_block_total = r.channel_per_block + r.window_core_per_block + r.projections_per_block + r.mlp_per_block;
    r.network_total = cfg.num_layers * r.per_block_total + r.conv_total;
    return r;
}

} // namespace hdrfuse
