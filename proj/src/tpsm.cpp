#include "psm/tpsm.hpp"

#include <bit>
#include <cmath>

namespace psm::tpsm {

Compression parse_compression(const std::string& name) {
  if (name == "drop-first-half") return Compression::DropFirstHalf;
  if (name == "linear-projection") return Compression::LinearProjection;
  throw Error("unknown compression: " + name);
}

std::string compression_name(Compression c) {
  return c == Compression::DropFirstHalf ? "drop-first-half"
                                         : "linear-projection";
}

void PsmConfig::validate() const {
  if (chunk_size < 1) throw Error("config: chunk_size must be >= 1");
  if (heads < 1) throw Error("config: heads must be >= 1");
  if (model_dim == 0 || model_dim % heads != 0)
    throw Error("config: model_dim must be a positive multiple of heads");
  if (agg_layers < 1 || inf_layers < 1)
    throw Error("config: layer counts must be >= 1");
  if (vocab_size < 1) throw Error("config: vocab_size must be >= 1");
}

namespace {

constexpr double kLnEps = 1e-5;

void check_tokens(const std::vector<TokenId>& tokens, const PsmConfig& cfg) {
  for (TokenId id : tokens)
    if (id >= cfg.vocab_size)
      throw LengthError("token id " + std::to_string(id) +
                        " outside vocabulary of " +
                        std::to_string(cfg.vocab_size));
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias) {
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.cols);
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t j = 0; j < x.cols; ++j)
      out(i, j) = (x(i, j) - mean) * inv * gain(0, j) + bias(0, j);
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

Matrix multi_head_attention(const Matrix& x, const WeightBundle& w,
                            const std::string& prefix, std::size_t heads) {
  const Matrix q = matmul(x, w.at(prefix + ".attn.wq"));
  const Matrix k = matmul(x, w.at(prefix + ".attn.wk"));
  const Matrix v = matmul(x, w.at(prefix + ".attn.wv"));
  const std::size_t head_dim = x.cols / heads;

  Matrix mixed(x.rows, x.cols);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * head_dim;
    Matrix qh(x.rows, head_dim), kh(x.rows, head_dim), vh(x.rows, head_dim);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < head_dim; ++j) {
        qh(i, j) = q(i, off + j);
        kh(i, j) = k(i, off + j);
        vh(i, j) = v(i, off + j);
      }
    const Matrix oh = causal_attention(qh, kh, vh, head_dim);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < head_dim; ++j) mixed(i, off + j) = oh(i, j);
  }
  return matmul(mixed, w.at(prefix + ".attn.wo"));
}

Matrix ffn(const Matrix& x, const WeightBundle& w, const std::string& prefix) {
  Matrix h = matmul(x, w.at(prefix + ".ffn.w1"));
  for (double& v : h.data) v = gelu(v);
  return matmul(h, w.at(prefix + ".ffn.w2"));
}

// Embedded chunk rows with window-local positions. The chunk always sits in
// the second half of the inference window, so its position ids start at
// `pos_offset` regardless of whether a prefix state is present.
Matrix embed_tokens(const std::vector<TokenId>& tokens, const WeightBundle& w,
                    const Matrix& pos, std::size_t pos_offset) {
  const Matrix& table = w.at("embed.tok");
  Matrix out(tokens.size(), table.cols);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = 0; j < table.cols; ++j)
      out(i, j) = table(tokens[i], j) + pos(pos_offset + i, j);
  return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows + bottom.rows, top.cols);
  for (std::size_t i = 0; i < top.rows; ++i)
    for (std::size_t j = 0; j < top.cols; ++j) out(i, j) = top(i, j);
  for (std::size_t i = 0; i < bottom.rows; ++i)
    for (std::size_t j = 0; j < top.cols; ++j)
      out(top.rows + i, j) = bottom(i, j);
  return out;
}

}  // namespace

std::vector<WeightBundle::Entry> psm_weight_manifest(const PsmConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.chunk_size, d = cfg.model_dim, v = cfg.vocab_size;
  std::vector<WeightBundle::Entry> out;
  out.push_back({"embed.tok", v, d});
  out.push_back({"enc.pos", c, d});
  out.push_back({"agg.pos", 2 * c, d});
  out.push_back({"inf.pos", 2 * c, d});
  auto block = [&](const std::string& prefix) {
    out.push_back({prefix + ".ln1.g", 1, d});
    out.push_back({prefix + ".ln1.b", 1, d});
    out.push_back({prefix + ".attn.wq", d, d});
    out.push_back({prefix + ".attn.wk", d, d});
    out.push_back({prefix + ".attn.wv", d, d});
    out.push_back({prefix + ".attn.wo", d, d});
    out.push_back({prefix + ".ln2.g", 1, d});
    out.push_back({prefix + ".ln2.b", 1, d});
    out.push_back({prefix + ".ffn.w1", d, 4 * d});
    out.push_back({prefix + ".ffn.w2", 4 * d, d});
  };
  block("enc.0");
  for (std::size_t l = 0; l < cfg.agg_layers; ++l)
    block("agg." + std::to_string(l));
  for (std::size_t l = 0; l < cfg.inf_layers; ++l)
    block("inf." + std::to_string(l));
  if (cfg.compression == Compression::LinearProjection)
    out.push_back({"agg.comp", c, 2 * c});
  out.push_back({"readout.w", d, v});
  return out;
}

WeightBundle make_psm_weights(const PsmConfig& cfg, std::uint64_t seed) {
  WeightBundle w;
  w.seed = seed;
  std::uint64_t index = 0;
  for (const auto& e : psm_weight_manifest(cfg)) {
    ++index;
    const bool gain = e.name.ends_with(".g");
    const bool bias = e.name.ends_with(".b");
    if (gain) {
      w.add(e.name, Matrix::filled(e.rows, e.cols, 1.0));
    } else if (bias) {
      w.add(e.name, Matrix(e.rows, e.cols));
    } else {
      const double scl = 1.0 / std::sqrt(static_cast<double>(e.rows));
      w.add(e.name, seeded_init(e.rows, e.cols, mix_seed(seed, index), scl));
    }
  }
  return w;
}

Matrix block_forward(const Matrix& x, const WeightBundle& w,
                     const std::string& prefix, std::size_t heads) {
  const Matrix normed1 =
      layer_norm(x, w.at(prefix + ".ln1.g"), w.at(prefix + ".ln1.b"));
  const Matrix h = add(x, multi_head_attention(normed1, w, prefix, heads));
  const Matrix normed2 =
      layer_norm(h, w.at(prefix + ".ln2.g"), w.at(prefix + ".ln2.b"));
  return add(h, ffn(normed2, w, prefix));
}

ChunkState encode_chunk(const std::vector<TokenId>& tokens,
                        const WeightBundle& w, const PsmConfig& cfg) {
  if (tokens.size() != cfg.chunk_size)
    throw LengthError("encode_chunk: expected " +
                      std::to_string(cfg.chunk_size) + " tokens, got " +
                      std::to_string(tokens.size()));
  check_tokens(tokens, cfg);
  const Matrix x = embed_tokens(tokens, w, w.at("enc.pos"), 0);
  return block_forward(x, w, "enc.0", cfg.heads);
}

ChunkState agg_attention(const ChunkState& s, const ChunkState& x,
                         const WeightBundle& w, const PsmConfig& cfg) {
  const std::size_t c = cfg.chunk_size, d = cfg.model_dim;
  if (s.rows != c || s.cols != d || x.rows != c || x.cols != d)
    throw DimensionError("agg_attention: states must be chunk_size x model_dim");
  Matrix window = add(vstack(s, x), w.at("agg.pos"));
  for (std::size_t l = 0; l < cfg.agg_layers; ++l)
    window = block_forward(window, w, "agg." + std::to_string(l), cfg.heads);

  if (cfg.compression == Compression::DropFirstHalf) {
    Matrix out(c, d);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < d; ++j) out(i, j) = window(c + i, j);
    return out;
  }
  return matmul(w.at("agg.comp"), window);
}

Matrix infer_tokens(const std::optional<ChunkState>& s,
                    const std::vector<TokenId>& tokens, const WeightBundle& w,
                    const PsmConfig& cfg) {
  const std::size_t c = cfg.chunk_size;
  if (tokens.empty() || tokens.size() > c)
    throw LengthError("infer_tokens: need 1.." + std::to_string(c) +
                      " tokens, got " + std::to_string(tokens.size()));
  check_tokens(tokens, cfg);
  const Matrix& pos = w.at("inf.pos");
  const Matrix emb = embed_tokens(tokens, w, pos, c);

  Matrix window;
  std::size_t chunk_offset = 0;
  if (s.has_value()) {
    if (s->rows != c || s->cols != cfg.model_dim)
      throw DimensionError("infer_tokens: bad prefix state shape");
    Matrix state_rows(c, cfg.model_dim);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < cfg.model_dim; ++j)
        state_rows(i, j) = (*s)(i, j) + pos(i, j);
    window = vstack(state_rows, emb);
    chunk_offset = c;
  } else {
    window = emb;
  }

  for (std::size_t l = 0; l < cfg.inf_layers; ++l)
    window = block_forward(window, w, "inf." + std::to_string(l), cfg.heads);

  Matrix chunk_rows(tokens.size(), cfg.model_dim);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = 0; j < cfg.model_dim; ++j)
      chunk_rows(i, j) = window(chunk_offset + i, j);
  return matmul(chunk_rows, w.at("readout.w"));
}

Matrix infer_chunk(const std::optional<ChunkState>& s,
                   const std::vector<TokenId>& tokens, const WeightBundle& w,
                   const PsmConfig& cfg) {
  if (tokens.size() != cfg.chunk_size)
    throw LengthError("infer_chunk: expected " +
                      std::to_string(cfg.chunk_size) + " tokens, got " +
                      std::to_string(tokens.size()));
  return infer_tokens(s, tokens, w, cfg);
}

ChunkPipeline<ChunkState> make_attention_pipeline(const WeightBundle& w,
                                                  const PsmConfig& cfg) {
  cfg.validate();
  ChunkPipeline<ChunkState> pipe;
  pipe.chunk_size = cfg.chunk_size;
  pipe.encode = [&w, cfg](const std::vector<TokenId>& chunk) {
    return encode_chunk(chunk, w, cfg);
  };
  pipe.agg = {[&w, cfg](const ChunkState& a, const ChunkState& b) {
                return agg_attention(a, b, w, cfg);
              },
              /*claims_associative=*/false};
  pipe.infer = [&w, cfg](const std::optional<ChunkState>& s,
                         const std::vector<TokenId>& chunk) {
    return infer_tokens(s, chunk, w, cfg);
  };
  pipe.pad_state = Matrix(cfg.chunk_size, cfg.model_dim);
  return pipe;
}

Matrix psm_forward_static(const std::vector<TokenId>& tokens,
                          const WeightBundle& w, const PsmConfig& cfg) {
  const auto pipe = make_attention_pipeline(w, cfg);
  return pipeline_forward_static(pipe, tokens);
}

DecodeResult psm_decode_stream(const std::vector<TokenId>& tokens,
                               const WeightBundle& w, const PsmConfig& cfg) {
  const auto pipe = make_attention_pipeline(w, cfg);
  auto res = pipeline_decode_stream(pipe, tokens);
  return {std::move(res.logits), std::move(res.trace)};
}

void write_logits_csv(std::ostream& os, const Matrix& logits) {
  os.precision(17);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    for (std::size_t j = 0; j < logits.cols; ++j) {
      if (j) os << ',';
      os << logits(i, j);
    }
    os << '\n';
  }
}

void write_logits_bin(std::ostream& os, const Matrix& logits) {
  for (double x : logits.data) {
    const auto u = std::bit_cast<std::uint64_t>(x);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(u >> (8 * i));
    os.write(b, 8);
  }
}

}  // namespace psm::tpsm
