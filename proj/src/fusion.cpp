#include "tdt/fusion.hpp"

#include <cmath>
#include <stdexcept>

#include "tdt/io_util.hpp"

namespace tdt {
namespace {

constexpr std::uint32_t kModelVersion = 1;

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

// Visits every trainable tensor in declared order; works for const and mutable models.
template <class Model, class Fn>
void visit_params(Model& m, Fn&& fn) {
  fn("entity_present", m.backend.entity_present, false);
  fn("entity_absent", m.backend.entity_absent, false);
  if (m.backend.kind == BackendKind::ToyTrainable) fn("token_table", m.backend.token_table, true);
  if (m.time.method == TimeMethod::LearnPE) fn("learnpe_table", m.learnpe_table, true);
  if (m.time.method == TimeMethod::Time2Vec) {
    fn("t2v_omega", m.t2v_omega, false);
    fn("t2v_phi", m.t2v_phi, false);
  }
  if (m.strategy != FusionStrategy::A) {
    fn("att_wq", m.attention.wq, false);
    fn("att_wk", m.attention.wk, false);
    fn("att_wv", m.attention.wv, false);
    fn("att_wo", m.attention.wo, false);
  }
}

}  // namespace

FusionStrategy parse_fusion_strategy(std::string_view name) {
  if (name == "A") return FusionStrategy::A;
  if (name == "AM") return FusionStrategy::AM;
  if (name == "CM") return FusionStrategy::CM;
  if (name == "ACM") return FusionStrategy::ACM;
  throw std::invalid_argument("unknown fusion strategy '" + std::string(name) + "'");
}

std::string_view to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::A: return "A";
    case FusionStrategy::AM: return "AM";
    case FusionStrategy::CM: return "CM";
    case FusionStrategy::ACM: return "ACM";
  }
  return "?";
}

int attention_input_width(FusionStrategy s, int d_model) {
  return s == FusionStrategy::CM || s == FusionStrategy::ACM ? 2 * d_model : d_model;
}

AttentionParams make_attention(int in_width, int out_width, int n_heads, double stddev, std::mt19937_64& rng) {
  if (n_heads < 1 || in_width % n_heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(in_width) + " not divisible by " +
                                std::to_string(n_heads) + " heads");
  }
  AttentionParams p;
  p.n_heads = n_heads;
  p.wq = gaussian(in_width, in_width, stddev, rng);
  p.wk = gaussian(in_width, in_width, stddev, rng);
  p.wv = gaussian(in_width, in_width, stddev, rng);
  p.wo = gaussian(in_width, out_width, stddev, rng);
  return p;
}

Eigen::MatrixXd multi_head_attention(const Eigen::MatrixXd& x, const AttentionParams& params,
                                     AttentionTrace* trace) {
  if (x.cols() != params.input_width()) {
    throw std::invalid_argument("attention input width " + std::to_string(x.cols()) + " != " +
                                std::to_string(params.input_width()));
  }
  const Eigen::Index dh = params.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Eigen::MatrixXd h(x.rows(), params.wq.cols());
  if (trace) {
    trace->x = x;
    trace->q.clear();
    trace->k.clear();
    trace->v.clear();
    trace->p.clear();
  }
  for (int head = 0; head < params.n_heads; ++head) {
    const Eigen::Index off = head * dh;
    Eigen::MatrixXd q = x * params.wq.middleCols(off, dh);
    Eigen::MatrixXd k = x * params.wk.middleCols(off, dh);
    Eigen::MatrixXd v = x * params.wv.middleCols(off, dh);
    Eigen::MatrixXd s = (q * k.transpose()) * scale;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    h.middleCols(off, dh) = s * v;
    if (trace) {
      trace->q.push_back(std::move(q));
      trace->k.push_back(std::move(k));
      trace->v.push_back(std::move(v));
      trace->p.push_back(std::move(s));
    }
  }
  if (trace) trace->h = h;
  return h * params.wo;
}

Eigen::MatrixXd multi_head_attention_backward(const AttentionTrace& trace, const AttentionParams& params,
                                              const Eigen::MatrixXd& grad_out, AttentionGrads& grads) {
  const Eigen::Index dh = params.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  grads.wo += trace.h.transpose() * grad_out;
  const Eigen::MatrixXd dh_all = grad_out * params.wo.transpose();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(trace.x.rows(), trace.x.cols());
  for (int head = 0; head < params.n_heads; ++head) {
    const Eigen::Index off = head * dh;
    const auto& p = trace.p[static_cast<std::size_t>(head)];
    const auto& q = trace.q[static_cast<std::size_t>(head)];
    const auto& k = trace.k[static_cast<std::size_t>(head)];
    const auto& v = trace.v[static_cast<std::size_t>(head)];
    const Eigen::MatrixXd dhh = dh_all.middleCols(off, dh);
    const Eigen::MatrixXd dp = dhh * v.transpose();
    const Eigen::MatrixXd dv = p.transpose() * dhh;
    const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    Eigen::MatrixXd ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
    const Eigen::MatrixXd dq = ds * k;
    const Eigen::MatrixXd dk = ds.transpose() * q;
    grads.wq.middleCols(off, dh) += trace.x.transpose() * dq;
    grads.wk.middleCols(off, dh) += trace.x.transpose() * dk;
    grads.wv.middleCols(off, dh) += trace.x.transpose() * dv;
    dx += dq * params.wq.middleCols(off, dh).transpose() + dk * params.wk.middleCols(off, dh).transpose() +
          dv * params.wv.middleCols(off, dh).transpose();
  }
  return dx;
}

Eigen::MatrixXd build_time_matrix(const Eigen::VectorXd& te, Eigen::Index seq_len) {
  if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
  return te.transpose().replicate(seq_len, 1);
}

std::vector<ParamRef> FusionModel::parameters() {
  std::vector<ParamRef> out;
  visit_params(*this, [&](const char* name, Eigen::MatrixXd& m, bool sparse) { out.push_back({name, &m, sparse}); });
  return out;
}

ParamLayout FusionModel::layout() const {
  ParamLayout l;
  int idx = 0;
  visit_params(*this, [&](std::string_view name, const Eigen::MatrixXd&, bool) {
    if (name == "token_table") l.token_table = idx;
    if (name == "learnpe_table") l.learnpe_table = idx;
    if (name == "t2v_omega") l.t2v_omega = idx;
    if (name == "t2v_phi") l.t2v_phi = idx;
    if (name == "att_wq") l.wq = idx;
    if (name == "att_wk") l.wk = idx;
    if (name == "att_wv") l.wv = idx;
    if (name == "att_wo") l.wo = idx;
    ++idx;
  });
  return l;
}

Eigen::VectorXd FusionModel::time_embedding(std::int64_t step) const {
  switch (time.method) {
    case TimeMethod::SinPE: return sinpe(static_cast<double>(step), d_model());
    case TimeMethod::LearnPE: return learnpe(step, learnpe_table);
    case TimeMethod::Time2Vec:
      return time2vec(static_cast<double>(step), Time2VecParams{t2v_omega.row(0).transpose(), t2v_phi.row(0).transpose()});
    case TimeMethod::Disabled: return Eigen::VectorXd::Zero(d_model());
  }
  throw std::logic_error("unknown time method");
}

FusionModel make_fusion_model(const FusionModelConfig& config) {
  config.time.validate();
  FusionModel m;
  m.strategy = config.strategy;
  m.time = config.time;
  m.epoch = config.epoch;
  m.max_seq_len = config.max_seq_len;
  switch (config.backend) {
    case BackendKind::HashedRandom: m.backend = make_hashed_backend(config.time.d_model, config.seed); break;
    case BackendKind::ToyTrainable:
      m.backend = make_toy_backend(config.time.d_model, config.vocab_buckets, config.seed);
      break;
    case BackendKind::Precomputed:
      m.backend = make_precomputed_backend(config.precomputed, config.seed);
      if (m.backend.d_model != config.time.d_model) {
        throw std::invalid_argument("precomputed d_model " + std::to_string(m.backend.d_model) +
                                    " != time d_model " + std::to_string(config.time.d_model));
      }
      break;
  }
  std::mt19937_64 rng(config.seed ^ 0xF05E5EEDULL);
  const int d = config.time.d_model;
  if (config.time.method == TimeMethod::LearnPE) m.learnpe_table = gaussian(config.time.max_position, d, 0.02, rng);
  if (config.time.method == TimeMethod::Time2Vec) {
    auto p = init_time2vec(d, rng);
    m.t2v_omega = p.omega.transpose();
    m.t2v_phi = p.phi.transpose();
  }
  if (m.uses_attention()) {
    m.attention = make_attention(attention_input_width(config.strategy, d), d, config.n_heads,
                                 config.attention_init_std, rng);
  } else {
    m.attention.n_heads = config.n_heads;
  }
  return m;
}

namespace {

Eigen::MatrixXd fusion_input(const Eigen::MatrixXd& text, const Eigen::MatrixXd& time, FusionStrategy s) {
  const Eigen::Index d = text.cols();
  switch (s) {
    case FusionStrategy::A:
    case FusionStrategy::AM: return text + time;
    case FusionStrategy::CM: {
      Eigen::MatrixXd x(text.rows(), 2 * d);
      x << text, time;
      return x;
    }
    case FusionStrategy::ACM: {
      Eigen::MatrixXd x(text.rows(), 2 * d);
      x << text + time, 2.0 * time;
      return x;
    }
  }
  throw std::logic_error("unknown fusion strategy");
}

}  // namespace

Eigen::VectorXd fuse(const Eigen::MatrixXd& text, const Eigen::MatrixXd& time, const FusionModel& model,
                     AttentionTrace* trace) {
  if (text.rows() != time.rows() || text.cols() != time.cols()) {
    throw std::invalid_argument("fuse: text and time matrices differ in shape");
  }
  if (text.cols() != model.d_model()) throw std::invalid_argument("fuse: width differs from model d_model");
  if (text.rows() < 1) throw std::invalid_argument("fuse: empty sequence");
  Eigen::MatrixXd x = fusion_input(text, time, model.strategy);
  if (!model.uses_attention()) return x.colwise().mean().transpose();
  return multi_head_attention(x, model.attention, trace).colwise().mean().transpose();
}

FuseInputGrads fuse_backward(const FusionModel& model, const AttentionTrace& trace, Eigen::Index seq_len,
                             const Eigen::VectorXd& grad_ef, ParamGrads& grads) {
  const Eigen::Index d = model.d_model();
  const Eigen::MatrixXd dy = (grad_ef.transpose() / static_cast<double>(seq_len)).replicate(seq_len, 1);
  Eigen::MatrixXd dx;
  if (model.uses_attention()) {
    const ParamLayout l = model.layout();
    AttentionGrads ag{grads[l.wq].dense, grads[l.wk].dense, grads[l.wv].dense, grads[l.wo].dense};
    dx = multi_head_attention_backward(trace, model.attention, dy, ag);
  } else {
    dx = dy;
  }
  FuseInputGrads out;
  switch (model.strategy) {
    case FusionStrategy::A:
    case FusionStrategy::AM:
      out.text = dx;
      out.time_row = dx.colwise().sum().transpose();
      break;
    case FusionStrategy::CM:
      out.text = dx.leftCols(d);
      out.time_row = dx.rightCols(d).colwise().sum().transpose();
      break;
    case FusionStrategy::ACM:
      out.text = dx.leftCols(d);
      out.time_row = (dx.leftCols(d).colwise().sum() + 2.0 * dx.rightCols(d).colwise().sum()).transpose();
      break;
  }
  return out;
}

Eigen::VectorXd embed_at(const FusionModel& model, const Document& doc, std::int64_t step, EmbedTrace* trace) {
  auto tokens = tokenize(doc, model.max_seq_len);
  const Eigen::MatrixXd text = encode(doc, tokens, model.backend);
  const Eigen::MatrixXd time = build_time_matrix(model.time_embedding(step), text.rows());
  Eigen::VectorXd e = fuse(text, time, model, trace ? &trace->attention : nullptr);
  if (trace) {
    trace->tokens = std::move(tokens);
    trace->step = step;
    trace->seq_len = text.rows();
  }
  return e;
}

Eigen::VectorXd embed(const FusionModel& model, const Document& doc, EmbedTrace* trace) {
  return embed_at(model, doc, model.step_of(doc.timestamp), trace);
}

void embed_backward(const FusionModel& model, const EmbedTrace& trace, const Eigen::VectorXd& grad_ef,
                    ParamGrads& grads) {
  const FuseInputGrads g = fuse_backward(model, trace.attention, trace.seq_len, grad_ef, grads);
  encode_backward(trace.tokens, model.backend, g.text, grads);
  const ParamLayout l = model.layout();
  switch (model.time.method) {
    case TimeMethod::LearnPE:
      grads[l.learnpe_table].add_row(learnpe_row(trace.step, model.learnpe_table.rows()), g.time_row.transpose());
      break;
    case TimeMethod::Time2Vec: {
      const double tau = static_cast<double>(trace.step);
      auto& d_omega = grads[l.t2v_omega].dense;
      auto& d_phi = grads[l.t2v_phi].dense;
      d_omega(0, 0) += g.time_row[0] * tau;
      d_phi(0, 0) += g.time_row[0];
      for (Eigen::Index k = 1; k < g.time_row.size(); ++k) {
        const double c = std::cos(model.t2v_omega(0, k) * tau + model.t2v_phi(0, k));
        d_omega(0, k) += g.time_row[k] * c * tau;
        d_phi(0, k) += g.time_row[k] * c;
      }
      break;
    }
    case TimeMethod::SinPE:
    case TimeMethod::Disabled: break;
  }
}

std::string serialize_model(const FusionModel& model) {
  ByteWriter out;
  out.bytes("TEFM");
  out.u32(kModelVersion);
  out.u8(static_cast<std::uint8_t>(model.strategy));
  out.u32(static_cast<std::uint32_t>(model.d_model()));
  out.u32(static_cast<std::uint32_t>(model.attention.n_heads));
  out.u8(static_cast<std::uint8_t>(model.time.method));
  out.u8(static_cast<std::uint8_t>(model.time.granularity));
  out.u8(static_cast<std::uint8_t>(model.backend.kind));
  out.i64(model.epoch.seconds);
  out.u32(static_cast<std::uint32_t>(model.time.max_position));
  out.u32(static_cast<std::uint32_t>(model.max_seq_len));
  out.u64(model.backend.seed);
  out.u64(static_cast<std::uint64_t>(model.backend.token_table.rows()));
  std::uint32_t count = 0;
  visit_params(model, [&](const char*, const Eigen::MatrixXd&, bool) { ++count; });
  out.u32(count);
  visit_params(model, [&](std::string_view name, const Eigen::MatrixXd& m, bool) {
    out.u16(static_cast<std::uint16_t>(name.size()));
    out.bytes(name);
    out.u32(static_cast<std::uint32_t>(m.rows()));
    out.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.f64(m(r, c));
    }
  });
  return out.str();
}

FusionModel parse_model(std::string_view bytes, std::shared_ptr<const PrecomputedTable> precomputed) {
  ByteReader in(bytes);
  if (in.remaining() < 4 || in.bytes(4) != "TEFM") throw FormatError("model file: bad magic");
  const std::uint32_t version = in.u32();
  if (version != kModelVersion) throw FormatError("model file: unsupported version " + std::to_string(version));
  FusionModel m;
  const auto strategy = in.u8();
  if (strategy > static_cast<std::uint8_t>(FusionStrategy::ACM)) throw FormatError("model file: bad strategy tag");
  m.strategy = static_cast<FusionStrategy>(strategy);
  const int d = static_cast<int>(in.u32());
  m.attention.n_heads = static_cast<int>(in.u32());
  const auto method = in.u8();
  if (method > static_cast<std::uint8_t>(TimeMethod::Disabled)) throw FormatError("model file: bad time method");
  m.time.method = static_cast<TimeMethod>(method);
  const auto gran = in.u8();
  if (gran > static_cast<std::uint8_t>(Granularity::Monthly)) throw FormatError("model file: bad granularity");
  m.time.granularity = static_cast<Granularity>(gran);
  const auto kind = in.u8();
  if (kind > static_cast<std::uint8_t>(BackendKind::HashedRandom)) throw FormatError("model file: bad backend");
  m.backend.kind = static_cast<BackendKind>(kind);
  m.epoch.seconds = in.i64();
  m.time.max_position = static_cast<int>(in.u32());
  m.time.d_model = d;
  m.max_seq_len = in.u32();
  m.backend.seed = in.u64();
  m.backend.d_model = d;
  const auto buckets = in.u64();
  if (m.backend.kind == BackendKind::Precomputed) {
    if (!precomputed) throw Error("model uses precomputed embeddings; none supplied");
    if (precomputed->d_model != d) throw Error("precomputed d_model differs from model d_model");
    m.backend.precomputed = std::move(precomputed);
  }
  // Shapes are fixed by the header; tensors must match them.
  const int in_width = attention_input_width(m.strategy, d);
  m.backend.entity_present.resize(1, d);
  m.backend.entity_absent.resize(1, d);
  if (m.backend.kind == BackendKind::ToyTrainable) m.backend.token_table.resize(static_cast<Eigen::Index>(buckets), d);
  if (m.time.method == TimeMethod::LearnPE) m.learnpe_table.resize(m.time.max_position, d);
  if (m.time.method == TimeMethod::Time2Vec) {
    m.t2v_omega.resize(1, d);
    m.t2v_phi.resize(1, d);
  }
  if (m.uses_attention()) {
    m.attention.wq.resize(in_width, in_width);
    m.attention.wk.resize(in_width, in_width);
    m.attention.wv.resize(in_width, in_width);
    m.attention.wo.resize(in_width, d);
  }
  const std::uint32_t count = in.u32();
  auto params = m.parameters();
  if (count != params.size()) throw FormatError("model file: tensor count mismatch");
  for (auto& p : params) {
    const std::uint16_t name_len = in.u16();
    const auto name = in.bytes(name_len);
    if (name != p.name) throw FormatError("model file: expected tensor '" + p.name + "'");
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    if (rows != p.value->rows() || cols != p.value->cols()) {
      throw FormatError("model file: shape mismatch for '" + p.name + "'");
    }
    for (Eigen::Index r = 0; r < p.value->rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value->cols(); ++c) (*p.value)(r, c) = in.f64();
    }
  }
  if (!in.done()) throw FormatError("model file: trailing bytes");
  return m;
}

void save_model(const FusionModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

FusionModel load_model(const std::filesystem::path& path, std::shared_ptr<const PrecomputedTable> precomputed) {
  return parse_model(read_file(path), std::move(precomputed));
}

}  // namespace tdt
