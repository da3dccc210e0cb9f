#include "greybox/rkmodel.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "greybox/errors.hpp"

namespace greybox {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void check_normalizer(const Normalizer& norm, const EmbeddingSpec& e) {
    if (norm.channels() != e.block_width())
        throw ContractError("model: normalizer covers " + std::to_string(norm.channels()) +
                            " channels, embedding block has " + std::to_string(e.block_width()));
}

}  // namespace

Binding StepPredictor::bind(Tape& /*tape*/) const { return {}; }

std::vector<double> StepPredictor::predict(const HistoryBuffer& history, std::int64_t k) const {
    Tape tape;
    Binding b = bind(tape);
    Var out = record_step(tape, b, history, k);
    auto v = tape.value(out);
    return {v.begin(), v.end()};
}

GreyBoxModel::GreyBoxModel(nn::MlpSpec mlp, PhysicsModel physics, EmbeddingSpec embedding, Normalizer normalizer)
    : mlp_(std::move(mlp)),
      physics_(std::move(physics)),
      embedding_(embedding),
      normalizer_(std::move(normalizer)) {
    embedding_.validate();
    if (!physics_.law) throw ContractError("grey-box: physics model has no conservation law");
    if (physics_.n_states() != embedding_.n_states || physics_.n_inputs() != embedding_.n_inputs)
        throw ContractError("grey-box: physics and embedding disagree on channel counts");
    if (mlp_.input_dim != embedding_.width())
        throw ContractError("grey-box: network input " + std::to_string(mlp_.input_dim) +
                            " != embedding width " + std::to_string(embedding_.width()));
    if (mlp_.output_dim != physics_.n_constitutive())
        throw ContractError("grey-box: network output must match the constitutive arity");
    const auto nphi = physics_.n_constitutive();
    if ((!physics_.phi_mean.empty() && physics_.phi_mean.size() != nphi) ||
        (!physics_.phi_std.empty() && physics_.phi_std.size() != nphi))
        throw ContractError("grey-box: phi scaling must have one entry per constitutive channel");
    check_normalizer(normalizer_, embedding_);
    bridge_ = NormalizationBridge::from(normalizer_, embedding_.n_inputs);
    params_.assign(mlp_.parameter_count(), 0.0);
    params_.insert(params_.end(), physics_.beta_raw.begin(), physics_.beta_raw.end());
}

void GreyBoxModel::initialize(Rng& rng) { set_mlp_params(nn::MlpParams::glorot_uniform(mlp_, rng)); }

void GreyBoxModel::set_mlp_params(const nn::MlpParams& p) {
    p.check_shape(mlp_);
    const auto flat = p.flatten();
    std::copy(flat.begin(), flat.end(), params_.begin());
}

nn::MlpParams GreyBoxModel::mlp_params() const {
    return nn::MlpParams::unflatten(mlp_, std::span<const double>(params_).first(mlp_.parameter_count()));
}

PhysicsModel GreyBoxModel::physics() const {
    PhysicsModel p = physics_;
    const auto n = mlp_.parameter_count();
    p.beta_raw.assign(params_.begin() + static_cast<std::ptrdiff_t>(n), params_.end());
    return p;
}

Binding GreyBoxModel::bind(Tape& tape) const {
    Binding b;
    const std::size_t n = mlp_.parameter_count();
    const std::span<const double> all(params_);
    b.mlp = nn::bind_mlp(tape, mlp_, all.first(n), 0);
    if (params_.size() > n) b.beta_raw = tape.parameter(all.subspan(n), n);
    return b;
}

Var GreyBoxModel::record_step(Tape& tape, const Binding& binding, const HistoryBuffer& history,
                              std::int64_t k) const {
    const auto& e = embedding_;
    const double h = e.ts;
    const auto z_now = history.sample(k);

    Var z0 = tape.constant(embed_at_index(history, e, k));
    Var u0 = tape.constant(z_now.first(e.n_inputs));
    Var x0 = tape.constant(z_now.subspan(e.n_inputs, e.n_states));
    Var beta = record_beta(tape, physics_, binding.beta_raw);

    std::vector<double> delayed;
    const auto stage_embedding = [&](Var x_head, double fraction) {
        delayed_blocks(history, e, k, fraction, delayed);
        const Var parts[] = {u0, x_head, tape.constant(delayed)};
        return tape.concat(parts);
    };
    const auto slope = [&](Var x_stage, Var z, int stage, double fraction) {
        Var phi;
        if (override_) {
            phi = override_(tape, StageContext{&history, k, stage, fraction, z, x_stage});
        } else {
            phi = nn::record_mlp(tape, binding.mlp, z);
        }
        Var dx = record_normalized_rhs(tape, physics_, bridge_, x_stage, u0, phi, beta, bool(override_));
        if (!all_finite(tape.value(dx)))
            throw DivergenceError("grey-box: non-finite slope at stage " + std::to_string(stage) + " of step " +
                                      std::to_string(k),
                                  k, stage);
        return dx;
    };

    Var k1 = slope(x0, z0, 1, 0.0);
    Var x2 = tape.add(x0, tape.scalar_mul(k1, 0.5 * h));
    Var k2 = slope(x2, stage_embedding(x2, 0.5), 2, 0.5);
    Var x3 = tape.add(x0, tape.scalar_mul(k2, 0.5 * h));
    Var k3 = slope(x3, stage_embedding(x3, 0.5), 3, 0.5);
    Var x4 = tape.add(x0, tape.scalar_mul(k3, h));
    Var k4 = slope(x4, stage_embedding(x4, 1.0), 4, 1.0);

    Var mid = tape.add(k2, k3);
    Var incr = tape.add(tape.add(k1, k4), tape.scalar_mul(mid, 2.0));
    return tape.add(x0, tape.scalar_mul(incr, h / 6.0));
}

std::vector<double> GreyBoxModel::constitutive(const HistoryBuffer& history, std::int64_t k) const {
    Tape tape;
    Binding b = bind(tape);
    Var z0 = tape.constant(embed_at_index(history, embedding_, k));
    Var phi = nn::record_mlp(tape, b.mlp, z0);
    if (!physics_.phi_std.empty()) phi = tape.scale(phi, physics_.phi_std);
    if (!physics_.phi_mean.empty()) phi = tape.shift(phi, physics_.phi_mean);
    auto v = tape.value(phi);
    return {v.begin(), v.end()};
}

std::vector<double> GreyBoxModel::constitutive_law(const HistoryBuffer& history, std::int64_t k) const {
    auto phi = constitutive(history, k);
    if (physics_.prior == PriorKind::Unit) return phi;
    const auto z = history.sample(k);
    std::vector<double> u(embedding_.n_inputs), x(embedding_.n_states);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = normalizer_.denormalize(i, z[i]);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = normalizer_.denormalize(u.size() + i, z[u.size() + i]);
    const auto p = evaluate_prior(physics_, x, u);
    for (std::size_t i = 0; i < phi.size(); ++i)
        phi[i] = physics_.composition == PriorComposition::Multiplicative ? p[i] * phi[i] : p[i] + phi[i];
    return phi;
}

BlackBoxModel::BlackBoxModel(nn::MlpSpec mlp, EmbeddingSpec embedding, Normalizer normalizer)
    : mlp_(std::move(mlp)), embedding_(embedding), normalizer_(std::move(normalizer)) {
    embedding_.validate();
    if (mlp_.input_dim != embedding_.width())
        throw ContractError("black-box: network input must equal the embedding width");
    if (mlp_.output_dim != embedding_.n_states) throw ContractError("black-box: network output must equal N_c");
    check_normalizer(normalizer_, embedding_);
    params_.assign(mlp_.parameter_count(), 0.0);
}

void BlackBoxModel::initialize(Rng& rng) { set_mlp_params(nn::MlpParams::glorot_uniform(mlp_, rng)); }

void BlackBoxModel::set_mlp_params(const nn::MlpParams& p) {
    p.check_shape(mlp_);
    params_ = p.flatten();
}

nn::MlpParams BlackBoxModel::mlp_params() const { return nn::MlpParams::unflatten(mlp_, params_); }

Binding BlackBoxModel::bind(Tape& tape) const {
    Binding b;
    b.mlp = nn::bind_mlp(tape, mlp_, params_, 0);
    return b;
}

Var BlackBoxModel::record_step(Tape& tape, const Binding& binding, const HistoryBuffer& history,
                               std::int64_t k) const {
    Var z0 = tape.constant(embed_at_index(history, embedding_, k));
    return nn::record_mlp(tape, binding.mlp, z0);
}

Var PersistenceModel::record_step(Tape& tape, const Binding& /*binding*/, const HistoryBuffer& history,
                                  std::int64_t k) const {
    (void)embed_at_index(history, embedding_, k);
    return tape.constant(history.sample(k).subspan(embedding_.n_inputs, embedding_.n_states));
}

TimeSeries free_run(const StepPredictor& model, const TimeSeries& initial_history, std::span<const double> inputs,
                    std::size_t n_steps) {
    const auto& e = model.embedding();
    const std::size_t warm = e.warmup_samples();
    if (initial_history.n_inputs() != e.n_inputs || initial_history.n_states() != e.n_states)
        throw ContractError("free_run: history channels do not match the model");
    if (inputs.size() < n_steps * e.n_inputs) throw ContractError("free_run: not enough input rows");

    TimeSeries out;
    out.ts = initial_history.ts;
    out.t0 = initial_history.time(initial_history.length());
    out.input_names = initial_history.input_names;
    out.state_names = initial_history.state_names;
    if (n_steps == 0) return out;

    if (initial_history.length() < warm) {
        throw ColdStartError("free_run: initial history has " + std::to_string(initial_history.length()) +
                                 " samples, the embedding needs " + std::to_string(warm),
                             initial_history.time(0) + static_cast<double>(warm - 1) * initial_history.ts);
    }
    const std::size_t n = initial_history.length();
    HistoryBuffer buffer = HistoryBuffer::from_series(initial_history, n - warm, n, warm);

    Tape tape;
    std::vector<double> row(e.block_width());
    out.data.reserve(n_steps * row.size());
    for (std::size_t s = 0; s < n_steps; ++s) {
        tape.clear();
        const Binding b = model.bind(tape);
        const std::int64_t k = buffer.last_index();
        std::vector<double> next;
        try {
            Var pred = model.record_step(tape, b, buffer, k);
            auto v = tape.value(pred);
            next.assign(v.begin(), v.end());
        } catch (const DivergenceError& err) {
            throw DivergenceError(std::string("free_run: diverged at step ") + std::to_string(s) + ": " + err.what(),
                                  static_cast<std::int64_t>(s), err.stage());
        }
        for (double x : next) {
            if (!std::isfinite(x) || std::abs(x) > kDivergenceLimit)
                throw DivergenceError("free_run: |x| exceeded divergence limit at step " + std::to_string(s),
                                      static_cast<std::int64_t>(s));
        }
        std::copy_n(inputs.begin() + static_cast<std::ptrdiff_t>(s * e.n_inputs), e.n_inputs, row.begin());
        std::copy(next.begin(), next.end(), row.begin() + static_cast<std::ptrdiff_t>(e.n_inputs));
        buffer.push(row);
        out.append(row);
    }
    return out;
}

TimeSeries free_run(const StepPredictor& model, const TimeSeries& region) {
    const std::size_t warm = model.embedding().warmup_samples();
    if (region.length() < warm) return free_run(model, region, {}, 0);
    const std::size_t steps = region.length() - warm;
    const std::size_t m = region.n_inputs();
    std::vector<double> inputs(steps * m);
    for (std::size_t s = 0; s < steps; ++s)
        for (std::size_t i = 0; i < m; ++i) inputs[s * m + i] = region.at(warm + s, i);
    TimeSeries head = region.segment(0, warm).without_hidden();
    return free_run(model, head, inputs, steps);
}

LossAndGradient step_loss_and_grad(const StepPredictor& model, std::span<const std::int64_t> indices,
                                   const HistoryBuffer& history, Tape& tape) {
    if (indices.empty()) throw ContractError("step_loss_and_grad: empty batch");
    const auto& e = model.embedding();
    tape.clear();
    const Binding b = model.bind(tape);
    std::vector<Var> errors;
    errors.reserve(indices.size());
    for (std::int64_t k : indices) {
        Var pred = model.record_step(tape, b, history, k);
        Var target = tape.constant(history.sample(k + 1).subspan(e.n_inputs, e.n_states));
        Var diff = tape.sub(pred, target);
        errors.push_back(tape.sum(tape.mul(diff, diff)));
    }
    Var total = tape.sum(tape.concat(errors));
    Var loss = tape.scalar_mul(total, 1.0 / static_cast<double>(indices.size() * e.n_states));
    LossAndGradient out;
    out.loss = tape.scalar(loss);
    out.gradient = nn::loss_gradient(tape, loss, model.parameter_count());
    return out;
}

LossAndGradient step_loss_and_grad(const StepPredictor& model, std::span<const std::int64_t> indices,
                                   const HistoryBuffer& history) {
    Tape tape;
    return step_loss_and_grad(model, indices, history, tape);
}

// ---------------------------------------------------------------------------
// Model files

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += fmt(v[i]);
    }
    return s;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += v[i];
    }
    return s;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

struct Record {
    std::string tag;
    std::string word;
    std::map<std::string, std::string> fields;

    const std::string& get(const std::string& key) const {
        auto it = fields.find(key);
        if (it == fields.end()) throw ContractError("model file: '" + tag + "' line lacks '" + key + "'");
        return it->second;
    }
};

Record read_record(std::istream& in, const std::string& expected) {
    std::string line;
    if (!std::getline(in, line)) throw ContractError("model file: missing '" + expected + "' line");
    std::istringstream ls(line);
    Record r;
    ls >> r.tag;
    if (r.tag != expected) throw ContractError("model file: expected '" + expected + "', found '" + line + "'");
    for (std::string tok; ls >> tok;) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) {
            if (!r.word.empty()) throw ContractError("model file: malformed field '" + tok + "'");
            r.word = tok;
            continue;
        }
        r.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return r;
}

void write_common(std::ostream& out, const EmbeddingSpec& e, const Normalizer& norm) {
    out << "embedding tau=" << fmt(e.tau) << " dimension=" << e.dimension << " n_states=" << e.n_states
        << " n_inputs=" << e.n_inputs << " ts=" << fmt(e.ts) << '\n';
    out << "normalizer mean=" << join(norm.mean) << " std=" << join(norm.stddev) << '\n';
}

}  // namespace

void save_model(std::ostream& out, const StepPredictor& model) {
    out << "greybox-model v1\n";
    if (const auto* gb = dynamic_cast<const GreyBoxModel*>(&model)) {
        const PhysicsModel phys = gb->physics();
        out << "type grey-box\n";
        write_common(out, gb->embedding(), gb->normalizer());
        out << "physics law=" << phys.law->name();
        for (const auto& c : phys.law->known_constants()) out << ' ' << c.name << '=' << fmt(c.value);
        out << '\n';
        out << "prior kind=" << (phys.prior == PriorKind::Unit ? "unit" : "phenomenological")
            << " composition=" << (phys.composition == PriorComposition::Multiplicative ? "multiplicative" : "additive")
            << " constants=" << join(phys.priors.as_vector()) << '\n';
        out << "phi mean=" << join(phys.phi_mean) << " std=" << join(phys.phi_std) << '\n';
        out << "beta names=" << join(phys.beta_names()) << " values=" << join(phys.beta_values())
            << " raw=" << join(phys.beta_raw) << '\n';
        nn::write_checkpoint(out, gb->mlp_spec(), gb->mlp_params());
    } else if (const auto* bb = dynamic_cast<const BlackBoxModel*>(&model)) {
        out << "type black-box\n";
        write_common(out, bb->embedding(), bb->normalizer());
        nn::write_checkpoint(out, bb->mlp_spec(), bb->mlp_params());
    } else {
        throw ContractError("save_model: only grey-box and black-box models are serializable");
    }
}

std::unique_ptr<StepPredictor> load_model(std::istream& in) {
    std::string magic;
    if (!std::getline(in, magic) || magic != "greybox-model v1") throw ContractError("model file: bad magic line");
    const Record type = read_record(in, "type");
    const Record emb = read_record(in, "embedding");
    EmbeddingSpec e;
    e.tau = std::stod(emb.get("tau"));
    e.dimension = std::stoul(emb.get("dimension"));
    e.n_states = std::stoul(emb.get("n_states"));
    e.n_inputs = std::stoul(emb.get("n_inputs"));
    e.ts = std::stod(emb.get("ts"));
    const Record nrec = read_record(in, "normalizer");
    Normalizer norm{split_doubles(nrec.get("mean")), split_doubles(nrec.get("std"))};

    if (type.word == "black-box") {
        auto cp = nn::read_checkpoint(in);
        auto model = std::make_unique<BlackBoxModel>(cp.spec, e, norm);
        model->set_mlp_params(cp.params);
        return model;
    }
    if (type.word != "grey-box") throw ContractError("model file: unknown model type '" + type.word + "'");

    const Record phys = read_record(in, "physics");
    std::vector<NamedValue> constants;
    for (const auto& [key, value] : phys.fields)
        if (key != "law") constants.push_back({key, std::stod(value)});
    PhysicsModel physics(make_law(phys.get("law"), constants));

    const Record prior = read_record(in, "prior");
    physics.prior = prior.get("kind") == "unit" ? PriorKind::Unit : PriorKind::Phenomenological;
    physics.composition = prior.get("composition") == "additive" ? PriorComposition::Additive
                                                                 : PriorComposition::Multiplicative;
    physics.priors = PhenomPriors::from_vector(split_doubles(prior.get("constants")));

    const Record phi = read_record(in, "phi");
    physics.phi_mean = split_doubles(phi.get("mean"));
    physics.phi_std = split_doubles(phi.get("std"));

    const Record beta = read_record(in, "beta");
    const auto raw = split_doubles(beta.get("raw"));
    if (raw.size() != physics.beta_raw.size() || split_words(beta.get("names")) != physics.beta_names())
        throw ContractError("model file: trainable constants do not match the physics law");
    physics.beta_raw = raw;

    auto cp = nn::read_checkpoint(in);
    auto model = std::make_unique<GreyBoxModel>(cp.spec, std::move(physics), e, norm);
    model->set_mlp_params(cp.params);
    return model;
}

}  // namespace greybox
