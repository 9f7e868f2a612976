#include "hef/sem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hef/error.hpp"
#include "hef/random.hpp"

namespace hef {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void softmax_inplace(std::span<double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

// Intermediate values of one forward pass, kept for backprop.
struct Trace {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> hidden;  // n x d, tanh activations
    std::vector<double> attention;
    std::vector<double> context;
    std::array<double, kNumEmotions> probs{};
};

Trace run_forward(const SemParams& p, std::span<const std::size_t> ids) {
    Trace t;
    t.n = ids.size();
    t.d = p.attn_bias.size();
    const std::size_t d = t.d;
    t.hidden.assign(t.n * d, 0.0);
    t.attention.assign(t.n, 0.0);
    for (std::size_t i = 0; i < t.n; ++i) {
        const auto e = p.embeddings.row(ids[i]);
        double score = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            const auto w = p.attn_proj.row(r);
            double u = p.attn_bias[r];
            for (std::size_t c = 0; c < d; ++c) u += w[c] * e[c];
            const double h = std::tanh(u);
            t.hidden[i * d + r] = h;
            score += p.attn_query[r] * h;
        }
        t.attention[i] = score;
    }
    softmax_inplace(t.attention);

    t.context.assign(d, 0.0);
    for (std::size_t i = 0; i < t.n; ++i) {
        const auto e = p.embeddings.row(ids[i]);
        for (std::size_t c = 0; c < d; ++c) t.context[c] += t.attention[i] * e[c];
    }
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
        const auto w = p.cls_weight.row(k);
        double z = p.cls_bias[k];
        for (std::size_t c = 0; c < d; ++c) z += w[c] * t.context[c];
        t.probs[k] = z;
    }
    softmax_inplace(t.probs);
    return t;
}

// Accumulates scale * d(-log p[label]) into grad.
void backward(const SemParams& p, std::span<const std::size_t> ids, const Trace& t, std::size_t label,
              double scale, SemParams& grad) {
    const std::size_t d = t.d;
    std::array<double, kNumEmotions> dz{};
    for (std::size_t k = 0; k < kNumEmotions; ++k) dz[k] = scale * (t.probs[k] - (k == label ? 1.0 : 0.0));

    std::vector<double> dctx(d, 0.0);
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
        grad.cls_bias[k] += dz[k];
        auto gw = grad.cls_weight.row(k);
        const auto w = p.cls_weight.row(k);
        for (std::size_t c = 0; c < d; ++c) {
            gw[c] += dz[k] * t.context[c];
            dctx[c] += w[c] * dz[k];
        }
    }

    // gradient through the attention softmax
    std::vector<double> dattn(t.n, 0.0);
    double weighted = 0.0;
    for (std::size_t i = 0; i < t.n; ++i) {
        const auto e = p.embeddings.row(ids[i]);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += dctx[c] * e[c];
        dattn[i] = s;
        weighted += t.attention[i] * s;
    }

    std::vector<double> du(d);
    for (std::size_t i = 0; i < t.n; ++i) {
        const double dscore = t.attention[i] * (dattn[i] - weighted);
        const double* h = t.hidden.data() + i * d;
        for (std::size_t r = 0; r < d; ++r) {
            grad.attn_query[r] += dscore * h[r];
            du[r] = dscore * p.attn_query[r] * (1.0 - h[r] * h[r]);
            grad.attn_bias[r] += du[r];
        }
        const auto e = p.embeddings.row(ids[i]);
        auto ge = grad.embeddings.row(ids[i]);
        for (std::size_t c = 0; c < d; ++c) ge[c] += t.attention[i] * dctx[c];
        for (std::size_t r = 0; r < d; ++r) {
            if (du[r] == 0.0) continue;
            auto gw = grad.attn_proj.row(r);
            const auto w = p.attn_proj.row(r);
            for (std::size_t c = 0; c < d; ++c) {
                gw[c] += du[r] * e[c];
                ge[c] += w[c] * du[r];
            }
        }
    }
}

std::size_t argmax(const std::array<double, kNumEmotions>& probs) {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<EncodedExample> encode_all(const SemModel& model, std::span<const Dialogue> ds) {
    std::vector<EncodedExample> out;
    out.reserve(ds.size());
    for (const auto& d : ds) out.push_back(encode(model, d));
    return out;
}

json matrix_json(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
    return json{{"rows", rows}, {"cols", cols}, {"data", data}};
}

std::vector<double> read_block(const json& j, const char* name, std::size_t rows, std::size_t cols) {
    if (!j.contains(name)) throw Error(ErrorKind::data, std::string("checkpoint missing '") + name + "'");
    const auto& b = j.at(name);
    if (b.at("rows").get<std::size_t>() != rows || b.at("cols").get<std::size_t>() != cols)
        throw Error(ErrorKind::data, std::string("checkpoint block '") + name + "' has the wrong shape");
    auto data = b.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols)
        throw Error(ErrorKind::data, std::string("checkpoint block '") + name + "' has the wrong size");
    return data;
}

}  // namespace

// --- parameters ------------------------------------------------------------

SemParams SemParams::zeros(std::size_t vocab_size, std::size_t dim) {
    SemParams p;
    p.embeddings = Matrix(vocab_size, dim);
    p.attn_proj = Matrix(dim, dim);
    p.attn_bias.assign(dim, 0.0);
    p.attn_query.assign(dim, 0.0);
    p.cls_weight = Matrix(kNumEmotions, dim);
    p.cls_bias.assign(kNumEmotions, 0.0);
    return p;
}

std::array<std::span<double>, 6> SemParams::groups() {
    return {std::span<double>(embeddings.data()), std::span<double>(attn_proj.data()), std::span<double>(attn_bias),
            std::span<double>(attn_query), std::span<double>(cls_weight.data()), std::span<double>(cls_bias)};
}

std::array<std::span<const double>, 6> SemParams::groups() const {
    return {std::span<const double>(embeddings.data()), std::span<const double>(attn_proj.data()),
            std::span<const double>(attn_bias),          std::span<const double>(attn_query),
            std::span<const double>(cls_weight.data()), std::span<const double>(cls_bias)};
}

bool SemParams::all_finite() const {
    for (const auto g : groups())
        for (double x : g)
            if (!std::isfinite(x)) return false;
    return true;
}

// --- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() { add(kUnknownToken); }

void Vocabulary::add(const std::string& token) {
    if (index_.try_emplace(token, tokens_.size()).second) tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const Tokens> docs, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    std::vector<std::string> order;
    for (const auto& doc : docs)
        for (const auto& w : doc)
            if (counts[w]++ == 0) order.push_back(w);
    Vocabulary v;
    for (const auto& w : order)
        if (counts[w] >= min_count && w != kUnknownToken) v.add(w);
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.empty() || tokens.front() != kUnknownToken)
        throw Error(ErrorKind::data, "vocabulary must start with the unknown token");
    Vocabulary v;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (v.index_.contains(tokens[i])) throw Error(ErrorKind::data, "duplicate vocabulary token '" + tokens[i] + "'");
        v.add(tokens[i]);
    }
    return v;
}

std::size_t Vocabulary::lookup(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> words) const {
    std::vector<std::size_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(lookup(w));
    return ids;
}

// --- model -----------------------------------------------------------------

SemModel init_model(Vocabulary vocab, const SemHyperparams& hyper) {
    if (hyper.dim < 2) throw Error(ErrorKind::config, "SEM dimension must be at least 2");
    SemModel m{std::move(vocab), SemParams::zeros(0, 0), hyper};
    m.params = SemParams::zeros(m.vocab.size(), hyper.dim);
    Rng rng(hyper.seed);
    for (double& x : m.params.embeddings.data()) x = rng.uniform(-hyper.init_scale, hyper.init_scale);
    const double proj = std::sqrt(3.0 / static_cast<double>(hyper.dim));
    for (double& x : m.params.attn_proj.data()) x = rng.uniform(-proj, proj);
    for (double& x : m.params.attn_query) x = rng.uniform(-hyper.init_scale, hyper.init_scale);
    return m;
}

EncodedExample encode(const SemModel& model, const Dialogue& d) {
    const Tokens words = context_words(d);
    return {model.vocab.encode(words), d.gold_emotion};
}

Forward forward(const SemModel& model, std::span<const std::size_t> token_ids) {
    if (token_ids.empty()) throw Error(ErrorKind::data, "SEM input has no tokens");
    Trace t = run_forward(model.params, token_ids);
    return {std::move(t.attention), t.probs};
}

LossAndGrad loss_and_grad(const SemModel& model, std::span<const EncodedExample> batch) {
    if (batch.empty()) throw Error(ErrorKind::data, "loss_and_grad needs a nonempty batch");
    LossAndGrad out{0.0, SemParams::zeros(model.vocab.size(), model.params.attn_bias.size())};
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        if (ex.token_ids.empty()) throw Error(ErrorKind::data, "training example has no tokens");
        const Trace t = run_forward(model.params, ex.token_ids);
        out.loss -= scale * std::log(t.probs[ex.label.index()]);
        backward(model.params, ex.token_ids, t, ex.label.index(), scale, out.grad);
    }
    return out;
}

LossAndGrad loss_and_grad(const SemModel& model, std::span<const Dialogue> dialogues,
                          std::span<const EmotionLabel> labels) {
    if (dialogues.size() != labels.size()) throw Error(ErrorKind::data, "dialogue/label count mismatch");
    std::vector<EncodedExample> batch;
    for (std::size_t i = 0; i < dialogues.size(); ++i) batch.push_back({model.vocab.encode(context_words(dialogues[i])), labels[i]});
    return loss_and_grad(model, batch);
}

double mean_loss(const SemModel& model, std::span<const EncodedExample> batch) {
    double loss = 0.0;
    for (const auto& ex : batch) loss -= std::log(run_forward(model.params, ex.token_ids).probs[ex.label.index()]);
    return loss / static_cast<double>(batch.size());
}

double sem_accuracy(const SemModel& model, std::span<const EncodedExample> data) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& ex : data)
        if (argmax(run_forward(model.params, ex.token_ids).probs) == ex.label.index()) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

SemModel train_sem(std::span<const Dialogue> train, std::span<const Dialogue> valid, const TrainOptions& opts) {
    if (train.empty()) throw Error(ErrorKind::data, "training set is empty");
    const SemHyperparams& hp = opts.hyper;
    if (hp.batch_size == 0) throw Error(ErrorKind::config, "batch size must be positive");

    std::vector<Tokens> docs;
    docs.reserve(train.size());
    for (const auto& d : train) docs.push_back(context_words(d));
    SemModel model = init_model(Vocabulary::build(docs, hp.min_count), hp);

    const auto train_set = encode_all(model, train);
    const auto valid_set = encode_all(model, valid);
    const auto& select_set = valid_set.empty() ? train_set : valid_set;

    SemParams velocity = SemParams::zeros(model.vocab.size(), hp.dim);
    SemParams best = model.params;
    double best_acc = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    double lr = hp.learning_rate;
    Rng rng(hp.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<EncodedExample> batch;

    for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start + hp.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
            LossAndGrad lg = loss_and_grad(model, batch);
            if (!std::isfinite(lg.loss))
                throw Error(ErrorKind::numeric, "SEM training diverged in epoch " + std::to_string(epoch));
            epoch_loss += lg.loss * static_cast<double>(batch.size());

            auto params = model.params.groups();
            auto vel = velocity.groups();
            const auto grads = lg.grad.groups();
            for (std::size_t g = 0; g < params.size(); ++g) {
                for (std::size_t i = 0; i < params[g].size(); ++i) {
                    vel[g][i] = hp.momentum * vel[g][i] + grads[g][i];
                    params[g][i] -= lr * vel[g][i];
                }
            }
        }
        if (!model.params.all_finite())
            throw Error(ErrorKind::numeric, "SEM training diverged in epoch " + std::to_string(epoch));

        // selection follows accuracy; the schedule follows the smoother loss
        const double acc = sem_accuracy(model, select_set);
        const double sel_loss = mean_loss(model, select_set);
        if (acc > best_acc) {
            best_acc = acc;
            best = model.params;
        }
        if (sel_loss < best_loss) {
            best_loss = sel_loss;
        } else {
            lr *= hp.lr_decay;
        }
        if (opts.on_epoch)
            opts.on_epoch({epoch, epoch_loss / static_cast<double>(order.size()), acc, lr});
    }
    model.params = std::move(best);
    return model;
}

// --- annotations -----------------------------------------------------------

SemAnnotation annotate(const SemModel& model, const Dialogue& d) {
    const Tokens words = context_words(d);
    if (words.empty()) throw Error(ErrorKind::data, "dialogue " + d.id + " has an empty context");
    const auto ids = model.vocab.encode(words);
    const Trace t = run_forward(model.params, ids);
    SemAnnotation a;
    a.dialogue_id = d.id;
    a.emotion_probs = t.probs;
    a.attention.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) a.attention.push_back({words[i], t.attention[i]});
    return a;
}

std::vector<EmotionLabel> top_k_emotions(const SemAnnotation& a, std::size_t k) {
    if (k < 1 || k > kNumEmotions)
        throw Error(ErrorKind::config, "k must lie in [1, 32], got " + std::to_string(k));
    std::array<std::size_t, kNumEmotions> idx{};
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t x, std::size_t y) { return a.emotion_probs[x] > a.emotion_probs[y]; });
    std::vector<EmotionLabel> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(EmotionLabel::from_index(idx[i]));
    return out;
}

void validate_annotation(const SemAnnotation& a, double tolerance) {
    const auto fail = [&](const std::string& what) {
        throw Error(ErrorKind::data, "annotation '" + a.dialogue_id + "': " + what);
    };
    if (a.dialogue_id.empty()) fail("empty dialogue_id");
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
        const double p = a.emotion_probs[k];
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            fail("probability for '" + std::string(kEmotionNames[k]) + "' outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) fail("emotion probabilities sum to " + std::to_string(sum));
    if (a.attention.empty()) fail("empty attention list");
    sum = 0.0;
    for (const auto& e : a.attention) {
        if (e.word.empty()) fail("empty attention word");
        if (!std::isfinite(e.weight) || e.weight < 0.0 || e.weight > 1.0)
            fail("attention weight for '" + e.word + "' outside [0,1]");
        sum += e.weight;
    }
    if (std::abs(sum - 1.0) > tolerance) fail("attention weights sum to " + std::to_string(sum));
}

std::string annotation_to_json(const SemAnnotation& a) {
    ordered_json j;
    j["dialogue_id"] = a.dialogue_id;
    ordered_json probs = ordered_json::object();
    for (std::size_t k = 0; k < kNumEmotions; ++k) probs[std::string(kEmotionNames[k])] = a.emotion_probs[k];
    j["emotion_probs"] = std::move(probs);
    ordered_json attn = ordered_json::array();
    for (const auto& e : a.attention) attn.push_back({{"word", e.word}, {"weight", e.weight}});
    j["attention"] = std::move(attn);
    return j.dump();
}

SemAnnotation annotation_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::data, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::data, "annotation must be a JSON object");
    for (const char* key : {"dialogue_id", "emotion_probs", "attention"})
        if (!j.contains(key)) throw Error(ErrorKind::data, std::string("missing field '") + key + "'");
    if (!j["dialogue_id"].is_string()) throw Error(ErrorKind::data, "dialogue_id must be a string");
    if (!j["emotion_probs"].is_object()) throw Error(ErrorKind::data, "emotion_probs must be an object");
    if (!j["attention"].is_array()) throw Error(ErrorKind::data, "attention must be an array");

    SemAnnotation a;
    a.dialogue_id = j["dialogue_id"].get<std::string>();
    std::array<bool, kNumEmotions> seen{};
    for (const auto& [name, value] : j["emotion_probs"].items()) {
        const auto label = EmotionLabel::from_name(name);
        if (!label) throw Error(ErrorKind::data, "unknown emotion label '" + name + "'");
        if (!value.is_number()) throw Error(ErrorKind::data, "probability for '" + name + "' is not a number");
        a.emotion_probs[label->index()] = value.get<double>();
        seen[label->index()] = true;
    }
    for (std::size_t k = 0; k < kNumEmotions; ++k)
        if (!seen[k]) throw Error(ErrorKind::data, "missing emotion label '" + std::string(kEmotionNames[k]) + "'");
    for (const auto& item : j["attention"]) {
        if (!item.is_object() || !item.contains("word") || !item.contains("weight") || !item["word"].is_string() ||
            !item["weight"].is_number())
            throw Error(ErrorKind::data, "attention entries need a string 'word' and a numeric 'weight'");
        a.attention.push_back({item["word"].get<std::string>(), item["weight"].get<double>()});
    }
    return a;
}

void write_annotations(const std::filesystem::path& path, std::span<const SemAnnotation> annotations) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write " + path.string());
    for (const auto& a : annotations) out << annotation_to_json(a) << '\n';
}

std::vector<SemAnnotation> load_external_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::data, "cannot open annotations " + path.string());
    std::vector<SemAnnotation> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            SemAnnotation a = annotation_from_json(line);
            validate_annotation(a);
            out.push_back(std::move(a));
        } catch (const Error& e) {
            throw Error(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error(ErrorKind::data, "annotation file " + path.string() + " is empty");
    return out;
}

// --- checkpoints -----------------------------------------------------------

void save_model(const SemModel& model, const std::filesystem::path& path) {
    const auto& p = model.params;
    const auto& h = model.hyper;
    const std::size_t d = h.dim;
    ordered_json j;
    j["format"] = "hef-sem";
    j["version"] = 1;
    j["hyperparams"] = {{"dim", h.dim},           {"learning_rate", h.learning_rate}, {"momentum", h.momentum},
                        {"lr_decay", h.lr_decay}, {"batch_size", h.batch_size},       {"epochs", h.epochs},
                        {"min_count", h.min_count}, {"init_scale", h.init_scale},     {"seed", h.seed}};
    j["vocab"] = model.vocab.tokens();
    j["embeddings"] = matrix_json(p.embeddings.rows(), d, p.embeddings.data());
    j["attn_proj"] = matrix_json(d, d, p.attn_proj.data());
    j["attn_bias"] = matrix_json(1, d, p.attn_bias);
    j["attn_query"] = matrix_json(1, d, p.attn_query);
    j["cls_weight"] = matrix_json(kNumEmotions, d, p.cls_weight.data());
    j["cls_bias"] = matrix_json(1, kNumEmotions, p.cls_bias);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
}

SemModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::data, "cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
        if (j.value("format", "") != "hef-sem") throw Error(ErrorKind::data, "not a hef-sem checkpoint");
        if (j.value("version", 0) != 1) throw Error(ErrorKind::data, "unsupported checkpoint version");
        const auto& hj = j.at("hyperparams");
        SemHyperparams h;
        h.dim = hj.at("dim").get<std::size_t>();
        h.learning_rate = hj.at("learning_rate").get<double>();
        h.momentum = hj.at("momentum").get<double>();
        h.lr_decay = hj.at("lr_decay").get<double>();
        h.batch_size = hj.at("batch_size").get<std::size_t>();
        h.epochs = hj.at("epochs").get<std::size_t>();
        h.min_count = hj.at("min_count").get<std::size_t>();
        h.init_scale = hj.at("init_scale").get<double>();
        h.seed = hj.at("seed").get<std::uint64_t>();

        SemModel m{Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>()), SemParams::zeros(0, 0), h};
        const std::size_t v = m.vocab.size(), d = h.dim;
        m.params = SemParams::zeros(v, d);
        m.params.embeddings.data() = read_block(j, "embeddings", v, d);
        m.params.attn_proj.data() = read_block(j, "attn_proj", d, d);
        m.params.attn_bias = read_block(j, "attn_bias", 1, d);
        m.params.attn_query = read_block(j, "attn_query", 1, d);
        m.params.cls_weight.data() = read_block(j, "cls_weight", kNumEmotions, d);
        m.params.cls_bias = read_block(j, "cls_bias", 1, kNumEmotions);
        if (!m.params.all_finite()) throw Error(ErrorKind::data, "checkpoint contains non-finite values");
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::data, "malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace hef
