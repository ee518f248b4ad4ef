#include "sct/lm.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "sct/errors.hpp"

namespace sct {

namespace {

// Split a UTF-8 string into code-point substrings.
std::vector<std::string> utf8_chars(const std::string& s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char b = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        if ((b & 0xE0) == 0xC0) len = 2;
        else if ((b & 0xF0) == 0xE0) len = 3;
        else if ((b & 0xF8) == 0xF0) len = 4;
        len = std::min(len, s.size() - i);
        out.push_back(s.substr(i, len));
        i += len;
    }
    return out;
}

}  // namespace

Alphabet::Alphabet(const std::vector<std::string>& chars) : chars_(chars) {
    for (std::size_t i = 0; i < chars_.size(); ++i) {
        if (chars_[i].empty()) throw InvalidInput("alphabet: empty character");
        if (!index_.emplace(chars_[i], static_cast<int>(i) + 1).second)
            throw InvalidInput("alphabet: duplicate character '" + chars_[i] + "'");
    }
}

Alphabet Alphabet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open alphabet: " + path);
    std::vector<std::string> chars;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        chars.push_back(line);
    }
    if (chars.empty()) throw InvalidInput("empty alphabet: " + path);
    return Alphabet(chars);
}

void Alphabet::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write alphabet: " + path);
    for (const auto& c : chars_) out << c << "\n";
}

const std::string& Alphabet::character(int label) const {
    if (label < 1 || static_cast<std::size_t>(label) > chars_.size())
        throw InvalidInput("alphabet: label out of range");
    return chars_[static_cast<std::size_t>(label) - 1];
}

int Alphabet::label_of(const std::string& ch) const {
    const auto it = index_.find(ch);
    return it == index_.end() ? 0 : it->second;
}

std::string Alphabet::decode(const std::vector<int>& labels) const {
    std::string out;
    for (int l : labels) out += character(l);
    return out;
}

std::vector<int> Alphabet::encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& c : utf8_chars(text)) {
        const int label = label_of(c);
        if (label == 0) throw UnknownSymbol("character '" + c + "' not in alphabet");
        out.push_back(label);
    }
    return out;
}

NGramModel::NGramModel(std::size_t order, Alphabet alphabet, double lambda)
    : order_(order), lambda_(lambda), alphabet_(std::move(alphabet)) {
    if (order_ < 1) throw InvalidConfig("ngram order must be >= 1");
    if (!(lambda_ >= 0.0 && lambda_ < 1.0)) throw InvalidConfig("lambda must be in [0,1)");
}

void NGramModel::add_word(const std::vector<int>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t max_ctx = std::min(order_ - 1, i);
        for (std::size_t c = 0; c <= max_ctx; ++c) {
            std::vector<int> ctx(labels.begin() + static_cast<long>(i - c),
                                 labels.begin() + static_cast<long>(i));
            counts_[ctx][labels[i]]++;
            context_totals_[ctx]++;
        }
    }
}

NGramModel NGramModel::train(std::istream& corpus, std::size_t order,
                             const Alphabet& alphabet, double lambda) {
    NGramModel model(order, alphabet, lambda);
    std::string word;
    bool any = false;
    while (corpus >> word) {
        std::vector<int> labels;
        for (const auto& c : utf8_chars(word)) {
            const int label = alphabet.label_of(c);
            if (label == 0) {
                model.skipped_chars_++;
                continue;
            }
            labels.push_back(label);
        }
        if (labels.empty()) continue;
        model.add_word(labels);
        any = true;
    }
    if (!any) throw EmptyCorpus("no in-alphabet characters in corpus");
    return model;
}

double NGramModel::prob(int label, const std::vector<int>& context) const {
    const double uniform = 1.0 / static_cast<double>(alphabet_.size());
    const auto total_it = context_totals_.find(context);
    if (total_it == context_totals_.end() || total_it->second == 0) {
        // Unseen context: fall through to the next shorter one untouched,
        // which keeps every conditional normalized.
        if (context.empty()) return uniform;
        return prob(label, {context.begin() + 1, context.end()});
    }
    double ml = 0.0;
    const auto& table = counts_.at(context);
    const auto it = table.find(label);
    if (it != table.end())
        ml = static_cast<double>(it->second) / static_cast<double>(total_it->second);
    const double lower = context.empty()
                             ? uniform
                             : prob(label, {context.begin() + 1, context.end()});
    return lambda_ * ml + (1.0 - lambda_) * lower;
}

double NGramModel::log_prob(int label, const std::vector<int>& history) const {
    if (label < 1 || static_cast<std::size_t>(label) > alphabet_.size())
        throw UnknownSymbol("lm: label outside alphabet");
    std::vector<int> context;
    const std::size_t ctx_len = std::min(order_ - 1, history.size());
    context.assign(history.end() - static_cast<long>(ctx_len), history.end());
    return std::log(prob(label, context));
}

void NGramModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write lm: " + path);
    out.precision(17);
    out << "CHARLM v1 " << order_ << " " << lambda_ << " " << alphabet_.size() << "\n";
    for (std::size_t i = 1; i <= alphabet_.size(); ++i)
        out << alphabet_.character(static_cast<int>(i));
    out << "\n";
    for (const auto& [ctx, table] : counts_) {
        std::string ctx_str;
        for (int l : ctx) ctx_str += alphabet_.character(l);
        for (const auto& [sym, count] : table)
            out << ctx_str << "\t" << alphabet_.character(sym) << "\t" << count << "\n";
    }
    if (!out) throw IoError("short write: " + path);
}

NGramModel NGramModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lm: " + path);
    std::string header;
    if (!std::getline(in, header)) throw IncompatibleModel("empty lm file: " + path);
    std::istringstream hs(header);
    std::string magic, version;
    std::size_t order = 0, alpha_size = 0;
    double lambda = 0.0;
    hs >> magic >> version >> order >> lambda >> alpha_size;
    if (!hs || magic != "CHARLM" || version != "v1")
        throw IncompatibleModel("bad lm header: " + path);
    std::string alpha_line;
    if (!std::getline(in, alpha_line)) throw IncompatibleModel("missing alphabet line: " + path);
    const auto chars = utf8_chars(alpha_line);
    if (chars.size() != alpha_size) throw IncompatibleModel("alphabet size mismatch: " + path);

    NGramModel model(order, Alphabet(chars), lambda);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t tab1 = line.find('\t');
        const std::size_t tab2 = line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            throw IncompatibleModel("bad count record: " + path);
        const std::string ctx_str = line.substr(0, tab1);
        const std::string sym_str = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::uint64_t count = std::stoull(line.substr(tab2 + 1));
        std::vector<int> ctx;
        for (const auto& c : utf8_chars(ctx_str)) ctx.push_back(model.alphabet_.encode(c)[0]);
        const int sym = model.alphabet_.encode(sym_str)[0];
        model.counts_[ctx][sym] += count;
        model.context_totals_[ctx] += count;
    }
    return model;
}

}  // namespace sct
