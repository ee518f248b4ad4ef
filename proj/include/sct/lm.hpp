#ifndef SCT_LM_HPP
#define SCT_LM_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sct {

// Character alphabet shared across modules. Class index 0 is the CTC blank;
// characters occupy 1..size(). Characters are single bytes here; the on-disk
// alphabet file is UTF-8, one character per line.
class Alphabet {
public:
    Alphabet() = default;
    explicit Alphabet(const std::vector<std::string>& chars);

    static Alphabet load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const { return chars_.size(); }   // excludes blank
    std::size_t num_classes() const { return chars_.size() + 1; }
    const std::string& character(int label) const;       // label in 1..size()
    int label_of(const std::string& ch) const;           // 0 if unknown
    bool contains(const std::string& ch) const { return label_of(ch) != 0; }

    std::string decode(const std::vector<int>& labels) const;
    std::vector<int> encode(const std::string& text) const;  // throws UnknownSymbol

private:
    std::vector<std::string> chars_;
    std::map<std::string, int> index_;
};

// Character-level n-gram model with fixed-lambda recursive interpolation.
// Counts are gathered within whitespace-delimited words only.
class NGramModel {
public:
    NGramModel() = default;
    NGramModel(std::size_t order, Alphabet alphabet, double lambda);

    // Accumulate counts from a corpus stream; characters outside the alphabet
    // are dropped (counted in skipped_chars).
    static NGramModel train(std::istream& corpus, std::size_t order,
                            const Alphabet& alphabet, double lambda);

    // log P(k | history), interpolated down to the uniform base case.
    double log_prob(int label, const std::vector<int>& history) const;

    void save(const std::string& path) const;
    static NGramModel load(const std::string& path);

    std::size_t order() const { return order_; }
    double lambda() const { return lambda_; }
    const Alphabet& alphabet() const { return alphabet_; }
    std::uint64_t skipped_chars() const { return skipped_chars_; }

private:
    void add_word(const std::vector<int>& labels);
    double prob(int label, const std::vector<int>& context) const;

    std::size_t order_ = 5;
    double lambda_ = 0.9;
    Alphabet alphabet_;
    std::uint64_t skipped_chars_ = 0;
    // context (label string of length 0..order-1) -> symbol -> count
    std::map<std::vector<int>, std::map<int, std::uint64_t>> counts_;
    std::map<std::vector<int>, std::uint64_t> context_totals_;
};

}  // namespace sct

#endif  // SCT_LM_HPP
