#include "sepdgp/arch.hpp"

#include <charconv>
#include <sstream>

namespace sepdgp::arch {

namespace {

int parse_positive_int(const std::string& token, const std::string& text) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size() || value < 1) {
        throw ParseError("invalid architecture \"" + text + "\": bad count \"" + token + "\"");
    }
    return value;
}

}  // namespace

Architecture parse(const std::string& text) {
    Architecture a;
    if (text.empty() || text.back() == ',') {
        throw ParseError("invalid architecture \"" + text + "\"");
    }
    std::vector<std::string> tokens;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) tokens.push_back(token);
    if (tokens.empty()) throw ParseError("empty architecture string");

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto at = tokens[i].find('@');
        if (at == std::string::npos) {
            throw ParseError("invalid architecture \"" + text + "\": layer spec \"" + tokens[i] +
                             "\" lacks '@'");
        }
        const std::string head = tokens[i].substr(0, at);
        const std::string tail = tokens[i].substr(at + 1);
        const int m = parse_positive_int(tail, text);
        if (i + 1 == tokens.size()) {
            if (head != "y") {
                throw ParseError("invalid architecture \"" + text + "\": last layer must be y@M");
            }
            a.final_inducing = m;
        } else {
            if (head == "y") {
                throw ParseError("invalid architecture \"" + text + "\": y@M only allowed last");
            }
            a.hidden.push_back(HiddenSpec{parse_positive_int(head, text), m});
        }
    }
    return a;
}

std::string to_string(const Architecture& a) {
    std::ostringstream out;
    for (const auto& h : a.hidden) out << h.dim << '@' << h.n_inducing << ',';
    out << "y@" << a.final_inducing;
    return out.str();
}

}  // namespace sepdgp::arch
