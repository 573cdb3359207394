#pragma once
// Brute-force reference implementations. Deliberately naive: O(n^2) pair
// counting and textbook two-pass formulas, sharing no code with the library.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

using Opt = std::optional<double>;

// 1-based average rank of each value: (#less) + (#equal + 1) / 2.
inline std::vector<double> avg_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (x[j] < x[i]) ++less;
            if (x[j] == x[i]) ++equal;
        }
        r[i] = static_cast<double>(less) + static_cast<double>(equal + 1) / 2.0;
    }
    return r;
}

inline std::vector<Opt> percentiles(const std::vector<Opt>& x) {
    std::vector<double> present;
    for (const auto& v : x) {
        if (v) present.push_back(*v);
    }
    const double n = static_cast<double>(present.size());
    std::vector<Opt> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!x[i]) continue;
        std::size_t less = 0, equal = 0;
        for (double p : present) {
            if (p < *x[i]) ++less;
            if (p == *x[i]) ++equal;
        }
        const double rank = static_cast<double>(less) + static_cast<double>(equal + 1) / 2.0;
        out[i] = 100.0 * rank / n;
    }
    return out;
}

inline int quintile(double p) {
    if (p <= 20.0) return 1;
    if (p <= 40.0) return 2;
    if (p <= 60.0) return 3;
    if (p <= 80.0) return 4;
    return 5;
}

inline double mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(avg_ranks(a), avg_ranks(b));
}

struct PairCounts {
    std::uint64_t concordant = 0, discordant = 0, ties_a = 0, ties_b = 0, ties_both = 0, pairs = 0;
};

inline PairCounts kendall_pairs(const std::vector<double>& a, const std::vector<double>& b) {
    PairCounts c;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            ++c.pairs;
            const bool ta = a[i] == a[j], tb = b[i] == b[j];
            if (ta) ++c.ties_a;
            if (tb) ++c.ties_b;
            if (ta && tb) ++c.ties_both;
            if (ta || tb) continue;
            if ((a[i] < a[j]) == (b[i] < b[j])) {
                ++c.concordant;
            } else {
                ++c.discordant;
            }
        }
    }
    return c;
}

// Two-pass z-score over the non-missing subset. Population: divide by n.
inline std::vector<Opt> zscore(const std::vector<Opt>& x, bool sample = false) {
    std::vector<double> present;
    for (const auto& v : x) {
        if (v) present.push_back(*v);
    }
    std::vector<Opt> out(x.size());
    bool constant = true;
    for (double v : present) constant = constant && v == present.front();
    const double m = mean(present);
    double ss = 0.0;
    for (double v : present) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(sample ? present.size() - 1 : present.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i]) out[i] = constant ? 0.0 : (*x[i] - m) / sd;
    }
    return out;
}

struct Term {
    std::string attribute;
    int sign = 1;
    std::string group;
};

using Frame = std::map<std::string, std::vector<Opt>>;

// raw_u = sum_t sign_t * z_t(u); missing if any term input is missing.
inline std::vector<Opt> additive(const Frame& frame, const std::vector<Term>& terms, std::size_t n, bool sample = false) {
    std::map<std::string, std::vector<Opt>> z;
    for (const auto& t : terms) z[t.attribute] = zscore(frame.at(t.attribute), sample);
    std::vector<Opt> raw(n);
    for (std::size_t u = 0; u < n; ++u) {
        double s = 0.0;
        bool ok = true;
        for (const auto& t : terms) {
            const Opt& v = z[t.attribute][u];
            if (!v) {
                ok = false;
                break;
            }
            s += t.sign * *v;
        }
        if (ok) raw[u] = s;
    }
    return raw;
}

inline std::vector<Opt> hierarchical(const Frame& frame, const std::vector<Term>& terms, std::size_t n) {
    std::vector<std::string> groups;
    for (const auto& t : terms) {
        bool seen = false;
        for (const auto& g : groups) seen = seen || g == t.group;
        if (!seen) groups.push_back(t.group);
    }
    std::vector<double> total(n, 0.0);
    std::vector<bool> ok(n, true);
    for (const auto& g : groups) {
        std::vector<Term> members;
        for (const auto& t : terms) {
            if (t.group == g) members.push_back(t);
        }
        const auto pct = percentiles(additive(frame, members, n));
        for (std::size_t u = 0; u < n; ++u) {
            if (pct[u]) {
                total[u] += *pct[u];
            } else {
                ok[u] = false;
            }
        }
    }
    std::vector<Opt> raw(n);
    for (std::size_t u = 0; u < n; ++u) {
        if (ok[u]) raw[u] = total[u] / static_cast<double>(groups.size());
    }
    return raw;
}

}  // namespace oracle
