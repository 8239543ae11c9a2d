#pragma once

// Multi-marginal entropic solver.  The Gibbs kernel exp(-c/eps) is never
// materialized: every reduction (marginal contraction, reports, projections,
// support extraction) streams over multi-indices with a small incremental
// state.  Log-domain mode accumulates with a max-shifted log-sum-exp; direct
// mode accumulates plain exponentials.  Every output entry is reduced in a
// fixed index order by a single worker, so results are bit-identical for any
// thread count.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mmot/cost.hpp"
#include "mmot/grid.hpp"

namespace mmot {

struct BudgetError : std::runtime_error {
    double required;
    explicit BudgetError(double req)
        : std::runtime_error("budget exceeded: run requires " +
                             std::to_string(static_cast<long long>(req)) +
                             " multi-index evaluations per contraction"),
          required(req) {}
};

struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolveOptions {
    double epsilon = 0.1;
    double tol = 1e-8;              // max-over-blocks L1 marginal error
    long max_sweeps = 10000;
    std::optional<bool> log_domain; // default: epsilon < 0.05 * cost_scale
    long long budget = 2'000'000'000;  // multi-index evaluations per contraction
    std::vector<double> anneal;     // optional decreasing epsilon schedule
    unsigned threads = 0;           // 0: MMOT_THREADS env var, else hardware
};

struct SolveReport {
    long sweeps = 0;
    std::vector<double> marginal_errors;  // per-block L1, before block update
    double primal_cost = 0.0;
    double entropy = 0.0;        // sum gamma log gamma
    double kl_objective = 0.0;   // KL(gamma | gibbs)
    double dual_value = 0.0;
    double dual_feasibility_violation = 0.0;
    double duality_gap = 0.0;
    bool converged = false;
};

// Implicit coupling gamma(j1..jn) = exp((sum_i u_i[ji] - c(x_j1..x_jn)) / eps).
struct ScalingState {
    CostSpec spec;
    std::vector<DiscreteMeasure> marginals;
    double epsilon = 0.1;
    std::vector<std::vector<double>> log_scalings;  // u_i = eps * log a_i
    bool log_domain = true;
    long long budget = 2'000'000'000;
    unsigned threads = 0;
};

inline double gibbs_weight(const CostSpec& spec, double epsilon,
                           std::span<const double> points) {
    const double c = eval_cost(spec, points);
    if (c == kInf) return 0.0;
    return std::exp(-c / epsilon);
}

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxN = 8;
// exp(t - max) below this cutoff cannot move a log-sum-exp at double precision
constexpr double kExpCut = -46.0;

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* e = std::getenv("MMOT_THREADS")) {
        const long v = std::strtol(e, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned h = std::thread::hardware_concurrency();
    return h ? h : 1;
}

// Static block partition; each output index is owned by one worker.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& fn) {
    threads = static_cast<unsigned>(std::min<std::size_t>(threads ? threads : 1, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t b = t * chunk, e = std::min(count, b + chunk);
        if (b >= e) break;
        pool.emplace_back([b, e, &fn] {
            for (std::size_t i = b; i < e; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

enum class Shape { pair, sum, prod };

inline Shape shape_of(CostFamily f) {
    if (pair_decomposable(f)) return Shape::pair;
    if (f == CostFamily::det_radial_product) return Shape::prod;
    return Shape::sum;  // harmonic_sum, penalized_harmonic
}

// Online max-shifted log-sum-exp in a fixed accumulation order.
struct Lse {
    double m = kNegInf;
    double acc = 0.0;
    void add(double t) {
        if (t == kNegInf) return;
        if (t <= m) {
            const double d = t - m;
            if (d > kExpCut) acc += std::exp(d);
        } else {
            const double d = m - t;
            acc = (d > kExpCut) ? acc * std::exp(d) + 1.0 : 1.0;
            m = t;
        }
    }
    double log() const { return m == kNegInf ? kNegInf : m + std::log(acc); }
};

// Plain accumulation (direct scaling mode).  The 700 clamp only matters if
// direct mode is forced at an epsilon small enough to overflow; log mode is
// the supported regime there.
struct DirectSum {
    double acc = 0.0;
    void add(double t) {
        if (t > -700.0) acc += std::exp(std::min(t, 700.0));
    }
    double log() const { return std::log(acc); }
};

// Streaming engine over the implicit coupling.  Pair log-kernel tables hold
// -pair_cost/eps for every ordered coordinate pair so that the innermost
// loop reads contiguous rows.
class Engine {
  public:
    Engine(const CostSpec& spec, const std::vector<DiscreteMeasure>& marginals,
           double eps, long long budget, unsigned threads)
        : spec_(spec), marg_(marginals), eps_(eps), inv_eps_(1.0 / eps),
          threads_(resolve_threads(threads)), shape_(shape_of(spec.family)),
          n_(marginals.size()) {
        if (n_ != spec.n) throw std::invalid_argument("engine: marginal count != spec.n");
        if (n_ < 2 || n_ > kMaxN) throw std::invalid_argument("engine: need 2 <= n <= 8");
        double total = 1.0;
        for (const auto& mu : marg_) total *= static_cast<double>(mu.grid.m);
        if (total > static_cast<double>(budget)) throw BudgetError(total);

        const bool pen = spec_.family == CostFamily::penalized_harmonic;
        if (shape_ == Shape::pair || pen) {
            ptab_.resize(n_ * n_);
            CostSpec pair_spec = spec_;
            double w = 1.0;
            if (pen) {
                pair_spec.family = CostFamily::coulomb;
                pair_spec.s = 1.0;
                w = spec_.tau;
            }
            for (std::size_t a = 0; a < n_; ++a)
                for (std::size_t b = 0; b < n_; ++b) {
                    if (a == b) continue;
                    if (pen && (a > 1 || b > 1)) continue;
                    const auto& xa = marg_[a].grid.centers;
                    const auto& xb = marg_[b].grid.centers;
                    auto& tab = ptab_[a * n_ + b];
                    tab.resize(xa.size() * xb.size());
                    for (std::size_t i = 0; i < xa.size(); ++i)
                        for (std::size_t j = 0; j < xb.size(); ++j) {
                            const double c = w * pair_term(pair_spec, xa[i], xb[j]);
                            tab[i * xb.size() + j] = (c == kInf) ? kNegInf : -c * inv_eps_;
                        }
                }
        }
    }

    std::size_t n() const { return n_; }
    double eps() const { return eps_; }
    std::size_t m(std::size_t i) const { return marg_[i].grid.m; }
    const std::vector<double>& x(std::size_t i) const { return marg_[i].grid.centers; }

    // log S_k[j]: contraction of the kernel with every scaling except a_k.
    std::vector<double> contract_log(const std::vector<std::vector<double>>& u,
                                     std::size_t k, bool shifted) const {
        auto alpha = make_alpha(u);
        auto arows = alpha_rows(alpha);
        arows[k] = nullptr;  // S_k excludes a_k
        std::vector<double> out(m(k));
        parallel_for(m(k), threads_, [&](std::size_t jk) {
            if (shifted) {
                Lse acc;
                walk(&k, &jk, 1, arows, [&](double t, double, const std::size_t*) {
                    acc.add(t);
                });
                out[jk] = acc.log();
            } else {
                DirectSum acc;
                walk(&k, &jk, 1, arows, [&](double t, double, const std::size_t*) {
                    acc.add(t);
                });
                out[jk] = acc.log();
            }
        });
        return out;
    }

    struct FullMoments {
        double mass = 0.0, cost = 0.0, entropy = 0.0, kl = 0.0;
        double max_t = kNegInf;  // max log-plan entry = max (sum u - c)/eps
    };

    // One streamed pass over every multi-index.
    FullMoments moments(const std::vector<std::vector<double>>& u) const {
        auto alpha = make_alpha(u);
        auto arows = alpha_rows(alpha);
        const std::size_t m0 = m(0);
        std::vector<FullMoments> part(m0);
        parallel_for(m0, threads_, [&](std::size_t j0) {
            FullMoments fm;
            const std::size_t pos0 = 0;
            walk(&pos0, &j0, 1, arows, [&](double t, double asum, const std::size_t*) {
                if (t > fm.max_t) fm.max_t = t;
                if (t < -60.0) return;  // gamma < 1e-26: no moment contribution
                const double g = std::exp(t);
                fm.mass += g;
                fm.cost += g * (eps_ * (asum - t));  // c = sum u - eps t
                fm.entropy += g * t;
                fm.kl += g * asum;
            });
            part[j0] = fm;
        });
        FullMoments tot;  // sequential combine in index order
        for (const auto& p : part) {
            tot.mass += p.mass;
            tot.cost += p.cost;
            tot.entropy += p.entropy;
            tot.kl += p.kl;
            if (p.max_t > tot.max_t) tot.max_t = p.max_t;
        }
        return tot;
    }

    // Pair projection onto coordinates (ci,cj): row-major m_ci x m_cj masses.
    std::vector<double> project(const std::vector<std::vector<double>>& u,
                                std::size_t ci, std::size_t cj, bool shifted) const {
        if (ci == cj || ci >= n_ || cj >= n_)
            throw std::invalid_argument("project: need two distinct coordinates");
        auto alpha = make_alpha(u);
        auto arows = alpha_rows(alpha);
        const std::size_t mi = m(ci), mj = m(cj);
        std::vector<double> out(mi * mj);
        if (n_ == 2) {
            // the projection is the full coupling
            parallel_for(mi, threads_, [&](std::size_t ji) {
                for (std::size_t jj = 0; jj < mj; ++jj) {
                    const double t = alpha[ci][ji] + alpha[cj][jj] + logk2(ci, cj, ji, jj);
                    out[ji * mj + jj] = t == kNegInf ? 0.0 : std::exp(t);
                }
            });
            return out;
        }
        parallel_for(mi, threads_, [&](std::size_t ji) {
            std::size_t fpos[2] = {ci, cj};
            std::size_t fidx[2] = {ji, 0};
            for (std::size_t jj = 0; jj < mj; ++jj) {
                fidx[1] = jj;
                double v = 0.0;
                if (shifted) {
                    Lse acc;
                    walk(fpos, fidx, 2, arows,
                         [&](double t, double, const std::size_t*) { acc.add(t); });
                    const double l = acc.log();
                    v = l == kNegInf ? 0.0 : std::exp(l);
                } else {
                    DirectSum acc;
                    walk(fpos, fidx, 2, arows,
                         [&](double t, double, const std::size_t*) { acc.add(t); });
                    v = acc.acc;
                }
                out[ji * mj + jj] = v;
            }
        });
        return out;
    }

    struct SupportEntry {
        std::array<std::uint32_t, kMaxN> idx{};
        double mass = 0.0;
    };

    // Entries of the implicit coupling with mass >= eta * max entry mass.
    std::vector<SupportEntry> support(const std::vector<std::vector<double>>& u,
                                      double eta, double max_t) const {
        auto alpha = make_alpha(u);
        auto arows = alpha_rows(alpha);
        const double cut = max_t + std::log(eta);
        const std::size_t m0 = m(0);
        std::vector<std::vector<SupportEntry>> part(m0);
        parallel_for(m0, threads_, [&](std::size_t j0) {
            const std::size_t pos0 = 0;
            walk(&pos0, &j0, 1, arows, [&](double t, double, const std::size_t* idx) {
                if (t < cut) return;
                SupportEntry e;
                for (std::size_t i = 0; i < n_; ++i)
                    e.idx[i] = static_cast<std::uint32_t>(idx[i]);
                e.mass = std::exp(t);
                part[j0].push_back(e);
            });
        });
        std::vector<SupportEntry> all;
        for (auto& p : part) all.insert(all.end(), p.begin(), p.end());
        return all;
    }

  private:
    CostSpec spec_;
    const std::vector<DiscreteMeasure>& marg_;
    double eps_, inv_eps_;
    unsigned threads_;
    Shape shape_;
    std::size_t n_;
    std::vector<std::vector<double>> ptab_;  // ordered pair log-kernels, [a*n+b]

    std::vector<std::vector<double>> make_alpha(
        const std::vector<std::vector<double>>& u) const {
        std::vector<std::vector<double>> alpha(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            alpha[i].resize(u[i].size());
            for (std::size_t j = 0; j < u[i].size(); ++j)
                alpha[i][j] = u[i][j] * inv_eps_;  // -inf stays -inf
        }
        return alpha;
    }

    std::array<const double*, kMaxN> alpha_rows(
        const std::vector<std::vector<double>>& alpha) const {
        std::array<const double*, kMaxN> arows{};
        for (std::size_t i = 0; i < n_; ++i) arows[i] = alpha[i].data();
        return arows;
    }

    const double* pair_row(std::size_t from, std::size_t jfrom, std::size_t to) const {
        return ptab_[from * n_ + to].data() + jfrom * m(to);
    }

    double logk2(std::size_t a, std::size_t b, std::size_t ja, std::size_t jb) const {
        // log Gibbs kernel of the full cost at a two-coordinate index; n == 2 only
        if (shape_ == Shape::pair) return pair_row(a, ja, b)[jb];
        const double xa = x(a)[ja], xb = x(b)[jb];
        if (shape_ == Shape::prod) return xa * xb * inv_eps_;
        double t = -(xa + xb) * (xa + xb) * inv_eps_;
        if (spec_.family == CostFamily::penalized_harmonic) {
            const double p = pair_row(a, ja, b)[jb];  // -tau/(eps*d)
            t = p == kNegInf ? kNegInf : t + p;
        }
        return t;
    }

    struct Frame {
        double g = 0.0;     // alpha terms + pair log-kernel terms of pushed levels
        double a = 0.0;     // alpha terms alone (cost/KL recovery)
        double sum = 0.0;   // running coordinate sum (sum shapes)
        double prod = 1.0;  // running coordinate product (product shape)
    };

    Frame push(const Frame& st, std::size_t pos, std::size_t j,
               const std::array<const double*, kMaxN>& arows,
               const std::size_t* idx, const std::size_t* pushed,
               std::size_t npushed) const {
        Frame r = st;
        if (arows[pos]) {
            r.g += arows[pos][j];
            r.a += arows[pos][j];
        }
        const double xv = x(pos)[j];
        if (shape_ == Shape::pair) {
            for (std::size_t q = 0; q < npushed; ++q) {
                const std::size_t p = pushed[q];
                r.g += pair_row(p, idx[p], pos)[j];
            }
        } else if (shape_ == Shape::prod) {
            r.prod *= xv;
        } else {
            r.sum += xv;
            if (spec_.family == CostFamily::penalized_harmonic && pos <= 1) {
                const std::size_t other = 1 - pos;
                for (std::size_t q = 0; q < npushed; ++q)
                    if (pushed[q] == other) {
                        r.g += pair_row(other, idx[other], pos)[j];
                        break;
                    }
            }
        }
        return r;
    }

    // Streams all multi-indices agreeing with the fixed positions, calling
    // leaf(t, alpha_sum, idx) with t = log of the implicit plan entry minus
    // any excluded alpha rows.  Enumeration order: free positions ascending,
    // innermost varies fastest.
    template <class Leaf>
    void walk(const std::size_t* fpos, const std::size_t* fidx, std::size_t nf,
              const std::array<const double*, kMaxN>& arows, Leaf&& leaf) const {
        std::array<std::size_t, kMaxN> free{};
        std::size_t nfree = 0;
        std::array<bool, kMaxN> isfixed{};
        for (std::size_t i = 0; i < nf; ++i) isfixed[fpos[i]] = true;
        for (std::size_t i = 0; i < n_; ++i)
            if (!isfixed[i]) free[nfree++] = i;
        if (nfree == 0) throw std::logic_error("walk: nothing to stream");

        std::array<std::size_t, kMaxN> idx{};
        std::array<std::size_t, kMaxN> pushed{};
        std::size_t npushed = 0;

        Frame st;
        for (std::size_t i = 0; i < nf; ++i) {
            idx[fpos[i]] = fidx[i];
            st = push(st, fpos[i], fidx[i], arows, idx.data(), pushed.data(), npushed);
            pushed[npushed++] = fpos[i];
        }
        rec(0, free.data(), nfree, st, idx.data(), pushed.data(), npushed, arows, leaf);
    }

    template <class Leaf>
    void rec(std::size_t lvl, const std::size_t* free, std::size_t nfree, Frame st,
             std::size_t* idx, std::size_t* pushed, std::size_t npushed,
             const std::array<const double*, kMaxN>& arows, Leaf&& leaf) const {
        const std::size_t pos = free[lvl];
        const std::size_t mp = m(pos);
        if (lvl + 1 < nfree) {
            for (std::size_t j = 0; j < mp; ++j) {
                idx[pos] = j;
                Frame nx = push(st, pos, j, arows, idx, pushed, npushed);
                pushed[npushed] = pos;
                rec(lvl + 1, free, nfree, nx, idx, pushed, npushed + 1, arows, leaf);
            }
            return;
        }

        // innermost level: contiguous row sweep
        const double* arow = arows[pos];
        const double* xrow = x(pos).data();
        if (shape_ == Shape::pair) {
            std::array<const double*, kMaxN> rows{};
            for (std::size_t q = 0; q < npushed; ++q)
                rows[q] = pair_row(pushed[q], idx[pushed[q]], pos);
            for (std::size_t j = 0; j < mp; ++j) {
                double t = st.g + arow[j];
                for (std::size_t q = 0; q < npushed; ++q) t += rows[q][j];
                idx[pos] = j;
                leaf(t, st.a + arow[j], idx);
            }
        } else if (shape_ == Shape::prod) {
            const double pf = st.prod * inv_eps_;
            for (std::size_t j = 0; j < mp; ++j) {
                const double t = st.g + arow[j] + pf * xrow[j];
                idx[pos] = j;
                leaf(t, st.a + arow[j], idx);
            }
        } else {
            const double* pen = nullptr;
            if (spec_.family == CostFamily::penalized_harmonic && pos <= 1)
                pen = pair_row(1 - pos, idx[1 - pos], pos);
            for (std::size_t j = 0; j < mp; ++j) {
                const double s = st.sum + xrow[j];
                double t = st.g + arow[j] - s * s * inv_eps_;
                if (pen) t += pen[j];
                idx[pos] = j;
                leaf(t, st.a + arow[j], idx);
            }
        }
    }
};

inline double resolve_scale(const CostSpec& spec,
                            const std::vector<DiscreteMeasure>& marginals) {
    double s = 0.0;
    for (const auto& mu : marginals) s = std::max(s, cost_scale(spec, mu.grid));
    return s;
}

}  // namespace detail

inline ScalingState init_scaling_state(const CostSpec& spec,
                                       const std::vector<DiscreteMeasure>& marginals,
                                       const SolveOptions& opts) {
    if (marginals.size() != spec.n)
        throw std::invalid_argument("init_scaling_state: marginal count != spec.n");
    ScalingState st;
    st.spec = spec;
    st.marginals = marginals;
    st.epsilon = opts.epsilon;
    st.budget = opts.budget;
    st.threads = opts.threads;
    st.log_domain = opts.log_domain.value_or(
        opts.epsilon < 0.05 * detail::resolve_scale(spec, marginals));
    st.log_scalings.resize(marginals.size());
    for (std::size_t i = 0; i < marginals.size(); ++i) {
        st.log_scalings[i].assign(marginals[i].grid.m, 0.0);
        for (std::size_t j = 0; j < marginals[i].grid.m; ++j)
            if (marginals[i].weights[j] == 0.0)
                st.log_scalings[i][j] = detail::kNegInf;  // zero cells stay zero
    }
    return st;
}

// Linear-domain contraction S_k (kernel integrated against all a_l, l != k).
inline std::vector<double> contract(const ScalingState& st, std::size_t k) {
    detail::Engine eng(st.spec, st.marginals, st.epsilon, st.budget, st.threads);
    auto ls = eng.contract_log(st.log_scalings, k, st.log_domain);
    std::vector<double> out(ls.size());
    for (std::size_t j = 0; j < ls.size(); ++j)
        out[j] = ls[j] == detail::kNegInf ? 0.0 : std::exp(ls[j]);
    return out;
}

namespace detail {

// One block update on marginal k.  Returns the pre-update L1 marginal error.
inline double block_update(const Engine& eng, const std::vector<double>& mu_k,
                           std::vector<std::vector<double>>& u, std::size_t k,
                           double eps, bool shifted) {
    const auto ls = eng.contract_log(u, k, shifted);
    double err = 0.0;
    auto& uk = u[k];
    for (std::size_t j = 0; j < ls.size(); ++j) {
        const double t = uk[j] / eps + ls[j];  // log of implicit k-marginal
        const double cur = t == kNegInf || t != t ? 0.0 : std::exp(t);
        err += std::abs(cur - mu_k[j]);
        if (mu_k[j] > 0.0) {
            if (ls[j] == kNegInf)
                throw InfeasibleError(
                    "marginal " + std::to_string(k) + " cell " + std::to_string(j) +
                    " has positive mass but zero kernel contraction" +
                    (shifted ? "" : "; retry with log-domain scaling"));
            uk[j] = eps * (std::log(mu_k[j]) - ls[j]);
        } else {
            uk[j] = kNegInf;
        }
    }
    return err;
}

}  // namespace detail

// One block update on marginal k of a standing state (test/tool entry point).
inline double block_update(ScalingState& st, std::size_t k) {
    detail::Engine eng(st.spec, st.marginals, st.epsilon, st.budget, st.threads);
    return detail::block_update(eng, st.marginals[k].weights, st.log_scalings, k,
                                st.epsilon, st.log_domain);
}

// Fills the primal side of a report: cost, entropy, KL objective.
inline void primal_report(const ScalingState& st, SolveReport& rep) {
    detail::Engine eng(st.spec, st.marginals, st.epsilon, st.budget, st.threads);
    const auto fm = eng.moments(st.log_scalings);
    rep.primal_cost = fm.cost;
    rep.entropy = fm.entropy;
    rep.kl_objective = fm.kl;
}

// Fills the dual side: feasibility violation, shifted dual value, gap.
// Potentials become feasible after the uniform shift u_i - violation/n; the
// reported dual value is the shifted one, so weak duality holds exactly.
inline void dual_report(const ScalingState& st, SolveReport& rep) {
    detail::Engine eng(st.spec, st.marginals, st.epsilon, st.budget, st.threads);
    const auto fm = eng.moments(st.log_scalings);
    const double viol = std::max(0.0, st.epsilon * fm.max_t);
    double dv = 0.0;
    for (std::size_t i = 0; i < st.marginals.size(); ++i) {
        const auto& mu = st.marginals[i].weights;
        const auto& ui = st.log_scalings[i];
        for (std::size_t j = 0; j < mu.size(); ++j)
            if (mu[j] > 0.0) dv += mu[j] * ui[j];
    }
    rep.dual_feasibility_violation = viol;
    rep.dual_value = dv - viol;
    rep.duality_gap = rep.primal_cost - rep.dual_value;
}

// Gauss-Seidel scaling iteration with optional epsilon continuation: the
// schedule runs front to back, each stage warm-starting the next, and the
// final stage is opts.epsilon itself.
inline std::pair<ScalingState, SolveReport> ipfp_solve(
    const CostSpec& spec, const std::vector<DiscreteMeasure>& marginals,
    const SolveOptions& opts) {
    std::vector<double> schedule = opts.anneal;
    for (std::size_t i = 1; i < schedule.size(); ++i)
        if (schedule[i] >= schedule[i - 1])
            throw std::invalid_argument("anneal schedule must be strictly decreasing");
    if (schedule.empty() || schedule.back() > opts.epsilon)
        schedule.push_back(opts.epsilon);
    if (schedule.back() < opts.epsilon)
        throw std::invalid_argument("anneal schedule ends below epsilon");

    ScalingState st = init_scaling_state(spec, marginals, opts);
    const double scale = detail::resolve_scale(spec, marginals);
    const std::size_t n = marginals.size();

    SolveReport rep;
    rep.marginal_errors.assign(n, 0.0);
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        st.epsilon = schedule[stage];
        st.log_domain = opts.log_domain.value_or(st.epsilon < 0.05 * scale);
        detail::Engine eng(spec, st.marginals, st.epsilon, st.budget, st.threads);
        rep.converged = false;
        for (long sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            double max_err = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = detail::block_update(eng, marginals[k].weights,
                                                      st.log_scalings, k,
                                                      st.epsilon, st.log_domain);
                rep.marginal_errors[k] = e;
                max_err = std::max(max_err, e);
            }
            ++rep.sweeps;
            if (max_err < opts.tol) {
                rep.converged = true;
                break;
            }
        }
    }

    primal_report(st, rep);
    dual_report(st, rep);
    return {std::move(st), rep};
}

}  // namespace mmot
