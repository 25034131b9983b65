#include "freshma/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <initializer_list>
#include <ostream>
#include <random>
#include <utility>

namespace freshma {

std::string scheme_name(SimScheme s) {
    switch (s) {
        case SimScheme::PollingAoii: return "polling-aoii";
        case SimScheme::AlohaAoii: return "aloha-aoii";
        case SimScheme::TreeAoii: return "tree-aoii";
        case SimScheme::TdPeak: return "td-peak";
        case SimScheme::FdPeak: return "fd-peak";
        case SimScheme::XdPolicy: return "xd-policy";
        case SimScheme::MeanfieldReference: return "meanfield-reference";
    }
    return "?";
}

SimScheme parse_scheme(const std::string& name) {
    for (auto s : {SimScheme::PollingAoii, SimScheme::AlohaAoii, SimScheme::TreeAoii, SimScheme::TdPeak, SimScheme::FdPeak,
                   SimScheme::XdPolicy, SimScheme::MeanfieldReference})
        if (scheme_name(s) == name) return s;
    throw InvalidParameter("unknown simulation scheme '" + name + "'");
}

namespace {

// One engine per substream: stream 0 drives shared randomness (channel,
// aggregate arrivals), stream i+1 belongs to node i.
class Streams {
public:
    Streams(std::uint64_t seed, int nodes) {
        engines_.reserve(nodes + 1);
        for (int i = 0; i <= nodes; ++i) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(i), 0x5eedu};
            engines_.emplace_back(seq);
        }
    }
    std::mt19937_64& shared() { return engines_[0]; }
    std::mt19937_64& node(int i) { return engines_[i + 1]; }

private:
    std::vector<std::mt19937_64> engines_;
};

double uniform(std::mt19937_64& g) { return std::uniform_real_distribution<double>(0.0, 1.0)(g); }

int poisson(std::mt19937_64& g, double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<int>(mean)(g);
}

// Student t quantile (0.975) by the Cornish-Fisher expansion.
double t975(int dof) {
    const double z = 1.959963984540054, v = dof;
    return z + (z * z * z + z) / (4 * v) + (5 * std::pow(z, 5) + 16 * z * z * z + 3 * z) / (96 * v * v);
}

// Ratio estimator split into consecutive batches of the measured window.
class Batches {
public:
    Batches(int count, long long span) : count_(count), span_(std::max(span, 1LL)), num_(count), den_(count) {}
    void add(long long t, double x, double w = 1.0) {
        const int b = static_cast<int>(std::min<long long>(count_ - 1, t * count_ / span_));
        num_[b] += x;
        den_[b] += w;
    }
    Estimate estimate() const {
        Estimate e;
        double N = 0.0, D = 0.0;
        std::vector<double> v;
        for (int b = 0; b < count_; ++b) {
            N += num_[b];
            D += den_[b];
            if (den_[b] > 0.0) v.push_back(num_[b] / den_[b]);
        }
        e.value = D > 0.0 ? N / D : 0.0;
        if (v.size() >= 2) {
            double mean = 0.0, ss = 0.0;
            for (double x : v) mean += x;
            mean /= v.size();
            for (double x : v) ss += (x - mean) * (x - mean);
            const int dof = static_cast<int>(v.size()) - 1;
            e.half_width = t975(dof) * std::sqrt(ss / dof / v.size());
        }
        return e;
    }
    std::vector<double> means() const {
        std::vector<double> v(count_);
        for (int b = 0; b < count_; ++b) v[b] = den_[b] > 0.0 ? num_[b] / den_[b] : 0.0;
        return v;
    }

private:
    int count_;
    long long span_;
    std::vector<double> num_, den_;
};

// Trend test on batch occupancy: positive slope with t > 5 and a 10% rise.
bool trending_up(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    if (n < 6) return false;
    double mx = (n - 1) / 2.0, my = 0.0;
    for (double v : y) my += v;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += (i - mx) * (i - mx);
        sxy += (i - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = y[i] - my - slope * (i - mx);
        sse += r * r;
    }
    const double se = std::sqrt(sse / (n - 2) / sxx);
    const int k = std::max(1, n / 4);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < k; ++i) {
        head += y[i];
        tail += y[n - 1 - i];
    }
    return slope > 0.0 && (se == 0.0 || slope / se > 5.0) && tail > 1.1 * head;
}

class Tracer {
public:
    Tracer(std::ostream* os, long long limit) : os_(os), limit_(limit) {}
    bool on() const { return os_ != nullptr && rows_ < limit_; }
    void row(long long slot, std::initializer_list<std::pair<const char*, double>> cols) {
        if (!on()) return;
        if (rows_ == 0) {
            *os_ << "slot";
            for (const auto& c : cols) *os_ << '\t' << c.first;
            *os_ << '\n';
        }
        *os_ << slot;
        for (const auto& c : cols) *os_ << '\t' << c.second;
        *os_ << '\n';
        ++rows_;
    }

private:
    std::ostream* os_;
    long long limit_, rows_ = 0;
};

// Binary tree splitting over participant ids. Members carry the deepest layer
// they belong to; `depth` is the layer whose members transmit next.
class TreeSplitter {
public:
    explicit TreeSplitter(int max_depth) : R_(max_depth) {}
    bool idle() const { return depth_ < 0; }
    bool contains(long long id) const {
        return std::any_of(members_.begin(), members_.end(), [&](const auto& m) { return m.first == id; });
    }
    void start(const std::vector<long long>& ids) {
        members_.clear();
        for (auto id : ids) members_.push_back({id, 0});
        depth_ = 0;
    }
    // One contention slot; returns the id that got through, or -1.
    template <class Coin>
    long long step(Coin&& coin) {
        std::vector<std::size_t> at;
        for (std::size_t i = 0; i < members_.size(); ++i)
            if (members_[i].second == depth_) at.push_back(i);
        long long winner = -1;
        if (at.empty()) {
            --depth_;
        } else if (at.size() == 1) {
            winner = members_[at[0]].first;
            members_.erase(members_.begin() + at[0]);
            --depth_;
        } else if (depth_ == R_) {
            // collision at the deepest layer: these leave the procedure
            for (auto it = at.rbegin(); it != at.rend(); ++it) members_.erase(members_.begin() + *it);
            --depth_;
        } else {
            for (auto i : at)
                if (coin(members_[i].first)) members_[i].second = depth_ + 1;
            ++depth_;
        }
        if (depth_ < 0) members_.clear();
        return winner;
    }

private:
    int R_;
    int depth_ = -1;
    std::vector<std::pair<long long, int>> members_;
};

// Each of the listed nodes transmits with probability 1/n; returns the single
// transmitter or -1 on idle/collision.
template <class Coin>
int aloha_round(const std::vector<int>& contenders, Coin&& coin) {
    const int n = static_cast<int>(contenders.size());
    if (n == 0) return -1;
    int who = -1, sent = 0;
    for (int id : contenders)
        if (coin(id, 1.0 / n)) {
            who = id;
            ++sent;
        }
    return sent == 1 ? who : -1;
}

struct Collect {
    explicit Collect(const SimConfig& c)
        : aoii(c.batches, c.horizon_slots - c.warmup_slots),
          peak(c.batches, c.horizon_slots - c.warmup_slots),
          q1(c.batches, c.horizon_slots - c.warmup_slots),
          q2(c.batches, c.horizon_slots - c.warmup_slots),
          occ(c.batches, c.horizon_slots - c.warmup_slots),
          cost(c.batches, c.horizon_slots - c.warmup_slots),
          loss(c.batches, c.horizon_slots - c.warmup_slots),
          thr(c.batches, c.horizon_slots - c.warmup_slots) {}
    Batches aoii, peak, q1, q2, occ, cost, loss, thr;
    SimMetrics m;

    SimMetrics finish(long long measured) {
        m.avg_aoii = aoii.estimate();
        m.avg_peak_aoii = peak.estimate();
        m.mean_q1 = q1.estimate();
        m.mean_q2 = q2.estimate();
        m.occupancy = occ.estimate();
        m.cost = cost.estimate();
        m.loss_rate = loss.estimate();
        m.throughput = thr.estimate();
        m.measured = measured;
        m.diverging = trending_up(occ.means());
        m.ci_t = t975(static_cast<int>(occ.means().size()) - 1);
        return m;
    }
};

// ---------------------------------------------------------------- AoII schemes

SimMetrics run_aoii(const SimConfig& c, bool capped) {
    const int M = c.M;
    const long long H = c.horizon_slots, W = c.warmup_slots;
    Streams rng(c.seed, M);
    Collect col(c);
    Tracer tr(c.trace, c.trace_limit);
    const double fresh = 1.0 - std::exp(-c.lambda / M);  // P(at least one arrival) per node and slot

    std::vector<long long> age(M, 0);
    int td = 0, ptr = 0, tx = -1;
    TreeSplitter tree(c.R);
    auto node_coin = [&](int id, double p) { return uniform(rng.node(id)) < p; };
    auto fair_coin = [&](long long id) { return uniform(rng.node(static_cast<int>(id))) < 0.5; };
    std::vector<int> waiting;
    for (long long t = 0; t < H; ++t) {
        const bool meas = t >= W;
        const long long tm = t - W;
        if (meas) {
            double sum = 0.0;
            int busy = 0, wait = 0;
            for (int i = 0; i < M; ++i) {
                sum += capped ? std::min<long long>(age[i], c.N) : age[i];
                busy += age[i] > 0;
                wait += age[i] > 0 && i != tx;
            }
            col.aoii.add(tm, sum / M);
            col.occ.add(tm, busy);
            col.q1.add(tm, wait);
            col.q2.add(tm, tx >= 0 ? 1.0 : 0.0);
            if (tr.on()) tr.row(t, {{"td", td}, {"pointer", ptr}, {"tx", tx}, {"fresh_nodes", busy}, {"mean_aoii", sum / M}});
        }

        int delivered = -1;
        if (c.scheme == SimScheme::PollingAoii) {
            if (td == 0) {
                ptr = (ptr + 1) % M;  // an empty ask still costs the slot
                td = age[ptr] > 0 ? c.c : 0;
            } else {
                if (td == 1) delivered = ptr;
                --td;
            }
        } else if (td > 0) {
            if (td == 1) {
                delivered = tx;
                tx = -1;
            }
            --td;
        } else if (c.scheme == SimScheme::TreeAoii) {
            if (tree.idle()) {
                std::vector<long long> ids;
                for (int i = 0; i < M; ++i)
                    if (age[i] > 0) ids.push_back(i);
                if (!ids.empty()) tree.start(ids);
            }
            if (!tree.idle()) {
                long long w = tree.step(fair_coin);
                if (w >= 0) {
                    tx = static_cast<int>(w);
                    td = c.c;
                }
            }
        } else {
            waiting.clear();
            for (int i = 0; i < M; ++i)
                if (age[i] > 0) waiting.push_back(i);
            int w = aloha_round(waiting, node_coin);
            if (w >= 0) {
                tx = w;
                td = c.c;
            }
        }

        if (delivered >= 0) {
            if (meas) {
                col.peak.add(tm, static_cast<double>(age[delivered]));
                col.thr.add(tm, 1.0, 0.0);
                ++col.m.deliveries;
            }
            age[delivered] = 0;
        }
        if (meas) col.thr.add(tm, 0.0, 1.0);
        for (int i = 0; i < M; ++i) {
            if (age[i] > 0) {
                ++age[i];  // newer packets during transmission are absorbed
            } else if (fresh > 0.0 && uniform(rng.node(i)) < fresh) {
                age[i] = 1;
                if (meas) ++col.m.arrivals;
            }
        }
    }
    col.m.accepted = col.m.arrivals;
    return col.finish(H - W);
}

// Mean-field reference in queueing mode: a node that wins a reservation
// sends its whole buffer, including packets that arrive meanwhile.
SimMetrics run_meanfield_peak(const SimConfig& c) {
    const int M = c.M;
    const long long H = c.horizon_slots, W = c.warmup_slots;
    Streams rng(c.seed, M);
    Collect col(c);
    Tracer tr(c.trace, c.trace_limit);
    const double rate = c.lambda / M;
    std::vector<std::deque<long long>> q(M);
    long long queued = 0;
    int tx = -1, left = 0;
    std::vector<int> waiting;
    auto node_coin = [&](int id, double p) { return uniform(rng.node(id)) < p; };
    for (long long t = 0; t < H; ++t) {
        const bool meas = t >= W;
        const long long tm = t - W;
        if (meas) {
            const double at_tx = tx >= 0 ? static_cast<double>(q[tx].size()) : 0.0;
            col.occ.add(tm, static_cast<double>(queued));
            col.q1.add(tm, queued - at_tx);
            col.q2.add(tm, at_tx);
            col.thr.add(tm, 0.0, 1.0);
            col.loss.add(tm, 0.0, 0.0);
            if (tr.on()) tr.row(t, {{"tx", tx}, {"left", left}, {"packets", static_cast<double>(queued)}});
        }
        if (tx >= 0) {
            if (--left == 0) {
                const long long a = q[tx].front();
                q[tx].pop_front();
                --queued;
                if (meas) {
                    col.peak.add(tm, static_cast<double>(t - a));
                    col.thr.add(tm, 1.0, 0.0);
                    ++col.m.deliveries;
                }
            }
        } else {
            waiting.clear();
            for (int i = 0; i < M; ++i)
                if (!q[i].empty()) waiting.push_back(i);
            int w = aloha_round(waiting, node_coin);
            if (w >= 0) {
                tx = w;
                left = c.c;
            }
        }
        for (int i = 0; i < M; ++i) {
            const int n = poisson(rng.node(i), rate);
            for (int k = 0; k < n; ++k) q[i].push_back(t);
            queued += n;
            if (meas) {
                col.m.arrivals += n;
                col.loss.add(tm, 0.0, n);
            }
        }
        if (tx >= 0 && left == 0) {
            if (q[tx].empty()) tx = -1;
            else left = c.c;
        }
    }
    col.m.accepted = col.m.arrivals;
    return col.finish(H - W);
}

// ---------------------------------------------------------------- TD

SimMetrics run_td(const SimConfig& c) {
    if (c.N < 1 || c.Z1 < 1 || c.Z2 < 1 || c.c < 1 || c.R < 1) throw InvalidParameter("td-peak needs positive N, Z1, Z2, c, R");
    const long long H = c.horizon_slots, W = c.warmup_slots;
    const int F = c.Z1 + c.c * c.Z2;
    Streams rng(c.seed, 0);
    Collect col(c);
    Tracer tr(c.trace, c.trace_limit);
    struct Packet {
        long long id, arrival;
    };
    std::vector<Packet> q1;
    std::deque<Packet> q2;
    TreeSplitter tree(c.R);
    long long next_id = 0;
    auto coin = [&](long long) { return uniform(rng.shared()) < 0.5; };
    for (long long t = 0; t < H; ++t) {
        const bool meas = t >= W;
        const long long tm = t - W;
        const int td = static_cast<int>(t % F) + 1;
        if (meas) {
            col.q1.add(tm, static_cast<double>(q1.size()));
            col.q2.add(tm, static_cast<double>(q2.size()));
            col.occ.add(tm, static_cast<double>(q1.size() + q2.size()));
            col.thr.add(tm, 0.0, 1.0);
            if (tr.on()) tr.row(t, {{"td", td}, {"q1", static_cast<double>(q1.size())}, {"q2", static_cast<double>(q2.size())}});
        }
        if (td <= c.Z1) {
            if (static_cast<int>(q2.size()) < c.N) {  // a full transmission queue freezes contention
                if (tree.idle() && !q1.empty()) {
                    std::vector<long long> ids;
                    for (const auto& p : q1) ids.push_back(p.id);
                    tree.start(ids);
                }
                if (!tree.idle()) {
                    long long w = tree.step(coin);
                    if (w >= 0) {
                        auto it = std::find_if(q1.begin(), q1.end(), [&](const Packet& p) { return p.id == w; });
                        q2.push_back(*it);
                        q1.erase(it);
                    }
                }
            }
        } else if ((td - c.Z1) % c.c == 0 && !q2.empty()) {
            if (meas) {
                col.peak.add(tm, static_cast<double>(t - q2.front().arrival));
                col.thr.add(tm, 1.0, 0.0);
                ++col.m.deliveries;
            }
            q2.pop_front();
        }
        const int n = poisson(rng.shared(), c.lambda);
        const int room = c.N - static_cast<int>(q1.size());
        const int take = std::min(n, room);
        for (int k = 0; k < take; ++k) q1.push_back({next_id++, t});
        if (meas) {
            col.m.arrivals += n;
            col.m.accepted += take;
            col.loss.add(tm, n - take, n);
        }
    }
    return col.finish(H - W);
}

// ---------------------------------------------------------------- FD

// Frame-level model: a data frame of K*T2 time units carries a random number
// of reservation slots (floor or ceil of K*T2/T1); one signal is served per frame.
SimMetrics run_fd(const SimConfig& c) {
    if (!(c.w1 > 0.0 && c.w1 < 1.0) || c.K < 1 || c.c < 1 || c.N1 < 1 || c.N2 < 1)
        throw InvalidParameter("fd-peak needs 0 < w1 < 1 and positive K, c, N1, N2");
    const long long H = c.horizon_slots, W = c.warmup_slots;
    const double T1 = 1.0 / c.w1, T2 = c.c / (1.0 - c.w1), F = c.K * T2;
    const double ratio = F / T1;
    const double lo = std::floor(ratio + 1e-12);
    const double sigma = std::clamp(1.0 - ratio + lo, 0.0, 1.0);
    const double rate = c.lambda * T1 / c.K;
    Streams rng(c.seed, 0);
    Collect col(c);
    Tracer tr(c.trace, c.trace_limit);
    std::vector<double> q1;  // arrival times of pending reservation signals
    std::deque<double> q2;
    std::vector<double> won;
    for (long long f = 0; f < H; ++f) {
        const bool meas = f >= W;
        const long long tm = f - W;
        const double start = f * F, end = start + F;
        const double in_system = static_cast<double>(q1.size() + q2.size());
        const int x = static_cast<int>(lo) + (uniform(rng.shared()) < sigma ? 0 : 1);
        if (meas) {
            col.q1.add(tm, static_cast<double>(q1.size()));
            col.q2.add(tm, static_cast<double>(q2.size()));
            if (tr.on()) tr.row(f, {{"slots", x}, {"q1", static_cast<double>(q1.size())}, {"q2", static_cast<double>(q2.size())}});
        }
        double area = in_system * F;
        long long arrived = 0;
        won.clear();
        for (int j = 0; j < x; ++j) {
            const int k = static_cast<int>(q1.size());
            if (k > 0) {
                int sent = 0, who = -1;
                for (int i = 0; i < k; ++i)
                    if (uniform(rng.shared()) * k < 1.0) {
                        ++sent;
                        who = i;
                    }
                if (sent == 1) {
                    won.push_back(q1[who]);
                    q1.erase(q1.begin() + who);
                }
            }
            const int n = poisson(rng.shared(), rate);
            for (int a = 0; a < n; ++a) {
                const double at = start + (j + uniform(rng.shared())) * F / x;
                q1.push_back(at);
                area += end - at;
            }
            arrived += n;
        }
        long long delivered = 0;
        if (!q2.empty()) {
            if (meas) col.peak.add(tm, end - q2.front());
            q2.pop_front();
            delivered = 1;
        }
        for (double a : won) q2.push_back(a);
        long long dropped = 0;
        while (static_cast<int>(q1.size()) > c.N1) {
            q1.pop_back();
            ++dropped;
        }
        while (static_cast<int>(q2.size()) > c.N2) {
            q2.pop_back();
            ++dropped;
        }
        if (meas) {
            col.occ.add(tm, area / F);
            col.thr.add(tm, static_cast<double>(delivered), F);
            col.loss.add(tm, static_cast<double>(dropped), static_cast<double>(arrived));
            col.m.arrivals += arrived;
            col.m.accepted += arrived - dropped;
            col.m.deliveries += delivered;
        }
    }
    return col.finish(H - W);
}

// ---------------------------------------------------------------- XD

SimMetrics run_xd(const SimConfig& c) {
    if (!c.policy) throw InvalidParameter("xd-policy simulation needs a policy table");
    const XdParams& p = c.policy->params;
    const XdUnits units(p);
    const int M = p.M;
    const long long H = c.horizon_slots, W = c.warmup_slots;
    Streams rng(c.seed, M);
    Collect col(c);
    Tracer tr(c.trace, c.trace_limit);
    enum Status { Idle, Reserving, Queued };
    std::vector<std::deque<long long>> buf(M);
    std::vector<Status> status(M, Idle);
    std::vector<int> reserving;
    std::deque<int> txq;
    std::deque<long long> head;  // arrival slots of the packets being sent
    long long q0 = 0;
    int q3 = 0, td = 1, interval = 0;
    auto node_coin = [&](int id, double pr) { return uniform(rng.node(id)) < pr; };
    for (long long t = 0; t < H; ++t) {
        const bool meas = t >= W;
        const long long tm = t - W;
        XdState s;
        s.td = td;
        s.interval = td > 1 ? interval : 0;
        s.q0 = static_cast<int>(q0);
        s.q1 = static_cast<int>(reserving.size());
        s.q2 = static_cast<int>(txq.size());
        s.q3 = q3;
        int a = td > 1 ? interval : c.policy->lookup(s);
        if (a < 0) {
            a = 0;
            if (meas) ++col.m.untabulated;
        }
        const int after = std::max(q3 - units.removed(a), 0);
        if (meas) {
            col.cost.add(tm, q0 + static_cast<double>(after) / units.per_packet);
            col.occ.add(tm, static_cast<double>(q0 + static_cast<long long>(head.size())));
            col.q1.add(tm, s.q1);
            col.q2.add(tm, s.q2);
            col.thr.add(tm, 0.0, 1.0);
            if (tr.on())
                tr.row(t, {{"td", td}, {"action_w1", action_w1(a)}, {"q0", static_cast<double>(q0)}, {"q1", s.q1}, {"q2", s.q2},
                           {"q3", static_cast<double>(q3) / units.per_packet}});
        }
        q3 = after;
        // packets whose last tick has been sent are delivered at the slot end
        const std::size_t undelivered = static_cast<std::size_t>((q3 + units.per_packet - 1) / units.per_packet);
        while (head.size() > undelivered) {
            if (meas) {
                col.peak.add(tm, static_cast<double>(t - head.front()));
                col.thr.add(tm, 1.0, 0.0);
                ++col.m.deliveries;
            }
            head.pop_front();
        }

        if (a == 0) {
            td = 1;
        } else if (td < a) {
            ++td;
            interval = a;
        } else {
            td = 1;
            const bool admitted = !reserving.empty() && static_cast<int>(txq.size()) + 1 - (q3 == 0 ? 1 : 0) <= p.N2;
            if (admitted) {
                const int w = aloha_round(reserving, node_coin);
                if (w >= 0) {
                    reserving.erase(std::find(reserving.begin(), reserving.end(), w));
                    status[w] = Queued;
                    txq.push_back(w);
                }
            }
        }
        if (q3 == 0 && !txq.empty()) {
            const int h = txq.front();
            txq.pop_front();
            head.assign(buf[h].begin(), buf[h].end());
            q0 -= static_cast<long long>(buf[h].size());
            q3 = static_cast<int>(buf[h].size()) * units.per_packet;
            buf[h].clear();
            status[h] = Idle;
        }
        for (int i = 0; i < M; ++i) {
            const int n = poisson(rng.node(i), p.lambda / M);
            int kept = 0;
            for (int k = 0; k < n; ++k) {
                if (q0 >= p.Q0max) break;
                buf[i].push_back(t);
                ++q0;
                ++kept;
            }
            if (kept > 0 && status[i] == Idle) {
                status[i] = Reserving;
                reserving.push_back(i);
            }
            if (meas) {
                col.m.arrivals += n;
                col.m.accepted += kept;
                col.loss.add(tm, n - kept, n);
            }
        }
    }
    return col.finish(H - W);
}

}  // namespace

SimMetrics simulate(const SimConfig& c) {
    if (c.horizon_slots <= c.warmup_slots || c.warmup_slots < 0) throw InvalidParameter("simulation needs horizon > warmup >= 0");
    if (c.batches < 2) throw InvalidParameter("simulation needs at least 2 batches");
    if (!(c.lambda >= 0.0)) throw InvalidParameter("simulation needs lambda >= 0");
    if (c.scheme != SimScheme::XdPolicy && (c.M < 1 || c.c < 1)) throw InvalidParameter("simulation needs M, c >= 1");
    switch (c.scheme) {
        case SimScheme::PollingAoii:
        case SimScheme::AlohaAoii:
        case SimScheme::TreeAoii:
            if (c.N < 1) throw InvalidParameter("AoII simulation needs N >= 1");
            return run_aoii(c, true);
        case SimScheme::MeanfieldReference: {
            if (c.peak_mode) return run_meanfield_peak(c);
            SimConfig a = c;
            a.scheme = SimScheme::AlohaAoii;
            return run_aoii(a, false);
        }
        case SimScheme::TdPeak: return run_td(c);
        case SimScheme::FdPeak: return run_fd(c);
        case SimScheme::XdPolicy: return run_xd(c);
    }
    throw InvalidParameter("unknown simulation scheme");
}

double little_consistency(const SimMetrics& m) {
    const double W = m.avg_peak_aoii.value, thr = m.throughput.value;
    if (m.deliveries == 0 || W <= 0.0 || thr <= 0.0) return 0.0;
    return std::abs(m.occupancy.value / thr - W) / W;
}

double little_tolerance(const SimMetrics& m) {
    const double W = m.avg_peak_aoii.value, thr = m.throughput.value;
    if (m.deliveries == 0 || W <= 0.0 || thr <= 0.0) return 0.0;
    const double L = m.occupancy.value;
    // delta method for L/thr, half-widths converted back to standard errors
    const double t = m.ci_t > 0.0 ? m.ci_t : 1.96;
    const double se_ratio = (L / thr) * std::hypot(m.occupancy.half_width / std::max(L, 1e-300), m.throughput.half_width / thr) / t;
    const double se_w = m.avg_peak_aoii.half_width / t;
    return 3.0 * std::hypot(se_ratio, se_w) / W;
}

}  // namespace freshma
