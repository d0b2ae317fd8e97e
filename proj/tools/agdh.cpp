#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "agdh/error.hpp"
#include "agdh/oracle.hpp"

namespace fs = std::filesystem;
using namespace agdh;

namespace {

struct RunOptions {
    std::uint32_t nodes = 10;
    double loss = 0.0;
    std::uint64_t seed = 1;
    std::string duration = "120s";
    std::string scenario;
    std::string out;
    bool eager_rekey = false;
    bool toy = false;
    bool prod = false;
    std::string params;
    std::string metrics_format = "text";
    std::uint32_t repeat = 1;
    bool ed25519 = false;
};

std::shared_ptr<const group::GroupParams> load_params(bool toy, const std::string& path) {
    if (!path.empty()) {
        if (!fs::exists(path)) throw Error(Errc::ConfigError, "parameter file not found: " + path);
        return std::make_shared<const group::GroupParams>(group::GroupParams::load(path));
    }
    if (toy) return std::make_shared<const group::GroupParams>(group::GroupParams::toy());
    return std::make_shared<const group::GroupParams>(
        group::GroupParams::load(fs::path(AGDH_PARAMS_DIR) / "modp-1024-160.txt"));
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::ConfigError, "cannot write " + path.string());
    f << text;
}

std::string seconds(fsm::Micros t) {
    std::ostringstream o;
    o << std::fixed;
    o.precision(3);
    o << static_cast<double>(t) / 1e6 << "s";
    return o.str();
}

// Returns the exit code for one seed; the summary goes to `report`.
int run_one(const RunOptions& opt, std::uint64_t seed, const sim::Scenario& scenario,
            const std::shared_ptr<const group::GroupParams>& params, std::ostream& report) {
    sim::SimConfig config;
    config.node_count = opt.nodes;
    config.loss_prob = opt.loss;
    config.seed = seed;
    config.duration = sim::parse_duration(opt.duration);
    config.scenario = scenario;
    config.ed25519 = opt.ed25519;
    fsm::NodeConfig node_config;
    node_config.eager_rekey = opt.eager_rekey;

    sim::Simulator simulator(config, node_config, params);
    simulator.run();
    auto audit = oracle::audit_transcript(simulator.transcript(), *params);
    auto metrics = simulator.metrics();

    std::optional<oracle::CostRow> cost;
    std::string cost_status = "n/a";
    if (opt.nodes >= 2) {
        cost = oracle::cost_table(oracle::measure_ika(opt.nodes, seed, params));
        try {
            oracle::check_cost_row(*cost, opt.nodes);
            cost_status = "match";
        } catch (const Error& e) {
            cost_status = e.what();
        }
    }

    if (!opt.out.empty()) {
        fs::path dir = opt.out;
        if (opt.repeat > 1) dir /= "seed-" + std::to_string(seed);
        fs::create_directories(dir);
        write_file(dir / "transcript.txt", simulator.transcript().render());
        write_file(dir / "metrics.txt", metrics.render());
        write_file(dir / "audit.txt", audit.render());
    }

    const bool converged = simulator.converged();
    const auto last_event = scenario.last_event_time();
    const bool settled = converged && simulator.converged_since() && *simulator.converged_since() >= last_event;
    auto leaders = simulator.leaders();

    report << "seed " << seed << ": nodes=" << opt.nodes << " loss=" << opt.loss << " duration=" << opt.duration
           << " group=" << params->name() << "\n";
    report << "  live " << simulator.live_nodes().size() << ", leaders";
    for (auto l : leaders) report << " " << l;
    report << "\n";
    if (settled) {
        const auto& s = simulator.node(leaders.front()).session();
        report << "  converged since " << seconds(*simulator.converged_since()) << " leader=" << leaders.front()
               << " epoch=" << (s ? s->epoch : 0) << "\n";
    } else {
        report << "  NOT converged at end of run\n";
    }
    report << "  messages sent=" << metrics.sends << " broadcasts=" << metrics.broadcasts
           << " deliveries=" << metrics.deliveries << " drops=" << metrics.total_drops()
           << " suppressed=" << metrics.suppressed << "\n";
    if (cost) report << "  cost " << cost->render() << " [" << cost_status << "]\n";
    report << "  audit " << (audit.clean() ? "clean" : "FINDINGS") << " keys=" << audit.keys_checked
           << " findings=" << audit.findings.size() << "\n";
    return (audit.clean() && settled) ? 0 : 1;
}

int cmd_run(const RunOptions& opt) {
    if (opt.metrics_format != "text") throw Error(Errc::ConfigError, "unsupported metrics format " + opt.metrics_format);
    if (opt.toy && opt.prod) throw Error(Errc::ConfigError, "--toy and --prod are exclusive");
    if (opt.repeat == 0) throw Error(Errc::ConfigError, "--repeat must be positive");
    sim::Scenario scenario;
    if (!opt.scenario.empty()) scenario = sim::Scenario::load(opt.scenario);
    auto params = load_params(opt.toy, opt.params);
    sim::parse_duration(opt.duration);

    std::vector<std::string> reports(opt.repeat);
    std::vector<int> codes(opt.repeat, 0);
    std::vector<std::string> errors(opt.repeat);
    auto work = [&](std::uint32_t i) {
        std::ostringstream r;
        try {
            codes[i] = run_one(opt, opt.seed + i, scenario, params, r);
        } catch (const Error& e) {
            errors[i] = e.what();
            codes[i] = 2;
        }
        reports[i] = r.str();
    };
    const unsigned workers = std::max(1U, std::min(opt.repeat, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    std::mutex next_mutex;
    std::uint32_t next = 0;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::uint32_t i;
                {
                    std::lock_guard lock(next_mutex);
                    if (next >= opt.repeat) return;
                    i = next++;
                }
                work(i);
            }
        });
    }
    for (auto& t : pool) t.join();

    int code = 0;
    std::uint32_t ok = 0;
    for (std::uint32_t i = 0; i < opt.repeat; ++i) {
        std::cout << reports[i];
        if (!errors[i].empty()) std::cerr << "seed " << opt.seed + i << ": " << errors[i] << "\n";
        if (codes[i] == 0) ++ok;
        code = std::max(code, codes[i]);
    }
    if (opt.repeat > 1) std::cout << ok << "/" << opt.repeat << " runs clean and converged\n";
    return code;
}

template <typename F>
double time_seconds(F&& f) {
    auto start = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_bench(std::uint32_t iterations, std::uint32_t group_size, std::uint64_t seed) {
    auto toy = std::make_shared<const group::GroupParams>(group::GroupParams::toy());
    auto prod = load_params(false, "");
    Rng rng(seed);

    for (const auto& params : {toy, prod}) {
        group::ExpCounter counter;
        group::GroupOps ops(*params, counter);
        std::vector<group::Scalar> secrets;
        for (std::uint32_t i = 0; i < iterations; ++i) secrets.push_back(group::random_scalar(rng, *params));
        group::GroupElement sink;
        double t = time_seconds([&] {
            for (const auto& s : secrets) sink = ops.mul(sink, gka::blind(s, ops));
        });
        std::cout << "blind " << params->name() << ": " << static_cast<std::uint64_t>(iterations / t)
                  << " blindings/s (" << iterations << " in " << t << " s)\n";
    }

    const auto& params = *prod;
    std::vector<gka::Contribution> contributions;
    {
        group::ExpCounter setup;
        group::GroupOps ops(params, setup);
        for (std::uint32_t i = 0; i < group_size; ++i) {
            contributions.push_back(gka::Contribution{i + 2, {}, gka::blind(group::random_scalar(rng, params), ops)});
        }
    }
    const auto leader_secret = group::random_scalar(rng, params);

    // Batched: everything but the last contribution was absorbed as it arrived.
    group::ExpCounter batched_counter;
    group::GroupOps batched_ops(params, batched_counter);
    gka::LeaderBatch batch(leader_secret, batched_ops);
    for (std::size_t i = 0; i + 1 < contributions.size(); ++i) batch.absorb(contributions[i], batched_ops);
    const auto before = batched_counter.count;
    std::uint64_t finalize_exps = 0;
    double batched = time_seconds([&] {
        batch.absorb(contributions.back(), batched_ops);
        const auto at_finalize = batched_counter.count;
        auto result = batch.finalize(batched_ops);
        finalize_exps = batched_counter.count - at_finalize;
        auto m = msg::build_igroup(1, {}, 1, msg::group_entries(batch.contributions(), result.responses));
        (void)msg::encode_canonical(m, params);
    });
    const auto batched_exps = batched_counter.count - before;

    group::ExpCounter plain_counter;
    group::GroupOps plain_ops(params, plain_counter);
    double unbatched = time_seconds([&] {
        auto result = gka::compute_key_leader(leader_secret, contributions, plain_ops);
        auto m = msg::build_igroup(1, {}, 1, msg::group_entries(contributions, result.responses));
        (void)msg::encode_canonical(m, params);
    });

    std::cout << "leader, " << group_size << " contributions, " << params.name() << ", last contribution to IGROUP:\n";
    std::cout << "  batched:   " << batched * 1e3 << " ms, " << batched_exps << " exps on the critical path ("
              << finalize_exps << " at finalize)\n";
    std::cout << "  unbatched: " << unbatched * 1e3 << " ms, " << plain_counter.count
              << " exps on the critical path\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AGDH group key agreement simulator"};
    app.require_subcommand(1);

    RunOptions opt;
    auto* run = app.add_subcommand("run", "Simulate a network, audit the transcript and report");
    run->add_option("--nodes", opt.nodes, "Initial node count")->check(CLI::Range(1U, 100000U));
    run->add_option("--loss", opt.loss, "Per-receiver loss probability")->check(CLI::Range(0.0, 1.0));
    run->add_option("--seed", opt.seed, "Seed");
    run->add_option("--duration", opt.duration, "Simulated time, e.g. 120s or 2m");
    run->add_option("--scenario", opt.scenario, "Scenario file");
    run->add_option("--out", opt.out, "Directory for transcript.txt, metrics.txt and audit.txt");
    run->add_flag("--eager-rekey", opt.eager_rekey, "Rekey as soon as a new member replies");
    run->add_flag("--toy", opt.toy, "Use the p=23 test group");
    run->add_flag("--prod", opt.prod, "Use the 1024-bit group (default)");
    run->add_option("--params", opt.params, "Parameter file");
    run->add_option("--metrics-format", opt.metrics_format, "Metrics format (text)");
    run->add_option("--repeat", opt.repeat, "Run K consecutive seeds in parallel");
    run->add_flag("--ed25519", opt.ed25519, "Sign with Ed25519 instead of HMAC");

    std::uint32_t iterations = 2000;
    std::uint32_t group_size = 50;
    std::uint64_t bench_seed = 1;
    auto* bench = app.add_subcommand("bench", "Time blinding and leader key computation");
    bench->add_option("--iterations", iterations, "Blindings per group")->check(CLI::PositiveNumber);
    bench->add_option("--group-size", group_size, "Contributions at the leader")->check(CLI::Range(1U, 10000U));
    bench->add_option("--seed", bench_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(opt);
        return cmd_bench(iterations, group_size, bench_seed);
    } catch (const Error& e) {
        std::cerr << "agdh: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "agdh: " << e.what() << "\n";
        return 2;
    }
}
