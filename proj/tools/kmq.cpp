#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include <iostream>
#include <sstream>

#include <kmq/registry.hpp>

using namespace kmq;
using nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string join_params(const Params& p)
{
    std::string s;
    for (auto& [k, v] : p) s += (s.empty() ? "" : ";") + k + "=" + v;
    return s;
}

std::string csv_quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
    return o + "\"";
}

ordered_json number(double x)
{
    if (std::isfinite(x)) return x;
    return nullptr;
}

void emit_reports(const std::vector<IdentityReport>& rs, const std::string& format)
{
    if (format == "json") {
        ordered_json a = ordered_json::array();
        for (auto& r : rs) {
            ordered_json p = ordered_json::object();
            for (auto& [k, v] : r.params) p[k] = v;
            a.push_back({{"identity_id", r.identity_id},
                         {"params", p},
                         {"residual", number(r.residual)},
                         {"tolerance", r.tolerance},
                         {"verdict", to_string(r.verdict)},
                         {"wall_time_ms", r.wall_time_ms},
                         {"note", r.note}});
        }
        std::cout << a.dump(2) << "\n";
    } else if (format == "csv") {
        std::cout << "identity_id,params,residual,tolerance,verdict,wall_time_ms,note\n";
        for (auto& r : rs)
            std::cout << fmt::format("{},{},{:.6e},{:.3e},{},{:.3f},{}\n", r.identity_id, csv_quote(join_params(r.params)),
                                     r.residual, r.tolerance, to_string(r.verdict), r.wall_time_ms, csv_quote(r.note));
    } else {
        for (auto& r : rs) {
            std::cout << fmt::format("{:<14} {:<42} res={:<11.3e} tol={:<8.1e} {:>9.1f} ms  {}", to_string(r.verdict),
                                     r.identity_id, r.residual, r.tolerance, r.wall_time_ms, join_params(r.params));
            if (!r.note.empty()) std::cout << "  [" << r.note << "]";
            std::cout << "\n";
        }
        long n[4] = {0, 0, 0, 0};
        for (auto& r : rs) ++n[int(r.verdict)];
        std::cout << fmt::format("{} reports: {} PASS, {} FAIL, {} EXPECTED_FAIL, {} SKIPPED\n", rs.size(), n[0], n[1],
                                 n[2], n[3]);
    }
}

// rows of named columns, in the chosen format
struct Table {
    std::vector<std::string> cols;
    std::vector<std::vector<std::string>> rows;

    void emit(const std::string& format) const
    {
        if (format == "json") {
            ordered_json a = ordered_json::array();
            for (auto& row : rows) {
                ordered_json o;
                for (size_t k = 0; k < cols.size(); ++k) o[cols[k]] = row[k];
                a.push_back(o);
            }
            std::cout << a.dump(2) << "\n";
            return;
        }
        const char* sep = format == "csv" ? "," : "  ";
        std::vector<size_t> w(cols.size());
        for (size_t k = 0; k < cols.size(); ++k) {
            w[k] = cols[k].size();
            for (auto& row : rows) w[k] = std::max(w[k], row[k].size());
        }
        auto line = [&](const std::vector<std::string>& v) {
            for (size_t k = 0; k < v.size(); ++k) {
                if (k) std::cout << sep;
                std::cout << (format == "csv" ? csv_quote(v[k]) : fmt::format("{:>{}}", v[k], w[k]));
            }
            std::cout << "\n";
        };
        line(cols);
        for (auto& row : rows) line(row);
    }
};

std::string g17(double x) { return fmt::format("{:.17g}", x); }

Regularisation parse_reg(const std::string& s)
{
    if (s == "I") return Regularisation::I;
    if (s == "II") return Regularisation::II;
    if (s == "III") return Regularisation::III;
    throw UsageError("--reg must be I, II or III");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Numerical verification of q-oscillator and Kashiwara-Miwa model identities"};
    app.require_subcommand(1);
    std::string format = "human";

    // verify
    auto* verify = app.add_subcommand("verify", "run the registered identities");
    app.set_config("--config", "", "INI-style file with a [verify] section; flags override it");
    RunConfig cfg;
    std::string q_s, gamma_s;
    double tol = -1;
    bool list = false;
    verify->add_option("--filter", cfg.filter, "glob over identity ids")->capture_default_str();
    verify->add_option("--q", q_s, "deformation parameter (complex), replacing the per-identity defaults");
    verify->add_option("--gamma", gamma_s, "C | selected:NU | generic:C");
    verify->add_option("--theta", cfg.theta, "b = e^{i theta} for the modular suite")->capture_default_str();
    verify->add_option("--tol", tol, "override every tolerance");
    verify->add_option("--seed", cfg.seed, "seed for randomized parameter points")->capture_default_str();
    verify->add_option("--format", format, "json | csv | human")
        ->check(CLI::IsMember({"json", "csv", "human"}))
        ->capture_default_str();
    verify->add_option("--jobs", cfg.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    verify->add_option("--A-max", cfg.A_max, "occupation window for completeness")->capture_default_str();
    verify->add_option("--M-max", cfg.M_max, "spin window for completeness")->capture_default_str();
    verify->add_option("--spin-cutoff", cfg.spin_cutoff, "spin cutoff for the box intertwining")->capture_default_str();
    verify->add_option("--quad-L", cfg.quad_L, "modular quadrature half-width")->capture_default_str();
    verify->add_option("--quad-points", cfg.quad_points, "initial modular quadrature points")->capture_default_str();
    verify->add_option("--tol-quad", cfg.tol_quad, "modular quadrature tolerance")->capture_default_str();
    verify->add_flag("--skip-slow", cfg.skip_slow, "skip identities marked slow");
    verify->add_flag("--list", list, "list matching identity ids and exit");

    // table
    auto* table = app.add_subcommand("table", "tabulate a Boltzmann weight over a grid");
    std::string weight_id;
    std::string t_q = "0.4", t_x = "0.7", t_mu = "0.25i", t_gamma = "selected:0";
    long m_lo = 0, m_hi = 5;
    bool m_set = false;
    double t_theta = pi / 5;
    std::vector<double> grid{-0.6, -0.2, 0.2, 0.6, 1.0};
    table->add_option("weight_id", weight_id, "fock.V | vgamma.Vbold | modular.V")->required();
    table->add_option("--q", t_q, "deformation parameter")->capture_default_str();
    table->add_option("--x", t_x, "spectral parameter (fock.V, vgamma.Vbold)")->capture_default_str();
    table->add_option("--gamma", t_gamma, "C | selected:NU | generic:C (vgamma.Vbold)")->capture_default_str();
    table->add_option("--m-lo", m_lo, "lowest spin")->each([&](const std::string&) { m_set = true; });
    table->add_option("--m-hi", m_hi, "highest spin")->each([&](const std::string&) { m_set = true; });
    table->add_option("--mu", t_mu, "spectral parameter (modular.V)")->capture_default_str();
    table->add_option("--theta", t_theta, "b = e^{i theta} (modular.V)")->capture_default_str();
    table->add_option("--grid", grid, "x and y values (modular.V)")->delimiter(',');
    table->add_option("--format", format, "json | csv | human")->check(CLI::IsMember({"json", "csv", "human"}));

    // spectrum
    auto* spectrum = app.add_subcommand("spectrum", "lowest eigenvalues of the truncated operator");
    std::vector<long> N_list{8, 16, 24, 32};
    std::string reg_s = "I";
    double s_q = 0.4;
    spectrum->add_option("--N-list", N_list, "increasing truncation sizes")->delimiter(',');
    spectrum->add_option("--reg", reg_s, "I | II | III")->capture_default_str();
    spectrum->add_option("--q", s_q, "0 < q < 1")->capture_default_str();
    spectrum->add_option("--format", format, "json | csv | human")->check(CLI::IsMember({"json", "csv", "human"}));

    // the config option belongs to the top-level app, so that file sections
    // address subcommands; accept it after "verify" as well
    std::vector<std::string> args(argv + 1, argv + argc);
    for (size_t k = 0; k < args.size(); ++k) {
        bool eq = args[k].rfind("--config=", 0) == 0;
        if (args[k] != "--config" && !eq) continue;
        size_t n = eq || k + 1 == args.size() ? 1 : 2;
        std::vector<std::string> opt(args.begin() + k, args.begin() + k + n);
        args.erase(args.begin() + k, args.begin() + k + n);
        args.insert(args.begin(), opt.begin(), opt.end());
        break;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*verify) {
            if (!q_s.empty()) cfg.q = parse_complex(q_s);
            if (!gamma_s.empty()) cfg.gamma = GammaSpec::parse(gamma_s);
            if (tol > 0) cfg.tol = tol;
            if (list) {
                std::vector<std::string> ids;
                for (auto& e : identity_registry())
                    for (auto& id : e.ids)
                        if (!(cfg.skip_slow && e.slow) && glob_match(cfg.filter, id)) ids.push_back(id + (e.slow ? "  (slow)" : ""));
                std::sort(ids.begin(), ids.end());
                if (ids.empty()) throw UsageError("no identity matches '" + cfg.filter + "'");
                for (auto& id : ids) std::cout << id << "\n";
                return 0;
            }
            auto res = run(cfg);
            if (!res.matched) throw UsageError("no identity matches '" + cfg.filter + "'\n" + verify->help());
            emit_reports(res.reports, format);
            return res.any_fail ? 1 : 0;
        }
        if (*table) {
            Table t;
            if (weight_id == "fock.V") {
                QContext<cd> ctx(parse_complex(t_q));
                FockWeights fw(ctx);
                cd x = parse_complex(t_x);
                t.cols = {"m", "mp", "re", "im"};
                for (long m = m_lo; m <= m_hi; ++m)
                    for (long mp = m_lo; mp <= m_hi; ++mp) {
                        cd v = fw.V(x, m, mp);
                        t.rows.push_back({std::to_string(m), std::to_string(mp), g17(v.real()), g17(v.imag())});
                    }
            } else if (weight_id == "vgamma.Vbold") {
                QContext<cd> ctx(parse_complex(t_q));
                if (!m_set) m_lo = -3, m_hi = 3;
                auto gc = GammaSpec::parse(t_gamma).context(ctx);
                KMWeights kw(gc, ctx);
                cd x = t_x == "q" ? ctx.q : parse_complex(t_x);
                t.cols = {"a", "b", "re", "im"};
                for (long a = m_lo; a <= m_hi; ++a)
                    for (long b = m_lo; b <= m_hi; ++b) {
                        cd v = kw.V(x, a, b);
                        t.rows.push_back({std::to_string(a), std::to_string(b), g17(v.real()), g17(v.imag())});
                    }
            } else if (weight_id == "modular.V") {
                ModularContext mc(t_theta);
                cd mu = parse_complex(t_mu);
                t.cols = {"x", "y", "re", "im"};
                for (double x : grid)
                    for (double y : grid) {
                        cd v = weight_V_modular(mu, x, y, mc);
                        t.rows.push_back({g17(x), g17(y), g17(v.real()), g17(v.imag())});
                    }
            } else {
                throw UsageError("unknown weight id '" + weight_id + "' (fock.V, vgamma.Vbold, modular.V)");
            }
            t.emit(format);
            return 0;
        }
        if (*spectrum) {
            auto reg = parse_reg(reg_s);
            auto rep = spectral_experiment(s_q, N_list, reg);
            Table t;
            t.cols = {"N", "k", "re", "im", "error"};
            for (auto& row : rep.rows)
                for (size_t k = 0; k < row.lowest.size(); ++k)
                    t.rows.push_back({std::to_string(row.N), std::to_string(k), g17(row.lowest[k].real()),
                                      g17(row.lowest[k].imag()), k < row.error.size() ? g17(row.error[k]) : ""});
            t.emit(format);
            if (reg == Regularisation::III && format == "human")
                std::cout << fmt::format("odd/even subsequence gap {:.6g}\n", rep.subsequence_gap);
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
