#include "bdlab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bdlab {

using nlohmann::json;

namespace {

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string fmt_rho(double v) { return json(v).dump(); }

const std::vector<std::string> kStrategyOrder{"random", "minimum", "above50", "below50"};

struct CellAgg {
    std::string config_hash;
    std::string dataset, attack, strategy, mode;
    double rho = 0.0;
    int n_seeds = 0;
    double mean_asr = 0.0, mean_cacc = 0.0;
};

struct SidecarInfo {
    bool present = false;
    std::string group_key;  // effective config minus strategy
    std::string surrogate_name, victim_name;
};

SidecarInfo load_sidecar(const std::filesystem::path& configs_dir, const std::string& hash) {
    SidecarInfo info;
    const std::filesystem::path p = configs_dir / (hash + ".json");
    std::ifstream in(p, std::ios::binary);
    if (!in) return info;
    json j;
    try {
        in >> j;
        info.surrogate_name = j.at("surrogate").at("name").get<std::string>();
        info.victim_name = j.at("victim").at("name").get<std::string>();
        j.erase("strategy");
        info.group_key = j.dump();
        info.present = true;
    } catch (const json::exception&) {
        info = SidecarInfo{};
    }
    return info;
}

void write_file(const std::filesystem::path& path, const std::string& content,
                RenderedReport& rendered) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("I/O failure writing " + path.string());
    rendered.files.push_back(path);
}

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;  // (rho, value)
};

std::string svg_chart(const std::string& title, const std::vector<Series>& series) {
    const double width = 640, height = 400;
    const double ml = 60, mr = 20, mt = 36, mb = 46;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double x_min = series.front().points.front().first;
    double x_max = x_min;
    for (const Series& s : series) {
        for (const auto& [x, y] : s.points) {
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
        }
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    auto sy = [&](double y) { return mt + (1.0 - y) * ph; };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", v);
        return std::string(buf);
    };

    const std::vector<std::string> palette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

    // axes
    svg << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(ml)
        << "\" y2=\"" << num(mt + ph) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt + ph) << "\" x2=\"" << num(ml + pw)
        << "\" y2=\"" << num(mt + ph) << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double y = i * 0.25;
        svg << "<line x1=\"" << num(ml - 4) << "\" y1=\"" << num(sy(y)) << "\" x2=\"" << num(ml)
            << "\" y2=\"" << num(sy(y)) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(sy(y) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt3(y)
            << "</text>\n";
    }
    std::set<double> xticks;
    for (const Series& s : series) {
        for (const auto& [x, y] : s.points) xticks.insert(x);
    }
    for (double x : xticks) {
        svg << "<line x1=\"" << num(sx(x)) << "\" y1=\"" << num(mt + ph) << "\" x2=\""
            << num(sx(x)) << "\" y2=\"" << num(mt + ph + 4) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(mt + ph + 16)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt_rho(x) << "</text>\n";
    }
    svg << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(height - 10)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << "poison rate rho</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const std::string& color = palette[si % palette.size()];
        std::ostringstream pts;
        for (const auto& [x, y] : series[si].points) {
            pts << num(sx(x)) << "," << num(sy(y)) << " ";
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
            << pts.str() << "\"/>\n";
        for (const auto& [x, y] : series[si].points) {
            svg << "<circle cx=\"" << num(sx(x)) << "\" cy=\"" << num(sy(y))
                << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        svg << "<text x=\"" << num(ml + pw - 4) << "\" y=\"" << num(mt + 14 + 14 * si)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
            << color << "\">" << series[si].label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

RenderedReport render_report(const std::filesystem::path& ledger_path,
                             const std::filesystem::path& out_dir) {
    const std::vector<LedgerRow> rows = read_ledger(ledger_path);
    std::vector<LedgerRow> ok_rows;
    int error_rows = 0;
    for (const LedgerRow& r : rows) {
        if (r.cacc && r.asr) {
            ok_rows.push_back(r);
        } else {
            ++error_rows;
        }
    }
    if (ok_rows.empty()) throw ValidationError("ledger has no successful rows");

    const std::filesystem::path configs_dir = ledger_path.parent_path() / "configs";

    // aggregate per config_hash (seeds averaged)
    std::map<std::string, CellAgg> cells;
    for (const LedgerRow& r : ok_rows) {
        CellAgg& c = cells[r.config_hash];
        if (c.n_seeds == 0) {
            c.config_hash = r.config_hash;
            c.dataset = r.dataset;
            c.attack = r.attack;
            c.strategy = r.strategy;
            c.mode = r.mode;
            c.rho = r.rho;
        }
        ++c.n_seeds;
        c.mean_asr += r.asr->value();
        c.mean_cacc += r.cacc->value();
    }
    for (auto& [hash, c] : cells) {
        c.mean_asr /= c.n_seeds;
        c.mean_cacc /= c.n_seeds;
    }

    std::map<std::string, SidecarInfo> sidecars;
    bool all_sidecars = true;
    for (const auto& [hash, c] : cells) {
        sidecars[hash] = load_sidecar(configs_dir, hash);
        all_sidecars = all_sidecars && sidecars[hash].present;
    }

    RenderedReport rendered;
    std::ostringstream md;
    md << "# Experiment report\n\n";
    md << "Source ledger: `" << ledger_path.filename().string() << "` — " << ok_rows.size()
       << " result rows, " << cells.size() << " experiment cells";
    if (error_rows > 0) md << ", " << error_rows << " error rows";
    md << ".\n\n";

    // ---------------------------------------------------------------- cells csv
    {
        std::ostringstream csv;
        csv << "config_hash,dataset,attack,strategy,rho,mode,n_seeds,mean_asr,mean_cacc\n";
        for (const auto& [hash, c] : cells) {
            csv << c.config_hash << "," << c.dataset << "," << c.attack << "," << c.strategy
                << "," << fmt_rho(c.rho) << "," << c.mode << "," << c.n_seeds << ","
                << fmt3(c.mean_asr) << "," << fmt3(c.mean_cacc) << "\n";
        }
        write_file(out_dir / "cells.csv", csv.str(), rendered);
    }

    // ------------------------------------------------- per-dataset strategy table
    // rows: (attack, rho, mode); columns: ASR then CACC per strategy present
    std::set<std::string> strategies_present;
    for (const auto& [hash, c] : cells) strategies_present.insert(c.strategy);
    std::vector<std::string> strat_cols;
    for (const std::string& s : kStrategyOrder) {
        if (strategies_present.count(s)) strat_cols.push_back(s);
    }

    std::map<std::string, std::map<std::tuple<std::string, double, std::string>,
                                   std::map<std::string, const CellAgg*>>>
        by_dataset;
    for (const auto& [hash, c] : cells) {
        by_dataset[c.dataset][{c.attack, c.rho, c.mode}][c.strategy] = &c;
    }
    for (const auto& [dataset, table] : by_dataset) {
        md << "## Dataset: " << dataset << "\n\n";
        md << "| attack | rho | mode |";
        for (const auto& s : strat_cols) md << " ASR " << s << " |";
        for (const auto& s : strat_cols) md << " CACC " << s << " |";
        md << "\n|---|---|---|";
        for (std::size_t i = 0; i < 2 * strat_cols.size(); ++i) md << "---|";
        md << "\n";
        for (const auto& [key, row] : table) {
            const auto& [attack, rho, mode] = key;
            md << "| " << attack << " | " << fmt_rho(rho) << " | " << mode << " |";
            for (const auto& s : strat_cols) {
                auto it = row.find(s);
                md << " " << (it != row.end() ? fmt3(it->second->mean_asr) : "-") << " |";
            }
            for (const auto& s : strat_cols) {
                auto it = row.find(s);
                md << " " << (it != row.end() ? fmt3(it->second->mean_cacc) : "-") << " |";
            }
            md << "\n";
        }
        md << "\n";
    }

    // ------------------------------------------------------------- summary table
    // group cells by full config identity minus strategy (sidecar key when
    // available, the four ledger fields otherwise)
    std::map<std::string, std::map<std::string, const CellAgg*>> groups;
    for (const auto& [hash, c] : cells) {
        std::string key;
        if (all_sidecars) {
            key = sidecars[hash].group_key;
        } else {
            key = c.dataset + "|" + c.attack + "|" + fmt_rho(c.rho) + "|" + c.mode;
        }
        groups[key][c.strategy] = &c;
    }
    std::size_t complete = 0, skipped = 0;
    std::map<std::string, double> avg_asr;
    std::map<std::string, int> wins;
    for (const auto& [key, group] : groups) {
        bool is_complete = true;
        for (const auto& s : strat_cols) is_complete = is_complete && group.count(s);
        if (!is_complete) {
            ++skipped;
            continue;
        }
        ++complete;
        double best = -1.0;
        for (const auto& s : strat_cols) best = std::max(best, group.at(s)->mean_asr);
        for (const auto& s : strat_cols) {
            avg_asr[s] += group.at(s)->mean_asr;
            if (group.at(s)->mean_asr == best) ++wins[s];
        }
    }
    const bool have_summary = complete > 0 && strategies_present.count("random") &&
                              strat_cols.size() >= 2;
    if (have_summary) {
        for (auto& [s, v] : avg_asr) v /= static_cast<double>(complete);
        md << "## Strategy summary (" << complete << " configurations";
        if (skipped > 0) md << ", " << skipped << " incomplete skipped";
        md << ")\n\n";
        md << "| strategy | avg ASR | improvement vs random | wins |\n|---|---|---|---|\n";
        std::ostringstream csv;
        csv << "strategy,avg_asr,improvement_vs_random,wins,configurations\n";
        for (const auto& s : strat_cols) {
            const double improvement = s == "random" ? 0.0 : avg_asr[s] - avg_asr["random"];
            md << "| " << s << " | " << fmt3(avg_asr[s]) << " | "
               << (s == "random" ? std::string("-") : fmt3(improvement)) << " | " << wins[s]
               << " |\n";
            csv << s << "," << fmt3(avg_asr[s]) << "," << fmt3(improvement) << "," << wins[s]
                << "," << complete << "\n";
        }
        md << "\n";
        write_file(out_dir / "summary.csv", csv.str(), rendered);
    } else {
        md << "## Strategy summary\n\nSkipped: needs the random baseline plus at least one "
              "other strategy with complete configurations.\n\n";
    }

    // ------------------------------------------------------------ transfer matrix
    if (all_sidecars) {
        std::set<std::pair<std::string, std::string>> combos;
        for (const auto& [hash, c] : cells) {
            combos.insert({sidecars[hash].surrogate_name, sidecars[hash].victim_name});
        }
        if (combos.size() > 1) {
            std::set<std::string> surr_names, vict_names;
            for (const auto& [s, v] : combos) {
                surr_names.insert(s);
                vict_names.insert(v);
            }
            // ASR matrix, averaged over every cell with that (surrogate, victim)
            std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
            for (const auto& [hash, c] : cells) {
                auto& slot = acc[{sidecars[hash].surrogate_name, sidecars[hash].victim_name}];
                slot.first += c.mean_asr;
                slot.second += 1;
            }
            md << "## Transfer matrix (mean ASR; rows = surrogate, columns = victim)\n\n|  |";
            for (const auto& v : vict_names) md << " " << v << " |";
            md << "\n|---|";
            for (std::size_t i = 0; i < vict_names.size(); ++i) md << "---|";
            md << "\n";
            for (const auto& s : surr_names) {
                md << "| " << s << " |";
                for (const auto& v : vict_names) {
                    auto it = acc.find({s, v});
                    md << " "
                       << (it != acc.end() ? fmt3(it->second.first / it->second.second) : "-")
                       << " |";
                }
                md << "\n";
            }
            md << "\n";
        }
    }

    // --------------------------------------------------------------- sweep charts
    std::set<double> rhos;
    for (const auto& [hash, c] : cells) rhos.insert(c.rho);
    if (rhos.size() >= 2) {
        // one series per (dataset, attack, strategy, mode) with >= 2 rhos
        std::map<std::string, std::map<double, std::pair<double, double>>> series_map;
        for (const auto& [hash, c] : cells) {
            const std::string label = c.dataset + " " + c.attack + " " + c.strategy;
            series_map[label][c.rho] = {c.mean_asr, c.mean_cacc};
        }
        std::vector<Series> asr_series, cacc_series;
        for (const auto& [label, pts] : series_map) {
            if (pts.size() < 2) continue;
            Series sa{label, {}}, sc{label, {}};
            for (const auto& [rho, vals] : pts) {
                sa.points.push_back({rho, vals.first});
                sc.points.push_back({rho, vals.second});
            }
            asr_series.push_back(std::move(sa));
            cacc_series.push_back(std::move(sc));
        }
        if (!asr_series.empty()) {
            write_file(out_dir / "asr_vs_rho.svg", svg_chart("ASR vs poison rate", asr_series),
                       rendered);
            write_file(out_dir / "cacc_vs_rho.svg",
                       svg_chart("CACC vs poison rate", cacc_series), rendered);
            md << "## Poison-rate sweep\n\nCharts: `asr_vs_rho.svg`, `cacc_vs_rho.svg` ("
               << rhos.size() << " poison rates).\n\n";
        }
    }

    write_file(out_dir / "report.md", md.str(), rendered);
    std::sort(rendered.files.begin(), rendered.files.end());
    return rendered;
}

}  // namespace bdlab
