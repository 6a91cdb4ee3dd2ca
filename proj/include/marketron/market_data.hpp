#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace marketron {

inline constexpr double kDefaultSRef = 1000.0;

struct MarketData {
    std::vector<std::string> dates;
    std::vector<double> closes;
    std::vector<double> monthly_log_prices;
    std::vector<double> monthly_log_returns;
    double s_ref = kDefaultSRef;

    std::size_t size() const { return monthly_log_prices.size(); }

    // First n months of the series (n log-prices, n - 1 returns).
    MarketData head(std::size_t n) const {
        require(n >= 2 && n <= size(), "domain", "MarketData::head: bad length");
        MarketData m;
        m.s_ref = s_ref;
        m.dates.assign(dates.begin(), dates.begin() + static_cast<std::ptrdiff_t>(n));
        m.closes.assign(closes.begin(), closes.begin() + static_cast<std::ptrdiff_t>(n));
        m.monthly_log_prices.assign(monthly_log_prices.begin(), monthly_log_prices.begin() + static_cast<std::ptrdiff_t>(n));
        m.monthly_log_returns.assign(monthly_log_returns.begin(),
                                     monthly_log_returns.begin() + static_cast<std::ptrdiff_t>(n - 1));
        return m;
    }
};

inline MarketData market_from_log_prices(std::vector<double> x, double s_ref = kDefaultSRef) {
    MarketData m;
    m.s_ref = s_ref;
    m.monthly_log_prices = std::move(x);
    for (std::size_t i = 0; i < m.monthly_log_prices.size(); ++i) {
        m.closes.push_back(s_ref * std::exp(m.monthly_log_prices[i]));
        if (i > 0) m.monthly_log_returns.push_back(m.monthly_log_prices[i] - m.monthly_log_prices[i - 1]);
    }
    return m;
}

enum class Frequency { Daily, Monthly };

inline Frequency parse_frequency(std::string_view s) {
    if (s == "daily") return Frequency::Daily;
    if (s == "monthly") return Frequency::Monthly;
    throw Error("config", "unknown frequency '" + std::string(s) + "'");
}

namespace detail {

inline bool parse_iso_date(std::string_view s, std::chrono::year_month_day& out) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (s.size() != 10) return false;
    if (std::sscanf(std::string(s).c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return false;
    out = std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    return out.ok();
}

// Weekdays strictly between a and b.
inline long business_days_between(std::chrono::sys_days a, std::chrono::sys_days b) {
    long n = 0;
    for (auto d = a + std::chrono::days{1}; d < b; d += std::chrono::days{1}) {
        const std::chrono::weekday w{d};
        if (w != std::chrono::Saturday && w != std::chrono::Sunday) ++n;
    }
    return n;
}

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace detail

// Parses `date,close` rows, keeps month-end closes and normalizes by s_ref.
inline MarketData ingest(std::istream& in, Frequency freq, double s_ref = kDefaultSRef) {
    using namespace std::chrono;
    require(s_ref > 0, "config", "ingest: s_ref must be > 0");
    std::string line;
    std::size_t row = 0;
    require(static_cast<bool>(std::getline(in, line)), "ingest", "ingest: empty input");
    ++row;
    {
        std::string h = detail::trim(line);
        if (!h.empty() && static_cast<unsigned char>(h[0]) == 0xEF) h = h.substr(3);
        require(h == "date,close", "ingest", "ingest: header must be 'date,close' (row 1)");
    }
    std::vector<year_month_day> dates;
    std::vector<std::string> raw_dates;
    std::vector<double> closes;
    std::vector<std::size_t> rows;
    while (std::getline(in, line)) {
        ++row;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto comma = line.find(',');
        const std::string where = " (row " + std::to_string(row) + ")";
        require(comma != std::string::npos, "ingest", "ingest: expected two columns" + where);
        const std::string ds = detail::trim(line.substr(0, comma));
        const std::string cs = detail::trim(line.substr(comma + 1));
        year_month_day ymd{};
        require(detail::parse_iso_date(ds, ymd), "ingest", "ingest: unparseable date '" + ds + "'" + where);
        double close = 0.0;
        std::size_t used = 0;
        try {
            close = std::stod(cs, &used);
        } catch (...) {
            used = 0;
        }
        require(used == cs.size() && !cs.empty() && std::isfinite(close), "ingest",
                "ingest: unparseable close '" + cs + "'" + where);
        require(close > 0, "ingest", "ingest: non-positive close" + where);
        if (!dates.empty()) {
            require(sys_days{ymd} > sys_days{dates.back()}, "ingest",
                    "ingest: dates not strictly increasing" + where);
        }
        dates.push_back(ymd);
        raw_dates.push_back(ds);
        closes.push_back(close);
        rows.push_back(row);
    }
    require(!dates.empty(), "ingest", "ingest: no data rows");

    MarketData m;
    m.s_ref = s_ref;
    auto month_index = [](const year_month_day& d) {
        return static_cast<int>(d.year()) * 12 + static_cast<int>(static_cast<unsigned>(d.month())) - 1;
    };
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (i > 0) {
            const std::string where = " (rows " + std::to_string(rows[i - 1]) + "-" + std::to_string(rows[i]) + ")";
            if (freq == Frequency::Daily) {
                require(detail::business_days_between(sys_days{dates[i - 1]}, sys_days{dates[i]}) <= 7, "ingest",
                        "ingest: gap longer than 7 business days" + where);
            } else {
                require(month_index(dates[i]) - month_index(dates[i - 1]) == 1, "ingest",
                        "ingest: monthly rows must be consecutive months" + where);
            }
        }
        const bool last_of_month = i + 1 == dates.size() || month_index(dates[i + 1]) != month_index(dates[i]);
        if (freq == Frequency::Monthly || last_of_month) {
            m.dates.push_back(raw_dates[i]);
            m.closes.push_back(closes[i]);
            m.monthly_log_prices.push_back(std::log(closes[i] / s_ref));
        }
    }
    for (std::size_t i = 1; i < m.monthly_log_prices.size(); ++i)
        m.monthly_log_returns.push_back(m.monthly_log_prices[i] - m.monthly_log_prices[i - 1]);
    return m;
}

inline MarketData ingest_file(const std::string& path, Frequency freq, double s_ref = kDefaultSRef) {
    std::ifstream f(path);
    require(f.good(), "io", "ingest: cannot open '" + path + "'");
    return ingest(f, freq, s_ref);
}

// Restricts to months from `start` ("YYYY-MM") onwards.
inline MarketData slice_from(const MarketData& m, std::string_view start) {
    MarketData out;
    out.s_ref = m.s_ref;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.dates[i].substr(0, 7) < start) continue;
        out.dates.push_back(m.dates[i]);
        out.closes.push_back(m.closes[i]);
        out.monthly_log_prices.push_back(m.monthly_log_prices[i]);
    }
    for (std::size_t i = 1; i < out.monthly_log_prices.size(); ++i)
        out.monthly_log_returns.push_back(out.monthly_log_prices[i] - out.monthly_log_prices[i - 1]);
    return out;
}

} // namespace marketron
