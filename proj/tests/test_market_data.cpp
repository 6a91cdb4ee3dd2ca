#include <chrono>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <marketron/market_data.hpp>

using namespace marketron;
using namespace std::chrono;

#ifndef MARKETRON_DATA_DIR
#define MARKETRON_DATA_DIR "data"
#endif

namespace {

std::string iso(sys_days d) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

bool is_business_day(sys_days d) {
    const std::chrono::weekday w{d};
    return w != Saturday && w != Sunday;
}

// Every weekday in [from, to] with a deterministic positive close.
std::string business_day_csv(sys_days from, sys_days to, std::vector<std::string>* month_ends = nullptr) {
    std::ostringstream os;
    os << "date,close\n";
    std::string last;
    int prev_month = -1;
    for (auto d = from; d <= to; d += days{1}) {
        if (!is_business_day(d)) continue;
        const year_month_day ymd{d};
        const int m = static_cast<int>(static_cast<unsigned>(ymd.month()));
        if (month_ends && prev_month != -1 && m != prev_month) month_ends->push_back(last);
        prev_month = m;
        last = iso(d);
        os << last << "," << 1000.0 + 0.1 * static_cast<double>(d.time_since_epoch().count() % 997) << "\n";
    }
    if (month_ends) month_ends->push_back(last);
    return os.str();
}

MarketData ingest_str(const std::string& s, Frequency f, double s_ref = kDefaultSRef) {
    std::istringstream in(s);
    return ingest(in, f, s_ref);
}

std::string error_of(const std::string& s, Frequency f) {
    try {
        ingest_str(s, f);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Ingest, MonthlyPassthrough) {
    const auto m = ingest_str("date,close\n2020-01-31,1000\n2020-02-28,1100\n2020-03-31,990\n", Frequency::Monthly);
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m.dates[1], "2020-02-28");
    EXPECT_NEAR(m.monthly_log_prices[0], 0.0, 1e-15);
    EXPECT_NEAR(m.monthly_log_prices[1], std::log(1.1), 1e-15);
    ASSERT_EQ(m.monthly_log_returns.size(), 2u);
    EXPECT_NEAR(m.monthly_log_returns[1], std::log(990.0 / 1100.0), 1e-15);
}

TEST(Ingest, ReferenceLevelShiftsLogPrices) {
    const auto a = ingest_str("date,close\n2020-01-31,1000\n2020-02-28,1100\n", Frequency::Monthly, 1000);
    const auto b = ingest_str("date,close\n2020-01-31,1000\n2020-02-28,1100\n", Frequency::Monthly, 500);
    EXPECT_NEAR(b.monthly_log_prices[0] - a.monthly_log_prices[0], std::log(2.0), 1e-15);
    EXPECT_NEAR(a.monthly_log_returns[0], b.monthly_log_returns[0], 1e-15);
    EXPECT_THROW(ingest_str("date,close\n2020-01-31,1\n", Frequency::Monthly, 0.0), Error);
}

TEST(Ingest, DailyKeepsLastBusinessDayOfEachMonth) {
    std::vector<std::string> ends;
    const auto csv = business_day_csv(sys_days{2000y / January / 3}, sys_days{2024y / October / 31}, &ends);
    const auto m = ingest_str(csv, Frequency::Daily);
    EXPECT_EQ(m.size(), 298u);
    EXPECT_EQ(m.dates, ends);
    EXPECT_EQ(m.dates.front(), "2000-01-31");
    EXPECT_EQ(m.dates.back(), "2024-10-31");
    EXPECT_EQ(m.dates[1], "2000-02-29");
    EXPECT_EQ(m.monthly_log_returns.size(), 297u);
    for (std::size_t i = 0; i < m.monthly_log_returns.size(); ++i)
        EXPECT_DOUBLE_EQ(m.monthly_log_returns[i], m.monthly_log_prices[i + 1] - m.monthly_log_prices[i]);
}

TEST(Ingest, RejectsLongGapWithRows) {
    std::ostringstream os;
    os << "date,close\n";
    for (auto d = sys_days{2021y / March / 1}; d <= sys_days{2021y / May / 31}; d += days{1}) {
        if (!is_business_day(d)) continue;
        if (d > sys_days{2021y / April / 1} && d < sys_days{2021y / April / 13}) continue;  // 7 business days
        os << iso(d) << ",100\n";
    }
    EXPECT_NO_THROW(ingest_str(os.str(), Frequency::Daily));

    std::ostringstream bad;
    bad << "date,close\n2021-03-01,100\n2021-03-02,100\n2021-03-15,100\n";
    const auto msg = error_of(bad.str(), Frequency::Daily);
    EXPECT_NE(msg.find("gap"), std::string::npos) << msg;
    EXPECT_NE(msg.find("rows 3-4"), std::string::npos) << msg;
}

TEST(Ingest, ErrorsNameTheRow) {
    EXPECT_NE(error_of("date,close\n2020-01-02,1\n2020-01-03,1\n2020-13-06,1\n", Frequency::Daily).find("row 4"),
              std::string::npos);
    EXPECT_NE(error_of("date,close\n2020-01-02,1\n2020-01-03,abc\n", Frequency::Daily).find("row 3"), std::string::npos);
    EXPECT_NE(error_of("date,close\n2020-01-02,1\n2020-01-03,-5\n", Frequency::Daily).find("row 3"), std::string::npos);
    EXPECT_NE(error_of("date,close\n2020-01-03,1\n2020-01-02,1\n", Frequency::Daily).find("not strictly increasing"),
              std::string::npos);
    EXPECT_NE(error_of("date,close\n2020-01-03\n", Frequency::Daily).find("row 2"), std::string::npos);
    EXPECT_NE(error_of("day,price\n2020-01-03,1\n", Frequency::Daily).find("header"), std::string::npos);
    EXPECT_NE(error_of("", Frequency::Daily).find("empty"), std::string::npos);
    EXPECT_NE(error_of("date,close\n", Frequency::Daily).find("no data"), std::string::npos);
    EXPECT_NE(error_of("date,close\n2020-01-31,1\n2020-03-31,1\n", Frequency::Monthly).find("consecutive"),
              std::string::npos);
}

TEST(Ingest, ToleratesBomBlankLinesAndCrlf) {
    const auto m = ingest_str("\xEF\xBB\xBF" "date,close\r\n2020-01-31,1000\r\n\r\n2020-02-28,1200\r\n",
                              Frequency::Monthly);
    EXPECT_EQ(m.size(), 2u);
    EXPECT_NEAR(m.monthly_log_returns[0], std::log(1.2), 1e-15);
}

TEST(Ingest, SliceAndHead) {
    std::vector<std::string> ends;
    const auto m = ingest_str(business_day_csv(sys_days{1999y / November / 1}, sys_days{2000y / June / 30}, &ends),
                              Frequency::Daily);
    ASSERT_EQ(m.size(), 8u);
    const auto s = slice_from(m, "2000-01");
    ASSERT_EQ(s.size(), 6u);
    EXPECT_EQ(s.dates.front().substr(0, 7), "2000-01");
    EXPECT_EQ(s.monthly_log_returns.size(), 5u);
    EXPECT_EQ(s.monthly_log_prices.front(), m.monthly_log_prices[2]);
    const auto h = s.head(3);
    EXPECT_EQ(h.size(), 3u);
    EXPECT_EQ(h.monthly_log_returns.size(), 2u);
    EXPECT_THROW(s.head(1), Error);
    EXPECT_THROW(s.head(7), Error);
}

TEST(Ingest, BundledIndexFile) {
    const auto m = ingest_file(std::string(MARKETRON_DATA_DIR) + "/sp500_daily.csv", Frequency::Daily);
    EXPECT_EQ(m.size(), 240u);
    EXPECT_EQ(m.dates.front(), "1999-01-29");
    EXPECT_EQ(m.dates.back(), "2018-12-31");
    EXPECT_NEAR(m.closes.back(), 2506.85, 1e-9);
    EXPECT_THROW(ingest_file("/nonexistent/file.csv", Frequency::Daily), Error);
    EXPECT_THROW(parse_frequency("weekly"), Error);
}
