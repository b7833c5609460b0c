#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "regentree/regentree.hpp"

using namespace regentree;

namespace {

std::string parse_message(std::string_view text) {
  try {
    parse_tree(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse_error);
    return e.what();
  }
  ADD_FAILURE() << "no error for " << text;
  return {};
}

}  // namespace

TEST(Mtt, Segment) {
  const auto t = parse_tree(":1");
  EXPECT_EQ(t, MarkedTree::segment(1.0));
  EXPECT_EQ(serialize_tree(t), ":1");
}

TEST(Mtt, NestedExample) {
  const auto t = parse_tree("((:0.5,:0.25):1):0");
  EXPECT_EQ(t.shape().child_counts(), (std::vector<std::uint32_t>{1, 2, 0, 0}));
  EXPECT_EQ(t.lengths(), (std::vector<double>{0.0, 1.0, 0.5, 0.25}));
  EXPECT_EQ(t.height(), 1.5);
  EXPECT_EQ(serialize_tree(t), "((:0.5,:0.25):1):0");
}

TEST(Mtt, WhitespaceTolerated) {
  EXPECT_EQ(parse_tree(" ( :1 , :2 ) : 0 "), parse_tree("(:1,:2):0"));
}

TEST(Mtt, ErrorsCarryColumn) {
  EXPECT_NE(parse_message("(:1").find("column 3"), std::string::npos);
  EXPECT_NE(parse_message(":-1").find("nonnegative"), std::string::npos);
  EXPECT_NE(parse_message(":1:2").find("trailing"), std::string::npos);
  EXPECT_NE(parse_message("(:1,):0").find("column 4"), std::string::npos);
  EXPECT_NE(parse_message("").find("end of input"), std::string::npos);
  EXPECT_NE(parse_message("(:1)").find("column 4"), std::string::npos);
  EXPECT_NE(parse_message(":inf").find("finite"), std::string::npos);
}

TEST(Mtt, RoundTripIsExact) {
  Rng rng(5, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const MarkedTree t = oracle::random_tree(rng, 60);
    const std::string s = serialize_tree(t);
    EXPECT_EQ(parse_tree(s), t) << s;
  }
}

TEST(Mtt, StreamSkipsCommentsAndReportsLine) {
  std::istringstream in("# header\n\n:1\n(:1,:2):0\n");
  const auto ts = parse_trees(in);
  ASSERT_EQ(ts.size(), 2u);
  EXPECT_EQ(ts[1].height(), 2.0);

  std::istringstream bad(":1\n(:1\n");
  try {
    parse_trees(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::ostringstream out;
  write_trees(out, ts);
  EXPECT_EQ(out.str(), ":1\n(:1,:2):0\n");
}

TEST(Mtt, MissingFile) {
  try {
    parse_tree_file("/nonexistent/trees.mtt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io_error);
  }
}
