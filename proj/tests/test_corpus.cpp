#include <gtest/gtest.h>

#include "miwb/corpus.hpp"
#include "miwb/error.hpp"
#include "support.hpp"

using namespace miwb;
using corpus::InputFormat;
using corpus::Language;
using corpus::Speaker;
using test::code_of;

namespace {

bool has_action(const corpus::ParseResult& r, const std::string& action) {
  for (const auto& a : r.actions) {
    if (a.action == action) return true;
  }
  return false;
}

}  // namespace

TEST(ParseCorpus, MinimalDialogueHasOneRoundAndNoFlags) {
  const auto r = corpus::parse_corpus_text(
      R"([{"id":"d1","source":"s","language":"latin","turns":[{"speaker":"client","text":"hi"},{"speaker":"counselor","text":"hello"}]}])",
      InputFormat::NativeJson);
  ASSERT_EQ(r.dialogues.size(), 1u);
  EXPECT_EQ(r.dialogues[0].round_count(), 1u);
  EXPECT_FALSE(r.dialogues[0].has_trailing_client());
  EXPECT_TRUE(r.actions.empty());
}

TEST(ParseCorpus, LeadingCounselorBecomesLoggedPreamble) {
  const auto r = corpus::parse_corpus_text(
      R"([{"id":"d1","turns":[{"role":"assistant","content":"Welcome."},{"role":"user","content":"I smoke."},{"role":"assistant","content":"Tell me more."}]}])",
      InputFormat::TurnListJson);
  const auto& d = r.dialogues.at(0);
  ASSERT_TRUE(d.preamble.has_value());
  EXPECT_EQ(*d.preamble, "Welcome.");
  EXPECT_EQ(d.turns.front().speaker, Speaker::Client);
  EXPECT_EQ(d.round_count(), 1u);
  EXPECT_TRUE(has_action(r, "counselor_preamble"));
}

TEST(ParseCorpus, MissingSpeakerNamesTheRecord) {
  try {
    corpus::parse_corpus_text(
        R"([{"id":"a","turns":[{"speaker":"client","text":"x"}]},{"id":"b","turns":[{"text":"y"}]}])",
        InputFormat::NativeJson);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos);
  }
}

TEST(ParseCorpus, MergesSameSpeakerTurnsAndDropsEmpty) {
  const auto r = corpus::parse_corpus_text(
      "# id: p1\nClient: one\nClient: two\nCounselor:   \nCounselor: reply\n",
      InputFormat::PlainTranscript);
  const auto& d = r.dialogues.at(0);
  ASSERT_EQ(d.turns.size(), 2u);
  EXPECT_EQ(d.turns[0].text, "one\ntwo");
  EXPECT_TRUE(has_action(r, "merged_turns"));
  EXPECT_TRUE(has_action(r, "dropped_empty_turn"));
  EXPECT_NO_THROW(corpus::validate(d));
}

TEST(ParseCorpus, TrailingClientIsFlagged) {
  const auto r = corpus::parse_corpus_text("Client: a\nCounselor: b\nClient: c\n",
                                           InputFormat::PlainTranscript);
  EXPECT_TRUE(r.dialogues[0].has_trailing_client());
  EXPECT_EQ(r.dialogues[0].round_count(), 1u);
  EXPECT_TRUE(has_action(r, "trailing_client_turn"));
}

TEST(ParseCorpus, ErrorPaths) {
  EXPECT_EQ(code_of([] { corpus::parse_corpus("/nonexistent/x.json", InputFormat::NativeJson); }),
            Errc::FileUnreadable);
  EXPECT_EQ(code_of([] { corpus::parse_corpus_text("[]", InputFormat::NativeJson); }),
            Errc::EmptyCorpus);
  EXPECT_EQ(code_of([] { corpus::parse_corpus_text("{", InputFormat::NativeJson); }),
            Errc::MalformedRecord);
  EXPECT_EQ(code_of([] { corpus::parse_corpus_text("no label here", InputFormat::PlainTranscript); }),
            Errc::MalformedRecord);
}

TEST(ParseCorpus, ChineseLabelsAndFullwidthColon) {
  const auto r = corpus::parse_corpus_text("来访者：我最近压力很大。\n咨询师：听起来你很辛苦。\n",
                                           InputFormat::PlainTranscript);
  const auto& d = r.dialogues.at(0);
  EXPECT_EQ(d.round_count(), 1u);
  EXPECT_EQ(d.language, Language::Cjk);
}

TEST(NativeFormat, RoundTripIsIdentical) {
  const auto first = corpus::parse_corpus(test::fixture("synthetic_five.txt"),
                                          InputFormat::PlainTranscript, {"synthetic"});
  const std::string native = corpus::serialize_native(first.dialogues);
  const auto again = corpus::parse_corpus_text(native, InputFormat::NativeJson);
  EXPECT_EQ(again.dialogues, first.dialogues);
  // Only the informational trailing-turn flag is raised again; nothing is rewritten.
  for (const auto& a : again.actions) EXPECT_EQ(a.action, "trailing_client_turn");
  EXPECT_EQ(corpus::serialize_native(again.dialogues), native);
}

TEST(Rounds, PairCountBoundedByHalfTheTurns) {
  const auto r = corpus::parse_corpus(test::fixture("synthetic_five.txt"),
                                      InputFormat::PlainTranscript);
  for (const auto& d : r.dialogues) {
    EXPECT_LE(d.round_count(), (d.turns.size() + 1) / 2) << d.id;
    EXPECT_NO_THROW(corpus::validate(d));
  }
}

TEST(CountWords, SpecExamples) {
  EXPECT_EQ(corpus::count_words("", Language::Latin), 0u);
  EXPECT_EQ(corpus::count_words("", Language::Cjk), 0u);
  EXPECT_EQ(corpus::count_words("one two three four five", Language::Latin), 5u);
  // 7 CJK characters and one embedded Latin token.
  EXPECT_EQ(corpus::count_words("我最近想戒烟HELP吗", Language::Cjk), 8u);
}

TEST(CountWords, LatinRuleIsAdditiveOverSeparator) {
  const std::vector<std::string> parts = {"hello", "don't stop", "a-b c", "...", "x 1 2"};
  for (const auto& a : parts) {
    for (const auto& b : parts) {
      EXPECT_EQ(corpus::count_words(a + " " + b, Language::Latin),
                corpus::count_words(a, Language::Latin) + corpus::count_words(b, Language::Latin));
    }
  }
}

TEST(CorpusStats, SpecExamples) {
  auto d = test::make_dialogue("d", {"one two three", "ok", "a b c d e", "fine"});
  auto s = corpus::corpus_stats({d});
  EXPECT_DOUBLE_EQ(s.avg_rounds, 2.0);
  EXPECT_DOUBLE_EQ(s.avg_client_words, 4.0);
  EXPECT_DOUBLE_EQ(s.avg_counselor_words, 1.0);

  auto one = test::make_dialogue("a", {"x", "y"});
  auto three = test::make_dialogue("b", {"x", "y", "x", "y", "x", "y"});
  EXPECT_DOUBLE_EQ(corpus::corpus_stats({one, three}).avg_rounds, 2.0);
  EXPECT_EQ(code_of([] { corpus::corpus_stats({}); }), Errc::EmptyCorpus);
}

TEST(CorpusStats, PooledAndMacroDiffer) {
  auto a = test::make_dialogue("a", {"w", "r"});                     // client mean 1
  auto b = test::make_dialogue("b", {"w w w", "r", "w w w", "r"});  // client mean 3
  const auto pooled = corpus::corpus_stats({a, b}, corpus::UtteranceAveraging::Pooled);
  const auto macro = corpus::corpus_stats({a, b}, corpus::UtteranceAveraging::Macro);
  EXPECT_DOUBLE_EQ(pooled.avg_client_words, 7.0 / 3.0);
  EXPECT_DOUBLE_EQ(macro.avg_client_words, 2.0);
}

TEST(CorpusStats, PreambleIsNotAnUtterance) {
  auto d = test::make_dialogue("a", {"one two", "three"});
  d.preamble = "a long greeting with many words";
  const auto s = corpus::corpus_stats({d});
  EXPECT_DOUBLE_EQ(s.avg_counselor_words, 1.0);
}

TEST(DetectLanguage, Thresholds) {
  EXPECT_EQ(corpus::detect_language({{Speaker::Client, "你好吗我很好"}}), Language::Cjk);
  EXPECT_EQ(corpus::detect_language({{Speaker::Client, "hello there friend"}}), Language::Latin);
  EXPECT_EQ(corpus::detect_language({{Speaker::Client, "你好 hello"}}), Language::Mixed);
}
