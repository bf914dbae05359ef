#include <gtest/gtest.h>

#include <fstream>

#include "miwb/error.hpp"
#include "miwb/store.hpp"
#include "support.hpp"

using namespace miwb;
using gateway::Role;

namespace {

store::SessionRecord session(const std::string& id) {
  store::SessionRecord s;
  s.session_id = id;
  s.topic = "smoking";
  s.baseline_motivation = store::Motivation::Low;
  s.motivation_seeded = true;
  s.model_ref = "m";
  s.messages = {{Role::System, "sys"}, {Role::User, "hi"}, {Role::Assistant, "hello"}};
  s.created_at = s.updated_at = "2026-01-01T00:00:00.000Z";
  return s;
}

miti::MitiAnnotation annotation(const std::string& blind, const std::string& coder, int q) {
  miti::MitiAnnotation a;
  a.blind_id = blind;
  a.coder_id = coder;
  a.globals = {4, 4, 4, 4};
  a.counts.asking_questions = q;
  return a;
}

}  // namespace

TEST(JsonlStore, AppendAndLoad) {
  test::TempDir tmp;
  store::JsonlStore st(tmp / "x.jsonl");
  EXPECT_TRUE(st.load().records.empty());
  st.append({{"a", 1}});
  st.append({{"a", 2}});
  const auto r = st.load();
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[1]["a"], 2);
  EXPECT_EQ(r.corrupt_lines, 0u);
}

TEST(JsonlStore, TruncatedTailIsSkippedAndNotSwallowed) {
  test::TempDir tmp;
  const auto path = tmp / "x.jsonl";
  test::write_text(path, "{\"a\":1}\n{\"a\":2, \"b\":");
  store::JsonlStore st(path);
  auto r = st.load();
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.corrupt_lines, 1u);
  st.append({{"a", 3}});
  r = st.load();
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[1]["a"], 3);
  EXPECT_EQ(r.corrupt_lines, 1u);
}

TEST(Session, JsonRoundTripAndValidation) {
  const auto s = session("s1");
  EXPECT_EQ(store::session_from_json(nlohmann::json::parse(store::to_json(s).dump())), s);
  EXPECT_NO_THROW(store::validate(s));
  auto bad = s;
  bad.messages.push_back({Role::Assistant, "again"});
  EXPECT_EQ(test::code_of([&] { store::validate(bad); }), Errc::InvalidConversation);
  bad = s;
  bad.messages.erase(bad.messages.begin());
  EXPECT_EQ(test::code_of([&] { store::validate(bad); }), Errc::InvalidConversation);
  EXPECT_EQ(test::code_of([] { store::session_from_json({{"session_id", "x"}}); }),
            Errc::MalformedRecord);
}

TEST(DataRoot, SessionReplayKeepsLatestInFirstSeenOrder) {
  test::TempDir tmp;
  store::DataRoot root(tmp.path());
  auto a = session("a");
  auto b = session("b");
  root.sessions().append(store::to_json(a));
  root.sessions().append(store::to_json(b));
  a.status = store::SessionStatus::Completed;
  root.sessions().append(store::to_json(a));
  std::size_t corrupt = 99;
  const auto loaded = store::DataRoot(tmp.path()).load_sessions(&corrupt);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].session_id, "a");
  EXPECT_EQ(loaded[0].status, store::SessionStatus::Completed);
  EXPECT_EQ(loaded[1], b);
  EXPECT_EQ(corrupt, 0u);
}

TEST(DataRoot, AnnotationsLastWriteWinsWithHistory) {
  test::TempDir tmp;
  store::DataRoot root(tmp.path());
  root.annotations().append(miti::to_json(annotation("b1", "c1", 1)));
  root.annotations().append(miti::to_json(annotation("b1", "c2", 2)));
  root.annotations().append(miti::to_json(annotation("b1", "c1", 3)));
  root.annotations().append({{"blind_id", "b1"}, {"coder_id", "c1"}});  // invalid, skipped
  const auto st = root.load_annotations();
  EXPECT_EQ(st.history.size(), 3u);
  EXPECT_EQ(st.latest.size(), 2u);
  EXPECT_EQ(st.latest.at({"b1", "c1"}).counts.asking_questions, 3);
  EXPECT_EQ(st.corrupt_lines, 1u);
  EXPECT_EQ(st.latest_list().size(), 2u);
}

TEST(DataRoot, QueueDeduplicatesBlindIds) {
  test::TempDir tmp;
  store::DataRoot root(tmp.path());
  miti::BlindEntry e{"abc", {{corpus::Speaker::Client, "q"}}};
  root.queue().append(miti::to_json(e));
  root.queue().append(miti::to_json(e));
  EXPECT_EQ(root.load_queue().size(), 1u);
}

TEST(UtcNow, Iso8601WithMilliseconds) {
  const std::string t = store::utc_now();
  ASSERT_EQ(t.size(), 24u);
  EXPECT_EQ(t[10], 'T');
  EXPECT_EQ(t[19], '.');
  EXPECT_EQ(t.back(), 'Z');
}
