#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "miwb/error.hpp"
#include "miwb/transcribe.hpp"
#include "support.hpp"

using namespace miwb;
using corpus::Speaker;
using gateway::TransportReply;
using test::code_of;

namespace {

TransportReply reply(const std::string& content) {
  return {200, gateway::completion_body(content), {}};
}

corpus::Dialogue two_rounds() {
  return test::make_dialogue("src", {"I drink too much.", "Tell me more.", "Every night.", "Ok."});
}

}  // namespace

TEST(Template, DefaultIsValidAndLabelled) {
  const auto t = transcribe::TranscriptionTemplate::reconstructed_default();
  EXPECT_NO_THROW(transcribe::validate(t));
  EXPECT_NE(t.sections.at("Role").find("[Reconstructed default template"), std::string::npos);
  EXPECT_EQ(transcribe::section_keys().size(), 7u);
}

TEST(Template, MissingOrBlankSectionRejected) {
  auto t = transcribe::TranscriptionTemplate::reconstructed_default();
  t.sections.erase("KeyTechniques");
  EXPECT_EQ(code_of([&] { transcribe::validate(t); }), Errc::MissingSection);
  t = transcribe::TranscriptionTemplate::reconstructed_default();
  t.sections["GuidingPrinciples"] = "   ";
  EXPECT_EQ(code_of([&] { transcribe::validate(t); }), Errc::MissingSection);
}

TEST(Template, DuplicatePlaceholderRejected) {
  auto t = transcribe::TranscriptionTemplate::reconstructed_default();
  t.sections["Role"] += " {{dialogue}}";
  EXPECT_EQ(code_of([&] { transcribe::validate(t); }), Errc::TemplateInvalid);
}

TEST(Template, JsonRoundTripBothShapes) {
  const auto t = transcribe::TranscriptionTemplate::reconstructed_default();
  const auto nested = transcribe::template_from_json(nlohmann::json::parse(transcribe::to_json(t).dump()));
  EXPECT_EQ(nested.sections, t.sections);
  nlohmann::json flat;
  for (const auto& [k, v] : t.sections) flat[k] = v;
  EXPECT_EQ(transcribe::template_from_json(flat).sections, t.sections);
  EXPECT_EQ(code_of([] { transcribe::template_from_json(nlohmann::json::array()); }),
            Errc::TemplateInvalid);
}

TEST(RenderPrompt, SectionsInOrderWithDialogueSubstituted) {
  const auto t = transcribe::TranscriptionTemplate::reconstructed_default();
  const std::string p = transcribe::render_prompt(t, two_rounds());
  std::size_t last = 0;
  for (const char* title : {"## Role", "## Task Objective", "## Four Core Tasks", "## Key Techniques",
                            "## Transformation Steps", "## Guiding Principles",
                            "## Output Format Example"}) {
    const auto pos = p.find(title);
    ASSERT_NE(pos, std::string::npos) << title;
    EXPECT_GE(pos, last);
    last = pos;
  }
  EXPECT_NE(p.find("Client: I drink too much.\nCounselor: Tell me more."), std::string::npos);
  EXPECT_EQ(p.find("{{dialogue}}"), std::string::npos);
  EXPECT_EQ(p.find("## Source Dialogue"), std::string::npos);
}

TEST(RenderPrompt, NoPlaceholderAppendsDialogue) {
  auto t = transcribe::TranscriptionTemplate::reconstructed_default();
  t.sections["OutputFormatExample"] = "Client: ...\nCounselor: ...";
  const std::string p = transcribe::render_prompt(t, two_rounds());
  const auto pos = p.find("## Source Dialogue\nClient: I drink too much.");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_GT(pos, p.find("## Output Format Example"));
}

TEST(ParseReply, WellFormedReply) {
  const auto r = transcribe::parse_reply(
      two_rounds(), "Here you go:\nClient: I drink a lot.\nCounselor: What worries you?\n"
                    "Client: My health.\n**Counselor:** You care about your health.\n");
  EXPECT_TRUE(r.validation.parse_ok);
  EXPECT_TRUE(r.validation.alternation_ok);
  EXPECT_TRUE(r.validation.round_count_ok);
  ASSERT_EQ(r.transcribed.turns.size(), 4u);
  EXPECT_EQ(r.transcribed.turns[3].text, "You care about your health.");
  EXPECT_EQ(r.transcribed.id, "src");
}

TEST(ParseReply, ContinuationAndMergedTurns) {
  const auto r = transcribe::parse_reply(
      two_rounds(), "Client: one\nstill one\nClient: two\nCounselor: reply\n");
  EXPECT_TRUE(r.validation.parse_ok);
  EXPECT_FALSE(r.validation.alternation_ok);
  ASSERT_EQ(r.transcribed.turns.size(), 2u);
  EXPECT_EQ(r.transcribed.turns[0].text, "one\nstill one\ntwo");
}

TEST(ParseReply, LeadingCounselorBecomesPreamble) {
  const auto r = transcribe::parse_reply(two_rounds(), "Counselor: Welcome.\nClient: hi\nCounselor: hello\n");
  ASSERT_TRUE(r.transcribed.preamble);
  EXPECT_EQ(*r.transcribed.preamble, "Welcome.");
  EXPECT_EQ(r.transcribed.round_count(), 1u);
}

TEST(ParseReply, RoundCountTolerance) {
  std::string reply;
  for (int i = 0; i < 5; ++i) reply += "Client: q\nCounselor: r\n";
  EXPECT_FALSE(transcribe::parse_reply(two_rounds(), reply).validation.round_count_ok);
  transcribe::TranscribeOptions wide;
  wide.round_tolerance = 3;
  EXPECT_TRUE(transcribe::parse_reply(two_rounds(), reply, wide).validation.round_count_ok);
}

TEST(ParseReply, GarbageFailsParse) {
  const auto r = transcribe::parse_reply(two_rounds(), "I cannot help with that.");
  EXPECT_FALSE(r.validation.parse_ok);
  EXPECT_FALSE(r.validation.round_count_ok);
  EXPECT_FALSE(r.validation.alternation_ok);
}

TEST(Batch, SortedByIdWithFailuresRecorded) {
  auto client = test::fn_client([](const nlohmann::json& req) {
    const std::string p = test::last_content(req);
    if (p.find("Client: fail") != std::string::npos) return TransportReply{503, "{}", {}};
    if (p.find("Client: garbage") != std::string::npos) return reply("nope");
    return reply("Client: a\nCounselor: b\n");
  });
  std::vector<corpus::Dialogue> in{test::make_dialogue("c", {"garbage", "x"}),
                                   test::make_dialogue("a", {"ok", "x"}),
                                   test::make_dialogue("b", {"fail", "x"})};
  const auto results = transcribe::transcribe_batch(
      in, transcribe::TranscriptionTemplate::reconstructed_default(), *client);
  ASSERT_EQ(results.size(), 3u);
  EXPECT_EQ(results[0].source_id, "a");
  EXPECT_TRUE(results[0].validation.parse_ok);
  EXPECT_EQ(results[1].source_id, "b");
  EXPECT_FALSE(results[1].error.empty());
  EXPECT_FALSE(results[2].validation.parse_ok);
  const auto ok = transcribe::accepted(results);
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(ok[0].id, "a");
  const std::string audit = transcribe::audit_jsonl(results);
  EXPECT_EQ(std::count(audit.begin(), audit.end(), '\n'), 3);
  EXPECT_NE(audit.find("\"error\""), std::string::npos);
}

TEST(Batch, EmptyCorpusRejected) {
  auto client = test::fn_client([](const nlohmann::json&) { return reply("x"); });
  EXPECT_EQ(code_of([&] {
              transcribe::transcribe_batch({}, transcribe::TranscriptionTemplate::reconstructed_default(),
                                           *client);
            }),
            Errc::EmptyCorpus);
}

TEST(SplitTrainTest, DisjointCoveringDeterministic) {
  std::vector<corpus::Dialogue> ds;
  for (int i = 0; i < 30; ++i) ds.push_back(test::make_dialogue("d" + std::to_string(i), {"q", "r"}));
  const auto a = transcribe::split_train_test(ds, 10, 3);
  const auto b = transcribe::split_train_test(ds, 10, 3);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.test.size(), 10u);
  EXPECT_EQ(a.train.size(), 20u);
  std::set<std::string> ids;
  for (const auto& d : a.test) ids.insert(d.id);
  for (const auto& d : a.train) ids.insert(d.id);
  EXPECT_EQ(ids.size(), 30u);
  EXPECT_NE(transcribe::split_train_test(ds, 10, 4).test, a.test);
  EXPECT_EQ(code_of([&] { transcribe::split_train_test(ds, 30, 1); }), Errc::SplitTooLarge);
}

TEST(TrainingConfig, DefaultsAndOverrides) {
  const auto d = transcribe::emit_training_config();
  EXPECT_DOUBLE_EQ(d.learning_rate, 1e-4);
  EXPECT_EQ(d.lr_scheduler, "cosine");
  EXPECT_EQ(d.per_device_train_batch_size, 1);
  EXPECT_EQ(d.gradient_accumulation_steps, 8);
  EXPECT_EQ(d.num_train_epochs, 3);
  EXPECT_DOUBLE_EQ(d.warmup_ratio, 0.1);
  EXPECT_EQ(d.precision, "bf16");
  EXPECT_EQ(d.provenance.at("learning_rate"), "default");

  const auto o = transcribe::emit_training_config({{"num_train_epochs", 5}});
  EXPECT_EQ(o.num_train_epochs, 5);
  EXPECT_EQ(o.provenance.at("num_train_epochs"), "override");
  EXPECT_EQ(o.provenance.at("learning_rate"), "default");

  EXPECT_EQ(transcribe::training_config_from_json(
                nlohmann::json::parse(transcribe::to_json(o).dump())),
            o);
  EXPECT_EQ(code_of([] { transcribe::emit_training_config({{"epochs", 5}}); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([] { transcribe::emit_training_config({{"warmup_ratio", 1.5}}); }),
            Errc::InvalidConfig);
}
