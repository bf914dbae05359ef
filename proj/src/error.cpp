#include "miwb/error.hpp"

namespace miwb {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::FileUnreadable: return "FileUnreadable";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::SampleTooLarge: return "SampleTooLarge";
    case Errc::JudgeUnparseable: return "JudgeUnparseable";
    case Errc::EmptyScores: return "EmptyScores";
    case Errc::InvalidRubric: return "InvalidRubric";
    case Errc::MissingSection: return "MissingSection";
    case Errc::TemplateInvalid: return "TemplateInvalid";
    case Errc::SplitTooLarge: return "SplitTooLarge";
    case Errc::NoCompleteRound: return "NoCompleteRound";
    case Errc::WriteFailure: return "WriteFailure";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::MissingReference: return "MissingReference";
    case Errc::NoPairs: return "NoPairs";
    case Errc::EmptyGroup: return "EmptyGroup";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::InvalidAnnotation: return "InvalidAnnotation";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::EndpointError: return "EndpointError";
    case Errc::InvalidConversation: return "InvalidConversation";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::StorageFailure: return "StorageFailure";
    case Errc::NotFound: return "NotFound";
    case Errc::Conflict: return "Conflict";
    case Errc::UnknownCommand: return "UnknownCommand";
  }
  return "Unknown";
}

}  // namespace miwb
