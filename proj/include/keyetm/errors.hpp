#pragma once

#include <stdexcept>
#include <string>

namespace keyetm {

// Error categories map onto the CLI exit-code contract:
//   2 = malformed input, 3 = numeric failure, 4 = stale stage state,
//   5 = artifact mismatch.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InputError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct StaleStageError : Error {
    using Error::Error;
};
struct MismatchError : Error {
    using Error::Error;
};

// corpus
struct EmptyVocabulary : InputError {
    EmptyVocabulary() : InputError("no term survived the document-frequency filters") {}
};
struct ZeroLengthDocument : InputError {
    explicit ZeroLengthDocument(const std::string& id)
        : InputError("document has no in-vocabulary tokens: " + id) {}
};

// embeddings
struct VocabMismatch : MismatchError {
    explicit VocabMismatch(const std::string& what) : MismatchError(what) {}
};
struct MalformedHeader : InputError {
    explicit MalformedHeader(const std::string& what) : InputError(what) {}
};
struct DimensionMismatch : InputError {
    explicit DimensionMismatch(const std::string& what) : InputError(what) {}
};
struct ZeroVector : NumericError {
    ZeroVector() : NumericError("cosine similarity of a zero vector") {}
};

// prior
struct AllSeedsOutOfVocabulary : InputError {
    explicit AllSeedsOutOfVocabulary(const std::string& topic)
        : InputError("every seed word of topic '" + topic + "' is out of vocabulary") {}
};
struct EmptyGuidedSet : InputError {
    EmptyGuidedSet() : InputError("prior matrix is all zero; no seed survived preprocessing") {}
};

// diffengine
struct ShapeMismatch : NumericError {
    explicit ShapeMismatch(const std::string& what) : NumericError(what) {}
};
struct NonFiniteValue : NumericError {
    explicit NonFiniteValue(const std::string& op)
        : NumericError("non-finite value produced by op '" + op + "'") {}
};
struct NotScalarLoss : NumericError {
    NotScalarLoss() : NumericError("backward() requires a scalar loss") {}
};

// model
struct NonFiniteLoss : NumericError {
    NonFiniteLoss(int epoch, int batch, const std::string& detail)
        : NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                       ", batch " + std::to_string(batch) + ": " + detail),
          epoch(epoch),
          batch(batch) {}
    int epoch;
    int batch;
};

// eval
struct UnknownTerm : InputError {
    explicit UnknownTerm(const std::string& term)
        : InputError("term has zero document frequency in the statistics: " + term) {}
};
struct UnmappedLabel : InputError {
    explicit UnmappedLabel(const std::string& label)
        : InputError("gold label is not produced by any topic mapping: " + label) {}
};
struct UnknownItemId : InputError {
    explicit UnknownItemId(const std::string& id)
        : InputError("response references unknown intrusion item: " + id) {}
};

}  // namespace keyetm
