"""Typed errors raised across the routing engine.

Every validation failure maps to exactly one of these, so callers can
distinguish bad input from bad state without string matching.
"""


class LLMRouteError(Exception):
    """Base class for all llmroute errors."""


class DimensionMismatch(LLMRouteError):
    """A vector's length does not match the configured dimension."""


class NegativeTokens(LLMRouteError):
    """A token count was negative."""


class ZeroVector(LLMRouteError):
    """A vector with zero norm cannot be normalized."""


class DuplicateId(LLMRouteError):
    """Candidate id already present in the catalog."""


class UnknownId(LLMRouteError):
    """Candidate id not present in the catalog."""


class NoActiveCandidates(LLMRouteError):
    """A routing decision was requested with no active candidates."""


class EmptyBatch(LLMRouteError):
    """An operation received an empty batch of embeddings."""


class TooFewDomains(LLMRouteError):
    """Fewer than two domains; separation terms are undefined."""


class WidthMismatch(LLMRouteError):
    """Feedback-net output width does not match the active candidate count."""


class IndexOutOfRange(LLMRouteError):
    """Chosen candidate index outside the net's output range."""


class MissingGroundTruth(LLMRouteError):
    """A query lacks ground truth for an active candidate."""


class ParseError(LLMRouteError):
    """Input file is not parseable."""


class SchemaError(LLMRouteError):
    """Input row violates the dataset schema."""


class RangeError(LLMRouteError):
    """Input value outside its documented range."""


class InsufficientDomains(LLMRouteError):
    """Domain-disjoint splitting needs at least two domains."""


class KTooLarge(LLMRouteError):
    """Top-k policy asked for more candidates than are active."""


class UnknownReference(LLMRouteError):
    """Reference candidate missing from the provided points."""


class EmptyInput(LLMRouteError):
    """Report received no points."""
