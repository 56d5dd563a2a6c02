"""
Error hierarchy for cognistream

Every error is a ValueError so callers that only guard against bad values keep working,
and carries the name of the module that raised it for the CLI's error surfacing
"""


class CognistreamError(ValueError):
    module = "cognistream"

    def describe(self) -> str:
        return f"{self.module}: {self.__class__.__name__}: {self}"


class ConfigError(CognistreamError):
    module = "config"


# stream_store
class StoreError(CognistreamError):
    module = "stream_store"

class EmptySegment(StoreError):
    pass

class TimestampRegression(StoreError):
    pass

class UnknownSegment(StoreError):
    pass


# structures
class StructureError(CognistreamError):
    module = "structures"

class BadArity(StructureError):
    pass

class UnknownDelimiter(StructureError):
    pass

class ArityMismatch(StructureError):
    pass


# generalization
class GeneralizationError(CognistreamError):
    module = "generalization"

class NotMergeable(GeneralizationError):
    pass

class UnknownNode(GeneralizationError):
    pass

class BadPosition(GeneralizationError):
    pass


# relevancy
class RelevancyError(CognistreamError):
    module = "relevancy"

class WindowRegression(RelevancyError):
    pass

class UnknownSubject(RelevancyError):
    pass


# hypotheses
class HypothesisError(CognistreamError):
    module = "hypotheses"

class NoTemplates(HypothesisError):
    pass

class NoQuorum(HypothesisError):
    pass

class KnownStatement(HypothesisError):
    pass


# forecast
class ForecastError(CognistreamError):
    module = "forecast"

class NotASlot(ForecastError):
    pass

class TooShort(ForecastError):
    pass


# queries
class QueryError(CognistreamError):
    module = "queries"

class NoKeywords(QueryError):
    pass


# dpu
class DpuError(CognistreamError):
    module = "dpu"

class OwnershipConflict(DpuError):
    pass

class TopologyError(DpuError):
    pass
