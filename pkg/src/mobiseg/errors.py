"""Exception types raised across the mobiseg pipeline."""


class MobisegError(Exception):
    """Base class for all mobiseg errors."""


# --- ingest / data model ---

class MalformedRow(MobisegError):
    def __init__(self, file, line, detail=""):
        self.file = file
        self.line = line
        self.detail = detail
        super().__init__(f"{file}:{line}: malformed row{': ' + detail if detail else ''}")


class UnknownCbg(MobisegError):
    def __init__(self, cbg_id, context=""):
        self.cbg_id = cbg_id
        super().__init__(f"unknown CBG id {cbg_id!r}{' in ' + context if context else ''}")


class NegativeValue(MobisegError):
    def __init__(self, field, value, file=None, line=None):
        self.field = field
        self.value = value
        self.file = file
        self.line = line
        loc = f" ({file}:{line})" if file else ""
        super().__init__(f"negative value {value!r} for {field}{loc}")


class SchemaMismatch(MobisegError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"schema mismatch: expected {expected}, found {found}")


class UnknownAttribute(MobisegError):
    def __init__(self, attribute, known=()):
        self.attribute = attribute
        super().__init__(f"unknown attribute {attribute!r} (have: {', '.join(known)})")


class InvalidCoordinate(MobisegError):
    pass


# --- community detection ---

class EmptyGraphAfterThreshold(MobisegError):
    pass


class ZeroTotalWeight(MobisegError):
    pass


# --- segregation metrics ---

class NoInflow(MobisegError):
    def __init__(self, cbg_id):
        self.cbg_id = cbg_id
        super().__init__(f"CBG {cbg_id!r} has no inbound flow from CBGs with defined proportions")


class NotAProbabilityVector(MobisegError):
    pass


class InsufficientNeighbors(MobisegError):
    pass


# --- mobility models ---

class MissingVisitorMix(MobisegError):
    pass


class InsufficientData(MobisegError):
    pass


class DivergedLoss(MobisegError):
    pass


class SelfPair(MobisegError):
    pass


class WrongCandidateCount(MobisegError):
    def __init__(self, expected, found):
        super().__init__(f"expected {expected} candidate destinations, got {found}")


class ZeroDistance(MobisegError):
    pass


# --- evaluation metrics ---

class BothZero(MobisegError):
    pass


class NegativeEntry(MobisegError):
    pass


class ConstantVector(MobisegError):
    pass


class ZeroRange(MobisegError):
    pass


class TooFewCbgs(MobisegError):
    pass


# --- explainability ---

class EmptyFeatures(MobisegError):
    pass


class EmptyReports(MobisegError):
    pass


# --- what-if engine ---

class UntrainedModel(MobisegError):
    pass


class UnknownPoiType(MobisegError):
    def __init__(self, poi_type, known=()):
        self.poi_type = poi_type
        super().__init__(f"unknown POI type {poi_type!r} (have: {', '.join(known)})")


class NegativeDensity(MobisegError):
    pass


class UnknownStrategy(MobisegError):
    def __init__(self, strategy_id):
        self.strategy_id = strategy_id
        super().__init__(f"no strategy with id {strategy_id!r}")


class StorageFailure(MobisegError):
    pass


# --- synthetic city / oracles ---

class InvalidConfig(MobisegError):
    pass


class TooLarge(MobisegError):
    pass


class TooManyFeatures(MobisegError):
    pass
