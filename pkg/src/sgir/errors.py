"""Exception hierarchy shared across the engine."""


class SgirError(Exception):
    """Base class for all engine errors."""


class ConfigError(SgirError):
    pass


class EmbeddingParseError(SgirError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmbeddingLookupError(SgirError):
    pass


class SchemaError(SgirError):
    pass


class SceneParseError(SgirError):
    pass


class CaptionParseError(SgirError):
    def __init__(self, message: str, position: int):
        super().__init__(f"position {position}: {message}")
        self.position = position


class CatalogBuildError(SgirError):
    pass


class UnknownImageError(SgirError):
    pass


class IndexVersionError(SgirError):
    pass


class CorruptIndexError(SgirError):
    pass


class CompatibilityError(SgirError):
    pass


class TrainingDivergedError(SgirError):
    pass
