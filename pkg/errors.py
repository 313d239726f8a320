from typing import Optional


class SkuRankError(Exception):
    """Base for every error the library raises on bad input or state."""


class ConfigError(SkuRankError):
    pass


class CatalogError(SkuRankError):
    def __init__(self, message: str, line_number: Optional[int] = None, sku_id: Optional[str] = None):
        location = []
        if line_number is not None:
            location.append(f"line {line_number}")
        if sku_id is not None:
            location.append(f"sku {sku_id}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(prefix + message)
        self.line_number = line_number
        self.sku_id = sku_id


class VocabularyError(SkuRankError):
    pass


class VocabularyMismatchError(VocabularyError):
    pass


class EncodingError(SkuRankError):
    pass


class RougeError(SkuRankError):
    pass


class OracleError(SkuRankError):
    pass


class GradientError(SkuRankError):
    def __init__(self, parameter: str):
        super().__init__(f"non-finite gradient for parameter {parameter}")
        self.parameter = parameter


class TrainingError(SkuRankError):
    def __init__(self, message: str, epoch: Optional[int] = None, sku_id: Optional[str] = None):
        super().__init__(f"{message} (epoch {epoch}, sku {sku_id})")
        self.epoch = epoch
        self.sku_id = sku_id


class CheckpointError(SkuRankError):
    pass


class EvaluationError(SkuRankError):
    def __init__(self, message: str, sku_id: Optional[str] = None):
        super().__init__(f"{message} (sku {sku_id})" if sku_id is not None else message)
        self.sku_id = sku_id


class BaselineError(SkuRankError):
    pass
