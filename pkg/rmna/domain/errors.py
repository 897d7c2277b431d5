from typing import Optional


class RMNAError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ParseError(RMNAError, ValueError):
    def __init__(self, message: str, *, path: str | None = None, line_no: int | None = None):
        self.path = path
        self.line_no = line_no
        where = ""
        if path is not None:
            where = f"{path}:{line_no}: " if line_no is not None else f"{path}: "
        elif line_no is not None:
            where = f"line {line_no}: "
        super().__init__(f"{where}{message}")


class UnknownSymbolError(RMNAError, KeyError):
    def __init__(self, kind: str, label: str, *, line_no: int | None = None):
        self.kind = kind
        self.label = label
        self.line_no = line_no
        suffix = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"unknown {kind} label {label!r}{suffix}")

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the message readable
        return self.args[0]


class GraphStateError(RMNAError, RuntimeError):
    pass


class NegativeSamplingExhausted(RMNAError, RuntimeError):
    pass


class UndefinedMetricError(RMNAError, ZeroDivisionError):
    pass


class ConsistencyError(RMNAError, ValueError):
    pass


class ShapeError(RMNAError, ValueError):
    pass


class NumericError(RMNAError, ArithmeticError):
    def __init__(
        self,
        message: str,
        *,
        stage: Optional[str] = None,
        epoch: Optional[int] = None,
        batch: Optional[int] = None,
    ):
        self.stage = stage
        self.epoch = epoch
        self.batch = batch
        ctx = [
            f"{k}={v}"
            for k, v in (("stage", stage), ("epoch", epoch), ("batch", batch))
            if v is not None
        ]
        super().__init__(f"{message} ({', '.join(ctx)})" if ctx else message)


class ConfigError(RMNAError, ValueError):
    def __init__(self, message: str, *, line_no: int | None = None):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if line_no is not None else message)


class CheckpointError(RMNAError, ValueError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointKindError(CheckpointError):
    pass


class CheckpointIncompatibleError(CheckpointError):
    pass


class DependencyError(RMNAError, FileNotFoundError):
    def __init__(self, artifact: str, producer: str):
        self.artifact = artifact
        self.producer = producer
        super().__init__(
            f"missing input artifact {artifact}; run the '{producer}' subcommand first"
        )

    def __str__(self) -> str:
        return self.args[0]
