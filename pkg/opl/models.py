"""Run records and rational serialization."""

from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Any, Optional

from opl import __version__
from opl.graph import ParameterError

SCHEMA_VERSION = 1


def format_rational(x) -> str:
    """Lossless "numerator/denominator" string."""
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(text: str) -> Fraction:
    """Parse "a/b" or a decimal literal exactly."""
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ParameterError(f"Not a rational number: {text!r}") from e


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


@dataclass
class RunRecord:
    """One command invocation: parameters in, result out."""

    command: str
    params: dict
    result: Any
    seed: Optional[int] = None
    stream: Optional[int] = None
    schema_version: int = SCHEMA_VERSION
    timestamp: str = field(default_factory=_utc_now)
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"Unsupported schema_version: {data.get('schema_version')!r}")
        # Tolerate keys added by later minor versions
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)

    @property
    def recorded_at(self) -> datetime:
        return datetime.fromisoformat(self.timestamp.replace("Z", "+00:00"))
