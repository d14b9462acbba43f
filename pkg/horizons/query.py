"""
星历查询参数
"""

import hashlib
import json
import re
from dataclasses import asdict, dataclass
from datetime import date

from core.errors import HorizonsError

_STEP_PATTERN = re.compile(r"^\s*(\d+)\s*([a-zA-Z]+)\s*$")
_STEP_UNITS_DAYS = {"d": 1.0, "day": 1.0, "days": 1.0, "h": 1.0 / 24.0, "hour": 1.0 / 24.0,
                    "hours": 1.0 / 24.0, "m": 1.0 / 1440.0, "min": 1.0 / 1440.0, "minutes": 1.0 / 1440.0}


@dataclass(frozen=True)
class EphemerisQuery:
    """
    一次向量星历查询

    target / origin 为 Horizons 天体编号, origin 作为坐标中心 500@origin
    """
    target: str
    origin: str
    start: str
    stop: str
    step: str = "10 d"

    def __post_init__(self):
        try:
            start, stop = date.fromisoformat(self.start), date.fromisoformat(self.stop)
        except ValueError as e:
            raise HorizonsError(f"非法的日期范围 {self.start} - {self.stop}: {e}") from e
        if start >= stop:
            raise HorizonsError(f"起始日期 {self.start} 必须早于结束日期 {self.stop}")
        step_days(self.step)

    @property
    def step_days(self) -> float:
        return step_days(self.step)

    def cache_key(self) -> str:
        """查询参数的 sha256, 用作缓存文件名"""
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def step_days(step: str) -> float:
    """把 '10 d' / '12 h' / '30 m' 形式的步长换算成天"""
    match = _STEP_PATTERN.match(step)
    if not match:
        raise HorizonsError(f"非法的步长 {step!r}")
    count, unit = int(match.group(1)), match.group(2).lower()
    if count <= 0 or unit not in _STEP_UNITS_DAYS:
        raise HorizonsError(f"非法的步长 {step!r}")
    return count * _STEP_UNITS_DAYS[unit]
