"""
离线客户端
从本地目录读取预先保存的星历文本, 文件名为 <target>@<origin>.txt
"""

from pathlib import Path
from typing import Any, Dict

from core.errors import HorizonsError

from .client_base import EphemerisClientBase
from .query import EphemerisQuery


class FixtureClient(EphemerisClientBase):
    """离线星历客户端"""

    def __init__(self, fixture_dir: Path, **kwargs):
        super().__init__(**kwargs)
        self.fixture_dir = Path(fixture_dir)
        self.calls = 0

    @staticmethod
    def fixture_name(target: str, origin: str) -> str:
        return f"{target}@{origin}.txt"

    def fetch_text(self, query: EphemerisQuery) -> str:
        self.calls += 1
        path = self.fixture_dir / self.fixture_name(query.target, query.origin)
        if not path.exists():
            raise HorizonsError(f"缺少离线星历文件: {path}")
        return path.read_text(encoding="utf-8")

    def test_connection(self) -> bool:
        return self.fixture_dir.is_dir()

    def get_client_info(self) -> Dict[str, Any]:
        info = super().get_client_info()
        info["fixture_dir"] = str(self.fixture_dir)
        return info
