"""
JPL Horizons 在线客户端
"""

import logging
import time
from typing import Any, Dict

import requests

from core.errors import HorizonsHTTPError

from .client_base import EphemerisClientBase
from .query import EphemerisQuery

DEFAULT_BASE_URL = "https://ssd.jpl.nasa.gov/api/horizons.api"


class HorizonsClient(EphemerisClientBase):
    """Horizons API 客户端, 请求文本格式的向量表"""

    def __init__(self, base_url: str = DEFAULT_BASE_URL, timeout: float = 60.0, max_retries: int = 3,
                 backoff: float = 2.0, session: requests.Session = None, **kwargs):
        super().__init__(**kwargs)
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max(1, max_retries)
        self.backoff = backoff
        self.session = session or requests.Session()
        self.logger = logging.getLogger(__name__)

    def build_params(self, query: EphemerisQuery) -> Dict[str, str]:
        """原点为 origin 的日心式坐标, 位置与速度 (VEC_TABLE=2), CSV 输出"""
        return {
            "format": "text",
            "COMMAND": f"'{query.target}'",
            "OBJ_DATA": "NO",
            "MAKE_EPHEM": "YES",
            "EPHEM_TYPE": "VECTORS",
            "CENTER": f"'500@{query.origin}'",
            "START_TIME": f"'{query.start}'",
            "STOP_TIME": f"'{query.stop}'",
            "STEP_SIZE": f"'{query.step}'",
            "VEC_TABLE": "2",
            "REF_PLANE": "ECLIPTIC",
            "OUT_UNITS": "AU-D",
            "CSV_FORMAT": "YES",
        }

    def fetch_text(self, query: EphemerisQuery) -> str:
        """
        发送请求, 连接错误、超时与 5xx 按指数退避重试

        Raises:
            HorizonsHTTPError: 重试耗尽或遇到不可重试的状态码
        """
        params = self.build_params(query)
        last_error = ""
        for attempt in range(self.max_retries):
            try:
                self.logger.info(f"请求 Horizons: 天体 {query.target} 原点 {query.origin} "
                                 f"(尝试 {attempt + 1}/{self.max_retries})")
                response = self.session.get(self.base_url, params=params, timeout=self.timeout)
                if response.status_code == 200:
                    return response.text
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code < 500:
                    raise HorizonsHTTPError(f"Horizons 请求失败 ({query.target}@{query.origin}): {last_error}")
                self.logger.warning(f"Horizons 服务端错误: {last_error}")
            except requests.exceptions.ConnectionError as e:
                last_error = f"无法连接: {e}"
                self.logger.error(f"无法连接到 Horizons ({self.base_url}): {e}")
            except requests.exceptions.Timeout as e:
                last_error = f"超时: {e}"
                self.logger.warning(f"Horizons 请求超时 (尝试 {attempt + 1}/{self.max_retries}): {e}")
            if attempt < self.max_retries - 1:
                delay = self.backoff * (2 ** attempt)
                self.logger.info(f"{delay:.1f} 秒后重试...")
                time.sleep(delay)
        raise HorizonsHTTPError(f"Horizons 请求失败 ({query.target}@{query.origin}), "
                                f"已重试 {self.max_retries} 次: {last_error}")

    def test_connection(self) -> bool:
        try:
            response = self.session.get(self.base_url, params={"format": "text", "COMMAND": "'399'",
                                                               "OBJ_DATA": "NO", "MAKE_EPHEM": "NO"},
                                        timeout=min(self.timeout, 10))
            return response.status_code == 200
        except requests.exceptions.RequestException as e:
            self.logger.error(f"Horizons 连接测试失败: {e}")
            return False

    def get_client_info(self) -> Dict[str, Any]:
        info = super().get_client_info()
        info.update({"provider": "Horizons", "base_url": self.base_url, "timeout": self.timeout,
                     "max_retries": self.max_retries})
        return info
