"""
星历客户端基类
定义统一的接口规范
"""

from abc import ABC, abstractmethod
from typing import Any, Dict

from .query import EphemerisQuery


class EphemerisClientBase(ABC):
    """星历客户端基类"""

    def __init__(self, **kwargs):
        self.config = kwargs

    @abstractmethod
    def fetch_text(self, query: EphemerisQuery) -> str:
        """
        获取一个 (天体, 原点) 组合的向量星历

        Args:
            query: 查询参数

        Returns:
            服务返回的原始文本
        """

    @abstractmethod
    def test_connection(self) -> bool:
        """测试数据源是否可用"""

    def get_client_info(self) -> Dict[str, Any]:
        return {"provider": self.__class__.__name__}
