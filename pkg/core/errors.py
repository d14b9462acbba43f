"""
异常定义
所有模块抛出的错误都从 RelPotError 派生, CLI 据此映射退出码
"""


class RelPotError(Exception):
    """项目内所有错误的基类"""

    exit_code = 1


class ConfigError(RelPotError):
    """配置错误: 未知键、非法取值"""

    exit_code = 2


class ShapeError(RelPotError, ValueError):
    """数组维度/形状不匹配"""

    exit_code = 2


class DatasetError(RelPotError):
    """数据集读写失败"""

    exit_code = 3


class DatasetCorruptError(DatasetError):
    """数据集清单与数组文件不一致"""


class NumericalError(RelPotError):
    """数值错误: 梯度或损失非有限, 采样发散"""

    exit_code = 4

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step


class HorizonsError(RelPotError):
    """星历服务相关错误"""

    exit_code = 3


class HorizonsHTTPError(HorizonsError):
    """HTTP 请求失败 (重试后仍失败)"""


class HorizonsParseError(HorizonsError):
    """响应文本解析失败"""


class HorizonsAlignmentError(HorizonsError):
    """不同天体的历元不对齐"""


class CacheCorruptError(HorizonsError):
    """磁盘缓存损坏"""
