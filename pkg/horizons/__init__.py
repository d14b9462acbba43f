# 太阳系星历: 在线/离线客户端、解析、缓存与数据集组装
from .client_base import EphemerisClientBase
from .ephemeris import HorizonsConfig, build_horizons_dataset, fetch_ephemeris, parse_vectors
from .fixture_client import FixtureClient
from .horizons_client import HorizonsClient
from .query import EphemerisQuery
