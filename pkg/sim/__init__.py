# 粒子系统模拟

from .simulator import (SimConfig, make_dataset, simulate, simulate_charged, simulate_mixed,
                        simulate_springs)

__all__ = ['SimConfig', 'make_dataset', 'simulate', 'simulate_charged', 'simulate_mixed',
           'simulate_springs']
