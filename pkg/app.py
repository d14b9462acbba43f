#!/usr/bin/env python3
"""
关系势能实验工具 - 程序入口
基于 Python + PyTorch
"""

import sys
from pathlib import Path

# 添加项目根目录到路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from ui.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
