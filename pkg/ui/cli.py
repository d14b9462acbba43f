"""
命令行界面
子命令: gen-data, fetch-horizons, train, eval, ood, classify-edges, recombine, steer, plot
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from core.config_manager import ConfigManager
from core.errors import RelPotError
from core.experiment import ExperimentManager

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relpot", description="关系势能模型: 数据、训练与实验")
    parser.add_argument("--config", type=Path, default=None, help="YAML 配置文件")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="覆盖单个配置项, 可重复")
    parser.add_argument("--run-root", type=Path, default=Path("runs"), help="运行目录的根目录")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="生成模拟数据集")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("fetch-horizons", help="获取太阳系星历并组装数据集")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--offline-fixtures", type=Path, default=None, help="离线星历目录, 不访问网络")

    p = sub.add_parser("train", help="训练模型")
    p.add_argument("--data", type=Path, required=True)

    for name, help_text in (("eval", "预测评估"), ("ood", "节点级分布外检测"), ("steer", "测试时引导"),
                            ("classify-edges", "边隐变量的线性分类")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", type=Path, required=True)
        p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("recombine", help="跨模型重组")
    p.add_argument("--checkpoint-a", type=Path, required=True)
    p.add_argument("--checkpoint-b", type=Path, required=True)
    p.add_argument("--data-a", type=Path, required=True)
    p.add_argument("--data-b", type=Path, required=True)

    p = sub.add_parser("plot", help="绘制轨迹 (可叠加预测)")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, default=None)
    return parser


def run_command(args: argparse.Namespace) -> Path:
    config = ConfigManager().load(args.config, args.overrides)
    manager = ExperimentManager(config, args.run_root)
    if args.command == "gen-data":
        return manager.gen_data(args.out)
    if args.command == "fetch-horizons":
        return manager.fetch_horizons(args.out, args.offline_fixtures)
    if args.command == "train":
        return manager.train(args.data)
    if args.command == "eval":
        return manager.evaluate(args.data, args.checkpoint)
    if args.command == "ood":
        return manager.ood(args.data, args.checkpoint)
    if args.command == "classify-edges":
        return manager.classify_edges(args.data, args.checkpoint)
    if args.command == "steer":
        return manager.steer(args.data, args.checkpoint)
    if args.command == "recombine":
        return manager.recombine(args.checkpoint_a, args.checkpoint_b, args.data_a, args.data_b)
    return manager.plot(args.data, args.checkpoint)


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    Returns:
        退出码: 0 成功, 其余由异常类型决定
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        run_dir = run_command(args)
    except RelPotError as e:
        logger.error(f"{args.command} 失败: {e}")
        print(json.dumps({"error": e.__class__.__name__, "message": str(e)}, ensure_ascii=False), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"{args.command} 意外失败")
        print(json.dumps({"error": e.__class__.__name__, "message": str(e)}, ensure_ascii=False), file=sys.stderr)
        return 1
    print(run_dir)
    return 0
