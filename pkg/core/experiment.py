"""
实验管理模块
负责协调数据生成、训练、评估、重组与引导等完整流程, 每次运行写入独立的运行目录
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from .config_manager import ConfigManager, RunConfig
from .errors import DatasetError
from .file_manager import FileManager, load_dataset, save_dataset
from .types import RelationKind, TrajectoryDataset, denormalize_array

METRICS_SCHEMA_VERSION = 1


class ExperimentManager:
    """实验管理器"""

    def __init__(self, config: RunConfig, run_root: Path = Path("runs")):
        self.config = config
        self.run_root = Path(run_root)
        self.file_manager = FileManager()
        self.config_manager = ConfigManager()
        self.logger = logging.getLogger(__name__)

    # 运行目录

    def _start(self, command: str) -> Path:
        run_dir = self.file_manager.create_run_dir(self.run_root, command, self.config.config_hash())
        self.config_manager.save(self.config, run_dir / "config.yaml")
        self.logger.info(f"开始 {command}")
        return run_dir

    def _finish(self, run_dir: Path, command: str, metrics: Dict[str, Any]) -> Path:
        payload = {"schema_version": METRICS_SCHEMA_VERSION, "command": command, "metrics": metrics}
        self.file_manager.write_json(run_dir / "metrics.json", payload)
        self.logger.info(f"{command} 完成, 结果目录: {run_dir}")
        return run_dir

    def _split_states(self, ds: TrajectoryDataset, section: str, limit: Optional[int] = None) -> np.ndarray:
        name = self.config[section]["split"]
        if name not in ds.splits:
            raise DatasetError(f"数据集没有切分 {name}")
        states = ds.split_states(name)
        return states[:limit] if limit else states

    # 数据

    def gen_data(self, out: Optional[Path] = None) -> Path:
        """生成模拟数据集"""
        from sim.simulator import make_dataset

        run_dir = self._start("gen-data")
        data = self.config["data"]
        ds = make_dataset(
            self.config.sim_config(),
            dict(data["counts"]),
            obs_len=self.config.split_spec().obs_len,
            workers=data["workers"],
            chunk_size=data["chunk_size"],
        )
        out = Path(out) if out else run_dir / "dataset"
        save_dataset(ds, out)
        return self._finish(run_dir, "gen-data", {
            "dataset": str(out), "count": len(ds), "T": ds.T, "N": ds.N, "D": ds.D,
            "kind": ds.label_kind.value,
        })

    def fetch_horizons(self, out: Optional[Path] = None, fixture_dir: Optional[Path] = None) -> Path:
        """下载 (或从离线目录读取) 星历并组装数据集"""
        from horizons.ephemeris import build_horizons_dataset
        from horizons.fixture_client import FixtureClient
        from horizons.horizons_client import HorizonsClient

        run_dir = self._start("fetch-horizons")
        section = self.config["horizons"]
        if fixture_dir is not None:
            client = FixtureClient(fixture_dir)
        else:
            client = HorizonsClient(base_url=section["base_url"], timeout=section["timeout"],
                                    max_retries=section["max_retries"], backoff=section["backoff"])
        ds = build_horizons_dataset(self.config.horizons_config(), self.config.cache_dir(), client)
        out = Path(out) if out else run_dir / "dataset"
        save_dataset(ds, out)
        return self._finish(run_dir, "fetch-horizons", {
            "dataset": str(out), "count": len(ds), "T": ds.T, "N": ds.N, "D": ds.D,
            "client": client.get_client_info(),
        })

    # 训练与评估

    def train(self, data: Path) -> Path:
        from model.checkpoint import Checkpoint, save_checkpoint
        from model.potential_model import build_model
        from model.training import Trainer

        run_dir = self._start("train")
        ds = load_dataset(data)
        split = self.config.split_spec()
        train_cfg = self.config.train_config()
        model = build_model(self.config.model_config(ds.D), seed=self.config.seed)
        trainer = Trainer(model, train_cfg, split, device=self.config.device)
        result = trainer.train(ds.split_states("train"), ds.split_states("val"))
        trainer.restore_best()

        metrics = {
            "iterations": result.iteration,
            "best_iteration": result.best_iteration,
            "best_val_mse": result.best_val_mse,
            "final_loss": result.history[-1]["loss"] if result.history else None,
        }
        ckpt = Checkpoint(
            model=trainer.model.cpu(),
            split=split,
            stats=ds.stats,
            dt_unit=ds.dt_unit,
            iteration=result.iteration,
            train_config=train_cfg,
            metrics=metrics,
            dataset=str(data),
            optimizer_state=result.optimizer_state,
        )
        save_checkpoint(ckpt, run_dir / "checkpoint")
        self.file_manager.write_json(run_dir / "history.json", result.history)
        metrics["checkpoint"] = str(run_dir / "checkpoint")
        return self._finish(run_dir, "train", metrics)

    def evaluate(self, data: Path, checkpoint: Path) -> Path:
        from analysis.forecasting import evaluate_forecast
        from model.checkpoint import load_checkpoint

        run_dir = self._start("eval")
        section = self.config["eval"]
        ckpt = load_checkpoint(checkpoint)
        states = self._split_states(load_dataset(data), "eval", section["max_trajectories"])
        report = evaluate_forecast(
            ckpt.model, states, ckpt.split, self.config.sampler_config(),
            horizons=section["horizons"], batch_size=section["batch_size"], seed=self.config.seed,
            steps_sweep=section["steps_sweep"], device=self.config.device,
        )
        return self._finish(run_dir, "eval", report.to_dict())

    def ood(self, data: Path, checkpoint: Path) -> Path:
        from analysis.ood import evaluate_ood
        from model.checkpoint import load_checkpoint

        run_dir = self._start("ood")
        section = self.config["ood"]
        ds = load_dataset(data)
        if ds.label_kind is not RelationKind.MIXED_FORCE_TYPE:
            raise DatasetError(f"分布外检测需要混合受力数据集, 实际标签类型 {ds.label_kind.value}")
        ckpt = load_checkpoint(checkpoint)
        name = section["split"]
        report = evaluate_ood(
            ckpt.model, ds.split_states(name), ds.split_labels(name), ckpt.split,
            calibration_frac=section["calibration_frac"], seed=self.config.seed,
            batch_size=section["batch_size"], device=self.config.device,
        )
        return self._finish(run_dir, "ood", report.to_dict())

    def classify_edges(self, data: Path, checkpoint: Path) -> Path:
        """用边隐变量线性预测真值弹簧连接"""
        from analysis.edge_types import edge_latents, edge_type_accuracy
        from model.checkpoint import load_checkpoint

        run_dir = self._start("classify-edges")
        section = self.config["edges"]
        ds = load_dataset(data)
        if ds.label_kind is not RelationKind.SPRINGS_ADJACENCY:
            raise DatasetError(f"边类型分类需要弹簧邻接标签, 实际标签类型 {ds.label_kind.value}")
        ckpt = load_checkpoint(checkpoint)
        name = section["split"]
        states = self._split_states(ds, "edges")
        latents = edge_latents(ckpt.model, states, ckpt.split, section["batch_size"], self.config.device)
        accuracy = edge_type_accuracy(latents, ds.split_labels(name), train_frac=section["train_frac"],
                                      seed=self.config.seed, max_iter=section["max_iter"])
        return self._finish(run_dir, "classify-edges", {
            "split": name, "n_trajectories": len(states), "accuracy": accuracy,
        })

    def recombine(self, checkpoint_a: Path, checkpoint_b: Path, data_a: Path, data_b: Path) -> Path:
        from analysis.recombination import potential_gradients, recombination_terms, recombine
        from model.checkpoint import load_checkpoint

        run_dir = self._start("recombine")
        section = self.config["recombine"]
        ckpt_a, ckpt_b = load_checkpoint(checkpoint_a), load_checkpoint(checkpoint_b)
        states_a = self._split_states(load_dataset(data_a), "recombine", section["n_trajectories"])
        states_b = self._split_states(load_dataset(data_b), "recombine", section["n_trajectories"])
        n = min(len(states_a), len(states_b))
        states_a, states_b = states_a[:n], states_b[:n]
        split = ckpt_a.split
        sampler = self.config.sampler_config("recombine", steps=section["steps"], step_size=section["step_size"])
        swap = section["swap_nodes"]

        windows = recombine(ckpt_a.model, ckpt_b.model, states_a, states_b, swap, split, sampler,
                            seed=self.config.seed, device=self.config.device, batch_size=section["batch_size"])
        desc = self.file_manager.write_array(run_dir / "recombined.f32", windows)

        truth_a = states_a[:, split.gen_start:split.total_len]
        truth_b = states_b[:, split.gen_start:split.total_len]
        pred = slice(split.init_len, None)
        metrics = {
            "n_trajectories": n,
            "swap_nodes": list(swap),
            "mse_vs_a": float(np.mean((windows[:, pred] - truth_a[:, pred]) ** 2)),
            "mse_vs_b": float(np.mean((windows[:, pred] - truth_b[:, pred]) ** 2)),
            "recombined": desc,
        }
        if section["export_gradients"] and n:
            terms = recombination_terms(ckpt_a.model, ckpt_b.model, states_a[:1], states_b[:1], swap, split,
                                        self.config.device)
            window = torch.as_tensor(windows[:1], device=self.config.device)
            for tag, term, ckpt in (("a", terms[0], ckpt_a), ("b", terms[1], ckpt_b)):
                edges = term.mask[:, 0]
                grads = potential_gradients(ckpt.model, window, term.z, edges)
                np.save(run_dir / f"potential_gradients_{tag}.npy", grads)
            metrics["gradients"] = ["potential_gradients_a.npy", "potential_gradients_b.npy"]
        return self._finish(run_dir, "recombine", metrics)

    def steer(self, data: Path, checkpoint: Path) -> Path:
        from analysis.steering import steering_sweep, window_start_positions
        from model.checkpoint import load_checkpoint
        from model.potentials import ExtraPotential

        run_dir = self._start("steer")
        section = self.config["steer"]
        ckpt = load_checkpoint(checkpoint)
        ds = load_dataset(data)
        states = self._split_states(ds, "steer", section["n_trajectories"])
        stats = ckpt.stats or ds.stats
        kind = section["kind"]
        template = ExtraPotential(
            kind=kind,
            strength=0.0,
            weight=section["weight"],
            goal=tuple(section["goal"]) if kind == "goal" else None,
            area_min=tuple(section["area_min"]) if kind == "avoid_area" else None,
            area_max=tuple(section["area_max"]) if kind == "avoid_area" else None,
            margin=section["margin"],
        )
        p0 = window_start_positions(states, ckpt.split, stats)
        results = steering_sweep(ckpt.model, states, template, section["strengths"], ckpt.split,
                                 self.config.sampler_config(), stats, p0, ckpt.dt_unit,
                                 seed=self.config.seed, device=self.config.device, batch_size=section["batch_size"])
        return self._finish(run_dir, "steer", {
            "kind": kind,
            "by_strength": {str(s): m.to_dict() for s, m in results.items()},
        })

    def plot(self, data: Path, checkpoint: Optional[Path] = None) -> Path:
        """真值轨迹图; 给出检查点时叠加生成窗口的预测"""
        from analysis.forecasting import predict_window
        from analysis.steering import window_positions, window_start_positions
        from model.checkpoint import load_checkpoint
        from ui.plots import plot_trajectories

        run_dir = self._start("plot")
        section = self.config["plot"]
        ds = load_dataset(data)
        name = section["split"]
        states = ds.split_states(name)[:section["n_trajectories"]]
        labels = ds.split_labels(name)[:section["n_trajectories"]]
        split = self.config.split_spec()
        half = ds.D // 2
        truth = denormalize_array(states, ds.stats)[..., :half].astype(np.float64)

        preds = None
        if checkpoint is not None:
            ckpt = load_checkpoint(checkpoint)
            split = ckpt.split
            windows = predict_window(ckpt.model, states, split, self.config.sampler_config(),
                                     seed=self.config.seed, device=self.config.device)
            preds = window_positions(windows, window_start_positions(states, split, ds.stats), ds.stats,
                                     ds.dt_unit)

        files = []
        for k in range(len(states)):
            node_labels = labels[k] if ds.label_kind is RelationKind.MIXED_FORCE_TYPE else None
            series = [truth[k]]
            names = ["ground truth"]
            if preds is not None:
                series = [truth[k, split.gen_start:split.total_len], preds[k]]
                names = ["ground truth", "prediction"]
            files += plot_trajectories(series, run_dir / f"trajectory_{k:03d}", names=names,
                                       node_labels=node_labels, coords=section["coords"],
                                       formats=section["formats"])
        return self._finish(run_dir, "plot", {"files": [p.name for p in files]})

