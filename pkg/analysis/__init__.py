# 预测、分布外检测、重组、引导与边类型读出
from .edge_types import edge_latents, edge_type_accuracy
from .forecasting import ForecastReport, evaluate_forecast, forecast, mse_at, static_baseline
from .ood import OODReport, classify, evaluate_ood, fit_threshold, node_energy_scores
from .recombination import potential_gradients, recombine
from .steering import SteeringMetrics, steer, steering_sweep
