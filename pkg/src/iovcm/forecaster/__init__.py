"""Recurrent congestion forecasters: stacked LSTM and a tanh-RNN baseline."""

from .cells import GateTrace, LstmCellState, LstmLayerParams, RnnLayerParams, cell_forward
from .metrics import accuracy, rmse, rmspe
from .network import StackedLstm, VanillaRnn, backward, count_params, forward_sequence
from .training import Forecaster, TrainConfig, predict, predict_many, train

__all__ = [
    "GateTrace", "LstmCellState", "LstmLayerParams", "RnnLayerParams", "cell_forward",
    "accuracy", "rmse", "rmspe",
    "StackedLstm", "VanillaRnn", "backward", "count_params", "forward_sequence",
    "Forecaster", "TrainConfig", "predict", "predict_many", "train",
]
