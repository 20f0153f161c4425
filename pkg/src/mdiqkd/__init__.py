"""Finite-key analysis of measurement-device-independent QKD with decoy states."""
from .analytic import AnalyticEps
from .channel import ChannelParams
from .keyrate import SecurityBudget
from .optimizer import RatePoint, SearchSpace, Settings, evaluate_rate, optimize, sweep
from .protocol import ObservationBlock, ProtocolConfig, YieldEstimates

__version__ = "0.1.0"
__all__ = ["AnalyticEps", "ChannelParams", "ObservationBlock", "ProtocolConfig", "RatePoint", "SearchSpace",
           "SecurityBudget", "Settings", "YieldEstimates", "evaluate_rate", "optimize", "sweep"]
