"""
Experiments
Configured sweeps, regime studies and the command-line surface
"""

from .config import ExperimentConfig, load_config
from .regime_study import RegimeAnalyzer, RegimeReport, run_regime_study
from .sweep_engine import RateReport, TheoremSweepEngine, run_theorem1_sweep

__all__ = ['ExperimentConfig', 'load_config', 'RegimeAnalyzer', 'RegimeReport',
           'run_regime_study', 'RateReport', 'TheoremSweepEngine', 'run_theorem1_sweep']
