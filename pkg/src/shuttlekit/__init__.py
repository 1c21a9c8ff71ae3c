"""Deterministic shuttlecock flight toolkit.

Drag-model trajectory simulation, corpus generation for learned predictors,
EKF intercept prediction, racket contact, reward reference math, rally
simulation, and a streaming prediction service.
"""

from ._kernels import get_backend
from .config import ConfigError, RunConfig, derive_seed, load_config
from .contact import HitQuality, RacketState, hit_quality, reflect
from .corpus import (
    CorpusRecord,
    HitZone,
    LaunchRanges,
    TargetTuple,
    generate_corpus,
    read_corpus_jsonl,
    write_corpus_jsonl,
)
from .dynamics import (
    DEFAULT_DT,
    DEFAULT_MAX_TIME,
    AeroParams,
    NonTermination,
    ShuttleState,
    Trajectory,
    accel,
    drag_jacobian,
    simulate,
    step,
)
from .estimator import (
    EkfTrack,
    InterceptPrediction,
    evaluate_predictor,
    predict_intercept,
    track_feed,
    track_init_pair,
)
from .rally import (
    CourtSpec,
    OracleHitter,
    RallyOutcome,
    build_serve,
    default_hitter,
    rally_length_sweep,
    simulate_rally,
)
from .rewards import (
    StageWeights,
    SwingSigmas,
    r_hold,
    r_swing,
    r_track,
    r_v,
    r_y_align,
    sigma_schedule,
)
from .stream import PredictionSession, SessionConfig, StreamServer, replay

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "get_backend",
    # dynamics
    "AeroParams",
    "ShuttleState",
    "Trajectory",
    "NonTermination",
    "accel",
    "drag_jacobian",
    "step",
    "simulate",
    "DEFAULT_DT",
    "DEFAULT_MAX_TIME",
    # corpus
    "LaunchRanges",
    "HitZone",
    "TargetTuple",
    "CorpusRecord",
    "generate_corpus",
    "write_corpus_jsonl",
    "read_corpus_jsonl",
    # estimator
    "EkfTrack",
    "InterceptPrediction",
    "track_init_pair",
    "track_feed",
    "predict_intercept",
    "evaluate_predictor",
    # contact
    "RacketState",
    "HitQuality",
    "reflect",
    "hit_quality",
    # rewards
    "SwingSigmas",
    "StageWeights",
    "r_track",
    "r_v",
    "r_swing",
    "r_y_align",
    "r_hold",
    "sigma_schedule",
    # rally
    "CourtSpec",
    "OracleHitter",
    "RallyOutcome",
    "default_hitter",
    "build_serve",
    "simulate_rally",
    "rally_length_sweep",
    # stream
    "SessionConfig",
    "PredictionSession",
    "StreamServer",
    "replay",
    # config
    "ConfigError",
    "RunConfig",
    "load_config",
    "derive_seed",
]
