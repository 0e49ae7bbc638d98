"""Bio-adaptive pentatonic music pipeline.

Thin wrapper over the native ``_biomusic`` module: structured values are
plain dicts, audio is WAV bytes.
"""

import json as _json

from . import _biomusic
from ._biomusic import (  # noqa: F401
    DegenerateSignalError,
    InsufficientDataError,
    IoError,
    LogFormatError,
    NoPeakError,
    ValidationError,
    beat_period_bpm,
    decode_wav,
    simulate,
)

__all__ = [
    "simulate",
    "track_vitals",
    "user_state",
    "plan",
    "validate_plan",
    "generate",
    "classify",
    "render_wav",
    "decode_wav",
    "beat_period_bpm",
    "default_session_config",
    "run_session",
    "replay",
    "eval_tonal",
    "eval_vitals",
]


def _dump(value):
    return value if isinstance(value, str) else _json.dumps(value)


def track_vitals(samples, sample_rate_hz, window_s=30.0, hop_s=5.0, estimator="fft"):
    """One dict per window: t0, t1, hr_bpm, rr_rpm, hr_conf, rr_conf."""
    return _json.loads(_biomusic.track_vitals(list(samples), sample_rate_hz, window_s, hop_s, estimator))


def user_state(hr_bpm, rr_rpm, time, temp_c=22.0, status="resting", prev_instruments=()):
    return _json.loads(_biomusic.user_state(hr_bpm, rr_rpm, time, temp_c, status, list(prev_instruments)))


def plan(state, seed=0, prev_plan=None):
    """Rule plan for a user-state dict: plan fields, trace lines, reasoning and prompt."""
    prev = None if prev_plan is None else _dump(prev_plan)
    return _json.loads(_biomusic.plan(_dump(state), seed, prev))


def validate_plan(candidate):
    return _json.loads(_biomusic.validate_plan(_dump(candidate)))


def generate(plan, bars=4, seed=0, condition="embedded", bias=0.5):
    """condition: 'embedded', 'soft' or 'none'."""
    return _json.loads(_biomusic.generate(_dump(plan), bars, seed, condition, bias))


def classify(melody):
    return _json.loads(_biomusic.classify(_dump(melody)))


def render_wav(melody, instrument="guzheng", tempo_bpm=None):
    return _biomusic.render_wav(_dump(melody), instrument, tempo_bpm)


def default_session_config():
    return _json.loads(_biomusic.default_session_config())


def run_session(config, duration_s=0.0):
    """Returns (events, segments): event dicts and {segment id: WAV bytes}."""
    log, segments = _biomusic.run_session(_dump(config), duration_s)
    return [_json.loads(line) for line in log.splitlines()], segments


def replay(log_text):
    """Parses a JSONL session log; raises LogFormatError on a corrupt line."""
    return [_json.loads(line) for line in _biomusic.replay(log_text).splitlines()]


def eval_tonal(n=1000, seed=7):
    return _json.loads(_biomusic.eval_tonal(n, seed))


def eval_vitals(estimator="fft", seed=7):
    return _json.loads(_biomusic.eval_vitals(estimator, seed))
