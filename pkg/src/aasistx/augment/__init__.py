from .codec import (CODEC_PROB, CODECS, CodecDraw, ExternalMP3, SimulatedMP3, apply_codec_corruption,
                    draw_codec, make_backend)
from .effects import EffectDraw, apply_effect_chain, draw_effects, peak_normalize, pitch_shift
from .rawboost import RawBoostParams, rawboost
from .schedule import AugmentationConfigError, AugmentationSchedule, AugmentationState, schedule_at

__all__ = [
    "CODEC_PROB", "CODECS", "CodecDraw", "ExternalMP3", "SimulatedMP3", "apply_codec_corruption",
    "draw_codec", "make_backend", "EffectDraw", "apply_effect_chain", "draw_effects", "peak_normalize",
    "pitch_shift", "RawBoostParams", "rawboost", "AugmentationConfigError", "AugmentationSchedule",
    "AugmentationState", "schedule_at",
]
