"""Synthetic 6DoF scene generation."""

from .clips import CENTER_HZ, spectral_centroid, synth_event_clip
from .dataset import gen_split, load_manifest, plan_scenes
from .render import (MIC_LAYOUT, SNR_CHOICES, T60_CHOICES, SceneConfig,
                     SceneRender, labels_for_source, render,
                     render_point_source)
from .trajectory import MOVE_RADIUS, PROFILES, gen_trajectory

__all__ = [
    "CENTER_HZ", "MIC_LAYOUT", "MOVE_RADIUS", "PROFILES", "SNR_CHOICES",
    "T60_CHOICES", "SceneConfig", "SceneRender", "gen_split", "gen_trajectory",
    "labels_for_source", "load_manifest", "plan_scenes", "render",
    "render_point_source", "spectral_centroid", "synth_event_clip",
]
